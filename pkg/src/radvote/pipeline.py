"""Keypoint localization -> pose recovery -> evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .accumulator import AccumulatorGrid, VoteStats, build_grid, cast_votes, find_peak
from .errors import ParameterError, SizeMismatchError
from .geometry import KeypointSet, PointCloud, RigidTransform, horn_solve
from .votemaps import DepthFrame, SchemeKind, VoteMap

__all__ = [
    "PoseEstimate",
    "EvalReport",
    "estimate_keypoints",
    "recover_pose",
    "add_metric",
    "adds_metric",
    "accuracy_at_threshold",
    "auc_metric",
]

# brute-force NN below this model size, spatial index above; results identical
_ADDS_TREE_CUTOVER = 5000


@dataclass
class PoseEstimate:
    pose: RigidTransform
    per_keypoint_error: np.ndarray
    scheme: SchemeKind
    refined_with_icp: bool = False

    def __post_init__(self):
        self.per_keypoint_error = np.asarray(self.per_keypoint_error, dtype=np.float64)
        if np.any(self.per_keypoint_error < 0):
            raise ParameterError("keypoint errors must be non-negative")


@dataclass
class EvalReport:
    add_values: list[float] = field(default_factory=list)
    accuracy_at_threshold: float = 0.0
    auc: float = 0.0
    mean_kp_error: float = 0.0
    std_kp_error: float = 0.0


def estimate_keypoints(
    frame: DepthFrame,
    maps: list[VoteMap],
    resolution: float,
    pad_mm: float | None = None,
    min_maps: int = 3,
) -> tuple[list[np.ndarray], list[VoteStats]]:
    """Per keypoint map: build a grid over the frame's scene points, cast the
    votes, take the accumulator peak. Returns camera-frame estimates plus
    per-map vote statistics.

    pad_mm pads the grid beyond the scene bounding box; it defaults to the
    largest distance the map values can imply (radial / offset) so vote
    targets stay inside the grid.
    """
    if len(maps) < min_maps:
        raise SizeMismatchError(f"need at least {min_maps} keypoint maps, got {len(maps)}")
    scene = frame.cloud()
    if pad_mm is None:
        pad = 0.0
        for m in maps:
            vals = m.values[m.mask & frame.valid]
            if vals.size == 0:
                continue
            if m.scheme is SchemeKind.RADIAL:
                pad = max(pad, float(vals[:, 0].max()))
            elif m.scheme is SchemeKind.OFFSET:
                pad = max(pad, float(np.linalg.norm(vals, axis=1).max()))
            else:
                # direction maps carry no range; fall back to the scene diagonal
                ext = scene.points.max(axis=0) - scene.points.min(axis=0)
                pad = max(pad, float(np.linalg.norm(ext)))
        pad_mm = pad + 2 * resolution
    estimates = []
    stats = []
    for m in maps:
        grid = build_grid(scene, pad_mm, resolution)
        st = cast_votes(grid, m, frame)
        peak = find_peak(grid)
        estimates.append(peak.location)
        stats.append(st)
    return estimates, stats


def recover_pose(object_keypoints: KeypointSet, estimated: list[np.ndarray]) -> RigidTransform:
    """Closed-form pose from object-frame keypoints and their camera-frame
    estimates, corresponded by index."""
    object_keypoints.require_pose_ready()
    est = np.asarray(estimated, dtype=np.float64).reshape(-1, 3)
    if est.shape[0] != len(object_keypoints):
        raise SizeMismatchError("keypoint counts differ")
    return horn_solve(object_keypoints.keypoints, est)


def add_metric(model: PointCloud, gt: RigidTransform, est: RigidTransform) -> float:
    """Mean corresponded-point distance between the two posed models (mm)."""
    a = gt.apply(model.points)
    b = est.apply(model.points)
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def adds_metric(model: PointCloud, gt: RigidTransform, est: RigidTransform) -> float:
    """Mean closest-point distance from the gt-posed model to the est-posed
    model (mm); the symmetric-object-tolerant variant."""
    a = gt.apply(model.points)
    b = est.apply(model.points)
    if len(model) > _ADDS_TREE_CUTOVER:
        d, _ = cKDTree(b).query(a, k=1)
        return float(np.mean(d))
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(np.sqrt(d2.min(axis=1))))


def accuracy_at_threshold(values, object_radius: float, fraction: float = 0.10) -> float:
    """Share of metric values strictly below fraction x object radius."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ParameterError("no metric values")
    if fraction <= 0:
        raise ParameterError("fraction must be positive")
    return float(np.mean(vals < fraction * object_radius))


def auc_metric(add_values, max_threshold: float = 100.0) -> float:
    """Area under the accuracy-vs-threshold curve over [0, max_threshold],
    normalized to [0, 1]; exact step-function integral of the empirical CDF."""
    if max_threshold <= 0:
        raise ParameterError("max_threshold must be positive")
    d = np.asarray(add_values, dtype=np.float64)
    if d.size == 0:
        raise ParameterError("no metric values")
    return float(np.mean(np.clip(max_threshold - d, 0.0, None)) / max_threshold)
