"""Core 3D types, camera back-projection, keypoint selection, and
rigid-transform estimation.

All coordinates are millimeters in the camera or object frame; points are
float64 numpy arrays of shape (3,) and point sets are (N, 3).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateGeometryError,
    InvalidDepthError,
    ParameterError,
    RankError,
    SizeMismatchError,
)

__all__ = [
    "Pixel",
    "CameraIntrinsics",
    "RigidTransform",
    "PointCloud",
    "SelectionMethod",
    "KeypointSet",
    "backproject",
    "project",
    "fps_keypoints",
    "bbox_keypoints",
    "corner_subset_indices",
    "choose_corner_subset",
    "disperse_keypoints",
    "object_radius",
    "horn_solve",
    "icp_refine",
]


@dataclass(frozen=True)
class Pixel:
    """Integer image coordinate with its depth in mm (0 or NaN = invalid)."""

    u: int
    v: int
    depth: float = 0.0


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ParameterError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ParameterError("principal point must lie inside the image")


class SelectionMethod(Enum):
    FPS = "fps"
    SCALED_BBOX = "scaled_bbox"


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation mapping object-frame points into the camera frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if R.shape != (3, 3):
            raise ParameterError("rotation must be 3x3")
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise ParameterError("transform components must be finite")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-9:
            raise ParameterError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ParameterError("rotation determinant is not +1 within 1e-9")

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply `other` first, then `self`."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


@dataclass
class PointCloud:
    """Dense 3D point set in mm, optionally with per-point unit normals."""

    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise DegenerateGeometryError("point cloud must be a non-empty (N, 3) array")
        if not np.all(np.isfinite(pts)):
            raise DegenerateGeometryError("point cloud contains non-finite coordinates")
        self.points = pts
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(pts.shape)

    def __len__(self) -> int:
        return self.points.shape[0]

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass
class KeypointSet:
    """Ordered object-frame keypoints plus how they were selected.

    dispersion_scale is in object-radius units; 1.0 means at-or-inside the
    surface envelope.
    """

    keypoints: np.ndarray
    selection_method: SelectionMethod
    dispersion_scale: float = 1.0

    def __post_init__(self):
        kps = np.asarray(self.keypoints, dtype=np.float64)
        if kps.ndim != 2 or kps.shape[1] != 3 or kps.shape[0] == 0:
            raise DegenerateGeometryError("keypoints must be a non-empty (K, 3) array")
        self.keypoints = kps
        if self.dispersion_scale < 1.0:
            raise ParameterError("dispersion_scale must be >= 1")

    def __len__(self) -> int:
        return self.keypoints.shape[0]

    def require_pose_ready(self):
        """Validate the invariants needed to recover a unique rigid transform.

        Selection helpers may legitimately return fewer than 3 points
        (e.g. fps with k=2); pose recovery cannot.
        """
        if len(self) < 3:
            raise SizeMismatchError("pose recovery needs at least 3 keypoints")
        centered = self.keypoints - self.keypoints.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[-2] <= 1e-6 * sv[0]:
            raise RankError("keypoints are collinear")


# -- camera model -------------------------------------------------------------

def backproject(pixel: Pixel, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Lift a depth pixel to its camera-frame 3D point (mm)."""
    d = pixel.depth
    if not np.isfinite(d) or d <= 0:
        raise InvalidDepthError(f"invalid depth {d!r} at pixel ({pixel.u}, {pixel.v})")
    return np.array(
        [
            (pixel.u - intrinsics.cx) * d / intrinsics.fx,
            (pixel.v - intrinsics.cy) * d / intrinsics.fy,
            d,
        ]
    )


def project(point: np.ndarray, intrinsics: CameraIntrinsics) -> tuple[float, float]:
    """Project a camera-frame point to continuous pixel coordinates."""
    x, y, z = point
    if z <= 0:
        raise InvalidDepthError("cannot project a point at or behind the camera")
    return (intrinsics.fx * x / z + intrinsics.cx, intrinsics.fy * y / z + intrinsics.cy)


def backproject_grid(depth: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Vectorized back-projection of a full (H, W) depth image.

    Returns an (H, W, 3) array; entries with invalid depth are zero.
    """
    h, w = depth.shape
    us = np.arange(w, dtype=np.float64)
    vs = np.arange(h, dtype=np.float64)
    d = np.where(np.isfinite(depth) & (depth > 0), depth, 0.0)
    out = np.empty((h, w, 3))
    out[..., 0] = (us[None, :] - intrinsics.cx) * d / intrinsics.fx
    out[..., 1] = (vs[:, None] - intrinsics.cy) * d / intrinsics.fy
    out[..., 2] = d
    return out


# -- keypoint selection -------------------------------------------------------

def fps_keypoints(cloud: PointCloud, k: int, seed_index: int | None = None) -> KeypointSet:
    """Greedy farthest-point sampling: each new point maximizes its minimum
    distance to the already-chosen set.

    seed_index defaults to the point farthest from the cloud centroid, which
    keeps selection deterministic. Distance ties break on the smaller index.
    """
    pts = cloud.points
    n = len(cloud)
    if k > n:
        raise SizeMismatchError(f"requested {k} keypoints from a {n}-point cloud")
    if k < 1:
        raise ParameterError("k must be >= 1")
    if seed_index is None:
        seed_index = int(np.argmax(np.linalg.norm(pts - cloud.centroid(), axis=1)))
    if not (0 <= seed_index < n):
        raise ParameterError(f"seed_index {seed_index} out of range")

    chosen = [seed_index]
    min_d2 = np.sum((pts - pts[seed_index]) ** 2, axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(min_d2))  # argmax returns the first (smallest) index on ties
        chosen.append(nxt)
        min_d2 = np.minimum(min_d2, np.sum((pts - pts[nxt]) ** 2, axis=1))
    return KeypointSet(pts[chosen], SelectionMethod.FPS, 1.0)


def bbox_keypoints(cloud: PointCloud, scale: float = 1.0) -> KeypointSet:
    """The 8 corners of the cloud's axis-aligned bounding box, scaled about
    the box center. Corner order: index bits 0/1/2 select max on x/y/z."""
    if scale < 1.0:
        raise ParameterError("scale must be >= 1")
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    if np.any(hi - lo <= 0):
        raise DegenerateGeometryError("cloud has zero extent on some axis")
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0 * scale
    # corner i takes the +half side on axis a where bit a of i is set
    corners = np.empty((8, 3))
    for i in range(8):
        sign = np.array([1.0 if (i >> a) & 1 else -1.0 for a in range(3)])
        corners[i] = center + sign * half
    return KeypointSet(corners, SelectionMethod.SCALED_BBOX, max(scale, 1.0))


def corner_subset_indices(corners: KeypointSet, k: int) -> tuple[int, ...]:
    """Indices of the k corners maximizing the smallest pairwise distance.

    Exhaustive over C(n, k); ties break on the lexicographically-first index
    tuple, so the choice is deterministic.
    """
    kps = corners.keypoints
    n = len(corners)
    if k > n:
        raise SizeMismatchError(f"cannot pick {k} of {n} corners")
    if k == n:
        return tuple(range(n))
    best: tuple[int, ...] | None = None
    best_d = -1.0
    for combo in itertools.combinations(range(n), k):
        sub = kps[list(combo)]
        d = np.min(
            [np.linalg.norm(sub[i] - sub[j]) for i in range(k) for j in range(i + 1, k)]
        )
        if d > best_d + 1e-12:
            best_d = d
            best = combo
    assert best is not None
    return best


def choose_corner_subset(corners: KeypointSet, k: int) -> KeypointSet:
    """The k-corner subset selected by corner_subset_indices."""
    idx = corner_subset_indices(corners, k)
    return KeypointSet(corners.keypoints[list(idx)], corners.selection_method,
                       corners.dispersion_scale)


def object_radius(cloud: PointCloud) -> float:
    """Max distance from the model centroid to any model point (mm)."""
    return float(np.linalg.norm(cloud.points - cloud.centroid(), axis=1).max())


def disperse_keypoints(
    kps: KeypointSet, centroid: np.ndarray, target_scale: float, obj_radius: float
) -> KeypointSet:
    """Slide each keypoint along its ray from the centroid so that it sits at
    target_scale x object radius; directions are preserved."""
    if target_scale <= 0:
        raise ParameterError("target_scale must be positive")
    if obj_radius <= 0:
        raise ParameterError("object radius must be positive")
    rel = kps.keypoints - np.asarray(centroid, dtype=np.float64)
    norms = np.linalg.norm(rel, axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateGeometryError("keypoint coincides with the centroid")
    moved = centroid + rel / norms[:, None] * (target_scale * obj_radius)
    return KeypointSet(moved, kps.selection_method, max(target_scale, 1.0))


# -- rigid-transform estimation ------------------------------------------------

def horn_solve(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Closed-form least-squares rigid transform R, t minimizing
    sum ||R src_i + t - dst_i||^2.

    Rotation from the SVD of the centered cross-covariance with determinant
    correction (reflection guard).
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise SizeMismatchError(f"src {src.shape} vs dst {dst.shape}")
    if src.shape[0] < 3:
        raise SizeMismatchError("need at least 3 correspondences")
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    a = src - cs
    b = dst - cd
    sv_src = np.linalg.svd(a, compute_uv=False)
    if sv_src[1] <= 1e-9 * max(sv_src[0], 1e-300):
        raise RankError("source points are collinear")
    H = a.T @ b
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    # re-orthonormalize to keep the RigidTransform invariant at 1e-9 even
    # when the SVD of a nearly-degenerate H is slightly off
    Ur, _, Vtr = np.linalg.svd(R)
    R = Ur @ Vtr
    if np.linalg.det(R) < 0:
        Ur[:, -1] *= -1.0
        R = Ur @ Vtr
    t = cd - R @ cs
    return RigidTransform(R, t)


def mean_residual(model: PointCloud, scene: PointCloud, pose: RigidTransform,
                  tree: cKDTree | None = None) -> float:
    """Mean nearest-neighbor distance from the posed model to the scene."""
    if tree is None:
        tree = cKDTree(scene.points)
    d, _ = tree.query(pose.apply(model.points), k=1)
    return float(np.mean(d))


def icp_refine(
    model: PointCloud,
    scene: PointCloud,
    init: RigidTransform,
    max_iters: int = 50,
    tol: float = 1e-4,
    max_correspondence_mm: float | None = None,
) -> RigidTransform:
    """Point-to-point ICP: alternate nearest-neighbor correspondence and
    horn_solve until the mean residual change drops below tol.

    The returned pose never has a larger mean residual than `init`
    (the best-seen pose is kept). When max_correspondence_mm is set, pairs
    farther than the gate are dropped from the update (they still count in
    the reported residual).
    """
    if len(model) == 0 or len(scene) == 0:
        raise SizeMismatchError("icp needs non-empty clouds")
    tree = cKDTree(scene.points)
    pose = init
    best_pose = init
    best_res = mean_residual(model, scene, init, tree)
    prev_res = best_res
    for _ in range(max_iters):
        moved = pose.apply(model.points)
        d, idx = tree.query(moved, k=1)
        if max_correspondence_mm is not None:
            keep = d <= max_correspondence_mm
            if keep.sum() < 3:
                break
        else:
            keep = slice(None)
        try:
            step = horn_solve(model.points[keep], scene.points[idx][keep])
        except RankError:
            break
        pose = step
        res = float(np.mean(tree.query(pose.apply(model.points), k=1)[0]))
        if res < best_res:
            best_res = res
            best_pose = pose
        if abs(prev_res - res) < tol:
            break
        prev_res = res
    return best_pose
