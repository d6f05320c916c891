"""Per-pixel ground-truth scheme quantities, segmentation masks, map losses,
and the noise models that stand in for a learned regressor.

The four scheme quantities relate a scene point p (backprojected pixel) to a
keypoint k. With o = p - k:

    offset  -> o                       (3 channels, mm)
    vector  -> o / ||o||               (3 channels, unitless)
    polar   -> (acos(dz), atan2(dy,dx)) of the unit vector (2 channels, rad)
    radial  -> ||o||                   (1 channel, mm)

Note the sign: the stored unit vector points from the keypoint toward the
scene point, so vote casting must walk the opposite direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    DegenerateGeometryError,
    EmptyRenderError,
    ParameterError,
    SizeMismatchError,
)
from .geometry import CameraIntrinsics, KeypointSet, PointCloud, RigidTransform, backproject_grid

__all__ = [
    "SchemeKind",
    "VoteMap",
    "DepthFrame",
    "NoiseSpec",
    "NoiseKind",
    "compute_scheme_value",
    "render_depth",
    "generate_gt_maps",
    "apply_noise",
    "loss_s",
    "loss_m1",
    "polar_to_direction",
]


class SchemeKind(Enum):
    OFFSET = "offset"
    VECTOR = "vector"
    POLAR = "polar"
    RADIAL = "radial"

    @property
    def channel_depth(self) -> int:
        return {SchemeKind.OFFSET: 3, SchemeKind.VECTOR: 3,
                SchemeKind.POLAR: 2, SchemeKind.RADIAL: 1}[self]


@dataclass
class DepthFrame:
    """A depth image (mm, 0 = invalid) with the intrinsics that produced it."""

    depth: np.ndarray
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth.shape != (self.intrinsics.height, self.intrinsics.width):
            raise SizeMismatchError("depth shape does not match intrinsics")
        self._points = None

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.depth) & (self.depth > 0)

    def points(self) -> np.ndarray:
        """(H, W, 3) camera-frame points; invalid pixels are zero.

        Cached; treat the depth image as immutable once points() was called.
        """
        if self._points is None:
            self._points = backproject_grid(self.depth, self.intrinsics)
        return self._points

    def cloud(self) -> PointCloud:
        return PointCloud(self.points()[self.valid])


@dataclass
class VoteMap:
    """Per-pixel scheme values over a segmentation mask.

    values has shape (H, W, D) with D = scheme.channel_depth; entries outside
    the mask are zero and carry no meaning.
    """

    width: int
    height: int
    scheme: SchemeKind
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != (self.height, self.width, self.scheme.channel_depth):
            raise SizeMismatchError(
                f"values shape {self.values.shape} != "
                f"(H,W,D)=({self.height},{self.width},{self.scheme.channel_depth})"
            )
        if self.mask.shape != (self.height, self.width):
            raise SizeMismatchError("mask shape does not match the map")

    def validate(self):
        """Check the per-scheme value invariants on masked pixels."""
        vals = self.values[self.mask]
        if not np.all(np.isfinite(vals)):
            raise ParameterError("non-finite values inside the mask")
        if self.scheme is SchemeKind.RADIAL and np.any(vals < 0):
            raise ParameterError("radial values must be non-negative")
        if self.scheme is SchemeKind.VECTOR and vals.size:
            norms = np.linalg.norm(vals, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ParameterError("vector values must be unit norm within 1e-6")
        if self.scheme is SchemeKind.POLAR and vals.size:
            phi, psi = vals[:, 0], vals[:, 1]
            if np.any((phi < 0) | (phi > np.pi)) or np.any((psi <= -np.pi) | (psi > np.pi)):
                raise ParameterError("polar angles out of range")

    def copy(self) -> "VoteMap":
        return VoteMap(self.width, self.height, self.scheme,
                       self.values.copy(), self.mask.copy())


class NoiseKind(Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"


@dataclass
class NoiseSpec:
    """Per-channel regressor-error model.

    sigma: per-pixel std (Gaussian) or half-width (Uniform), in the
    channel's native unit. bias_sigma draws one offset per channel per map
    application, modeling the smooth systematic component that dominates a
    learned regressor's error field. value_scaled_sigma adds
    |value| * coefficient to the per-pixel magnitude, modeling error that
    grows with the regressed quantity. mask_flip_rate flips each mask bit
    independently.
    """

    kind: NoiseKind
    sigma: tuple[float, ...]
    mask_flip_rate: float = 0.0
    rng_seed: int = 0
    value_scaled_sigma: tuple[float, ...] | None = None
    bias_sigma: tuple[float, ...] | None = None

    def __post_init__(self):
        self.sigma = tuple(float(s) for s in np.atleast_1d(self.sigma))
        if any(s < 0 for s in self.sigma):
            raise ParameterError("noise magnitudes must be non-negative")
        if not (0.0 <= self.mask_flip_rate < 1.0):
            raise ParameterError("mask_flip_rate must be in [0, 1)")
        if self.value_scaled_sigma is not None:
            self.value_scaled_sigma = tuple(float(s) for s in self.value_scaled_sigma)
            if any(s < 0 for s in self.value_scaled_sigma):
                raise ParameterError("value-scaled magnitudes must be non-negative")
        if self.bias_sigma is not None:
            self.bias_sigma = tuple(float(s) for s in self.bias_sigma)
            if any(s < 0 for s in self.bias_sigma):
                raise ParameterError("bias magnitudes must be non-negative")

    def is_identity(self) -> bool:
        return (
            all(s == 0 for s in self.sigma)
            and self.mask_flip_rate == 0.0
            and (self.value_scaled_sigma is None or all(s == 0 for s in self.value_scaled_sigma))
            and (self.bias_sigma is None or all(s == 0 for s in self.bias_sigma))
        )


def compute_scheme_value(scheme: SchemeKind, point: np.ndarray, keypoint: np.ndarray) -> np.ndarray:
    """Scheme quantity for a single (scene point, keypoint) pair."""
    o = np.asarray(point, dtype=np.float64) - np.asarray(keypoint, dtype=np.float64)
    r = float(np.linalg.norm(o))
    if scheme is SchemeKind.OFFSET:
        return o
    if scheme is SchemeKind.RADIAL:
        return np.array([r])
    if r < 1e-12:
        raise DegenerateGeometryError("direction undefined: point coincides with keypoint")
    v = o / r
    if scheme is SchemeKind.VECTOR:
        return v
    phi = float(np.arccos(np.clip(v[2], -1.0, 1.0)))
    psi = float(np.arctan2(v[1], v[0]))
    return np.array([phi, psi])


def polar_to_direction(phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """(phi, psi) -> unit direction (sin phi cos psi, sin phi sin psi, cos phi)."""
    sp = np.sin(phi)
    return np.stack([sp * np.cos(psi), sp * np.sin(psi), np.cos(phi)], axis=-1)


def _scheme_values_bulk(scheme: SchemeKind, points: np.ndarray, keypoint: np.ndarray) -> np.ndarray:
    """Vectorized compute_scheme_value over an (N, 3) point array."""
    o = points - keypoint[None, :]
    r = np.linalg.norm(o, axis=1)
    if scheme is SchemeKind.OFFSET:
        return o
    if scheme is SchemeKind.RADIAL:
        return r[:, None]
    safe = np.maximum(r, 1e-300)
    v = o / safe[:, None]
    v[r < 1e-12] = np.array([0.0, 0.0, 1.0])  # arbitrary but in-range for degenerate pixels
    if scheme is SchemeKind.VECTOR:
        return v
    phi = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
    psi = np.arctan2(v[:, 1], v[:, 0])
    return np.stack([phi, psi], axis=1)


def render_depth(model: PointCloud, pose: RigidTransform, intrinsics: CameraIntrinsics) -> DepthFrame:
    """Render a point model into a z-buffered depth image (nearest point per
    pixel wins, 1-pixel footprint)."""
    cam = pose.apply(model.points)
    z = cam[:, 2]
    front = z > 0
    cam = cam[front]
    z = z[front]
    if cam.shape[0] == 0:
        raise EmptyRenderError("no model points in front of the camera")
    u = np.rint(intrinsics.fx * cam[:, 0] / z + intrinsics.cx).astype(np.int64)
    v = np.rint(intrinsics.fy * cam[:, 1] / z + intrinsics.cy).astype(np.int64)
    inside = (u >= 0) & (u < intrinsics.width) & (v >= 0) & (v < intrinsics.height)
    if not np.any(inside):
        raise EmptyRenderError("model projects outside the image")
    u, v, z = u[inside], v[inside], z[inside]
    depth = np.full((intrinsics.height, intrinsics.width), np.inf)
    # z-buffer: keep the nearest depth per pixel
    np.minimum.at(depth, (v, u), z)
    depth[~np.isfinite(depth)] = 0.0
    return DepthFrame(depth, intrinsics)


def generate_gt_maps(
    model: PointCloud,
    pose: RigidTransform,
    keypoints: KeypointSet,
    intrinsics: CameraIntrinsics,
    scheme: SchemeKind,
    frame: DepthFrame | None = None,
) -> list[VoteMap]:
    """Ground-truth vote maps, one per keypoint, over a shared rendered mask.

    Values are computed from the *backprojected* pixel points, so they are
    exactly consistent with what vote casting later recomputes from the same
    depth image. Pass a pre-rendered frame to share work across schemes.
    """
    if frame is None:
        frame = render_depth(model, pose, intrinsics)
    mask = frame.valid
    if not np.any(mask):
        raise EmptyRenderError("rendered frame has no valid pixels")
    pts = frame.points()[mask]
    cam_kps = pose.apply(keypoints.keypoints)
    h, w = mask.shape
    maps = []
    for kp in cam_kps:
        values = np.zeros((h, w, scheme.channel_depth))
        values[mask] = _scheme_values_bulk(scheme, pts, kp)
        maps.append(VoteMap(w, h, scheme, values, mask.copy()))
    return maps


def apply_noise(vmap: VoteMap, spec: NoiseSpec) -> VoteMap:
    """Perturb a map with independent per-channel noise on masked pixels.

    Vector maps are re-normalized, polar maps re-canonicalized through a
    direction round-trip, radial values clamped positive. Deterministic for
    a fixed rng_seed.
    """
    out = vmap.copy()
    if spec.is_identity():
        return out
    d = vmap.scheme.channel_depth
    sigma = np.broadcast_to(np.asarray(spec.sigma, dtype=np.float64), (d,))
    rng = np.random.default_rng(spec.rng_seed)

    idx = np.nonzero(out.mask)
    n = idx[0].size
    if n:
        vals = out.values[idx]
        scale = np.broadcast_to(sigma, (n, d)).copy()
        if spec.value_scaled_sigma is not None:
            vs = np.broadcast_to(np.asarray(spec.value_scaled_sigma, dtype=np.float64), (d,))
            scale = scale + np.abs(vals) * vs
        if spec.kind is NoiseKind.GAUSSIAN:
            noise = rng.standard_normal((n, d)) * scale
        else:
            noise = rng.uniform(-1.0, 1.0, (n, d)) * scale
        if spec.bias_sigma is not None:
            bs = np.broadcast_to(np.asarray(spec.bias_sigma, dtype=np.float64), (d,))
            if spec.kind is NoiseKind.GAUSSIAN:
                noise = noise + rng.standard_normal(d) * bs
            else:
                noise = noise + rng.uniform(-1.0, 1.0, d) * bs
        vals = vals + noise
        if vmap.scheme is SchemeKind.RADIAL:
            vals = np.maximum(vals, 1e-6)
        elif vmap.scheme is SchemeKind.VECTOR:
            norms = np.linalg.norm(vals, axis=1)
            norms = np.maximum(norms, 1e-12)
            vals = vals / norms[:, None]
        elif vmap.scheme is SchemeKind.POLAR:
            dirs = polar_to_direction(vals[:, 0], vals[:, 1])
            vals = np.stack(
                [np.arccos(np.clip(dirs[:, 2], -1.0, 1.0)),
                 np.arctan2(dirs[:, 1], dirs[:, 0])],
                axis=1,
            )
        out.values[idx] = vals
    if spec.mask_flip_rate > 0.0:
        flips = rng.random(out.mask.shape) < spec.mask_flip_rate
        out.mask = out.mask ^ flips
        newly_on = out.mask & ~vmap.mask
        if vmap.scheme is SchemeKind.RADIAL and np.any(newly_on):
            out.values[newly_on] = np.maximum(out.values[newly_on], 1e-6)
    return out


def loss_s(pred_mask: np.ndarray, gt_mask: np.ndarray) -> float:
    """Mean absolute segmentation error over all N pixels."""
    pred = np.asarray(pred_mask, dtype=np.float64)
    gt = np.asarray(gt_mask, dtype=np.float64)
    if pred.shape != gt.shape:
        raise SizeMismatchError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return float(np.mean(np.abs(pred - gt)))


def loss_m1(pred: VoteMap, gt: VoteMap) -> float:
    """Masked mean absolute map error: per-pixel channel-summed |pred - gt|,
    averaged over ground-truth mask pixels."""
    if pred.scheme is not gt.scheme:
        raise SizeMismatchError("maps use different schemes")
    if pred.values.shape != gt.values.shape:
        raise SizeMismatchError("map shapes differ")
    m = gt.mask
    denom = int(m.sum())
    if denom == 0:
        raise ParameterError("ground-truth mask is empty")
    num = np.abs(pred.values - gt.values).sum(axis=2)[m].sum()
    return float(num / denom)
