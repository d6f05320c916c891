"""Procedurally generated stand-in objects and synthetic RGB-D frames.

Three surface-sampled shapes with configurable circumradius (max distance
from centroid, mm) cover the small / large / mid size classes used by the
benchmark experiments: a sphere shell, a flat box shell, and an L-bracket.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .geometry import CameraIntrinsics, PointCloud, RigidTransform
from .votemaps import DepthFrame, render_depth

__all__ = [
    "sphere_shell",
    "ellipsoid_shell",
    "box_shell",
    "l_bracket",
    "make_object",
    "OBJECT_RADII",
    "default_intrinsics",
    "random_pose",
    "synth_frame",
    "occlude_mask",
]

# circumradii chosen to span small / large / mid object scales (mm)
OBJECT_RADII = {"ellipsoid61": 61.2, "bracket129": 129.4, "box83": 82.5}


def sphere_shell(radius: float, n: int = 1500) -> PointCloud:
    """Fibonacci-spiral sampling of a sphere surface."""
    if radius <= 0 or n < 4:
        raise ParameterError("need positive radius and n >= 4")
    i = np.arange(n, dtype=np.float64)
    golden = (1 + 5 ** 0.5) / 2
    z = 1 - (2 * i + 1) / n
    theta = 2 * np.pi * i / golden
    s = np.sqrt(1 - z * z)
    pts = radius * np.stack([s * np.cos(theta), s * np.sin(theta), z], axis=1)
    return PointCloud(pts)


def ellipsoid_shell(circumradius: float, n: int = 1500,
                    axes: tuple[float, float, float] = (1.0, 0.55, 0.38)) -> PointCloud:
    """Ellipsoid surface with the major semi-axis equal to circumradius."""
    base = sphere_shell(circumradius, n)
    scale = np.asarray(axes, dtype=np.float64) / max(axes)
    return PointCloud(base.points * scale)


def _box_surface(half: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Area-weighted uniform sampling of an axis-aligned box surface."""
    a, b, c = half
    areas = np.array([b * c, a * c, a * b]) * 8.0  # pairs of faces
    probs = areas / areas.sum()
    axis = rng.choice(3, size=n, p=probs)
    side = rng.choice([-1.0, 1.0], size=n)
    u = rng.uniform(-1, 1, n)
    v = rng.uniform(-1, 1, n)
    pts = np.empty((n, 3))
    for ax in range(3):
        m = axis == ax
        o1, o2 = [a_ for a_ in range(3) if a_ != ax]
        pts[m, ax] = side[m] * half[ax]
        pts[m, o1] = u[m] * half[o1]
        pts[m, o2] = v[m] * half[o2]
    return pts


def box_shell(circumradius: float, n: int = 1500, seed: int = 7,
              proportions: tuple[float, float, float] = (1.0, 0.62, 0.34)) -> PointCloud:
    """Flat box surface scaled so the corner distance equals circumradius."""
    if circumradius <= 0:
        raise ParameterError("circumradius must be positive")
    half = np.asarray(proportions, dtype=np.float64)
    half = half / np.linalg.norm(half) * circumradius
    rng = np.random.default_rng(seed)
    pts = _box_surface(half, n, rng)
    return PointCloud(pts - pts.mean(axis=0))


def l_bracket(circumradius: float, n: int = 1500, seed: int = 11) -> PointCloud:
    """Two orthogonal slabs forming an L, rescaled to the target circumradius."""
    if circumradius <= 0:
        raise ParameterError("circumradius must be positive")
    rng = np.random.default_rng(seed)
    n1 = n * 3 // 5
    slab1 = _box_surface(np.array([1.0, 0.28, 0.16]), n1, rng)
    slab2 = _box_surface(np.array([0.16, 0.28, 0.60]), n - n1, rng)
    slab2 = slab2 + np.array([-0.84, 0.0, 0.60])
    pts = np.vstack([slab1, slab2])
    pts = pts - pts.mean(axis=0)
    r = np.linalg.norm(pts, axis=1).max()
    return PointCloud(pts * (circumradius / r))


def make_object(name: str, n: int = 1500) -> PointCloud:
    """Build a registered synthetic object by name."""
    if name == "ellipsoid61":
        return ellipsoid_shell(OBJECT_RADII[name], n)
    if name == "bracket129":
        return l_bracket(OBJECT_RADII[name], n)
    if name == "box83":
        return box_shell(OBJECT_RADII[name], n)
    raise ParameterError(f"unknown synthetic object {name!r}")


def default_intrinsics(width: int = 160, height: int = 120, focal: float = 150.0) -> CameraIntrinsics:
    return CameraIntrinsics(focal, focal, width / 2.0, height / 2.0, width, height)


def random_pose(rng: np.random.Generator, obj_radius: float,
                z_range: tuple[float, float] = (650.0, 900.0)) -> RigidTransform:
    """Random rotation (uniform Euler angles over the full circle) and a
    translation that keeps the object near the optical axis."""
    ax, ay, az = rng.uniform(0, 2 * np.pi, 3)
    cz_, sz_ = np.cos(az), np.sin(az)
    cy_, sy_ = np.cos(ay), np.sin(ay)
    cx_, sx_ = np.cos(ax), np.sin(ax)
    rz = np.array([[cz_, -sz_, 0], [sz_, cz_, 0], [0, 0, 1]])
    ry = np.array([[cy_, 0, sy_], [0, 1, 0], [-sy_, 0, cy_]])
    rx = np.array([[1, 0, 0], [0, cx_, -sx_], [0, sx_, cx_]])
    t = np.array([
        rng.uniform(-0.3, 0.3) * obj_radius,
        rng.uniform(-0.3, 0.3) * obj_radius,
        rng.uniform(*z_range),
    ])
    return RigidTransform(rz @ ry @ rx, t)


def synth_frame(
    model: PointCloud,
    pose: RigidTransform,
    intrinsics: CameraIntrinsics,
    render_points: int | None = None,
    rng: np.random.Generator | None = None,
) -> DepthFrame:
    """Render a (possibly subsampled) model into a synthetic depth frame.

    render_points caps how many model points are rasterized, which in turn
    bounds the number of voting pixels per frame.
    """
    pts = model.points
    if render_points is not None and render_points < len(pts):
        if rng is None:
            idx = np.linspace(0, len(pts) - 1, render_points).astype(np.int64)
        else:
            idx = rng.choice(len(pts), size=render_points, replace=False)
        pts = pts[idx]
    return render_depth(PointCloud(pts), pose, intrinsics)


def occlude_mask(mask: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Remove roughly `fraction` of the masked pixels with a half-plane cut
    through the mask centroid along a random direction."""
    if not (0.0 <= fraction < 1.0):
        raise ParameterError("occlusion fraction must be in [0, 1)")
    if fraction == 0.0 or not mask.any():
        return mask.copy()
    ys, xs = np.nonzero(mask)
    cy, cx = ys.mean(), xs.mean()
    ang = rng.uniform(0, 2 * np.pi)
    proj = (ys - cy) * np.sin(ang) + (xs - cx) * np.cos(ang)
    cut = np.quantile(proj, fraction)
    out = mask.copy()
    out[ys[proj <= cut], xs[proj <= cut]] = False
    return out
