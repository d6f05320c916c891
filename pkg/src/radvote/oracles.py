"""Independent reference implementations for the selftest.

These deliberately avoid the production code paths: the rasterizer oracles
scan every voxel of the grid with vectorized numpy geometry tests, and the
transform oracle solves absolute orientation with the quaternion
eigen-decomposition instead of an SVD. They are slow and only suitable for
small grids.
"""

from __future__ import annotations

import numpy as np

from .accumulator import AccumulatorGrid

__all__ = [
    "sphere_voxels_oracle",
    "ray_voxels_oracle",
    "horn_quaternion_oracle",
    "add_oracle",
    "adds_oracle",
    "auc_oracle",
]


def _axis_centers(grid: AccumulatorGrid):
    nx, ny, nz = grid.dims
    rho = grid.resolution
    cx = grid.origin[0] + (np.arange(nx) + 0.5) * rho
    cy = grid.origin[1] + (np.arange(ny) + 0.5) * rho
    cz = grid.origin[2] + (np.arange(nz) + 0.5) * rho
    return cx, cy, cz


def sphere_voxels_oracle(grid: AccumulatorGrid, center: np.ndarray, radius: float) -> np.ndarray:
    """Boolean (nz, ny, nx) mask of the one-voxel-thick discrete sphere:
    voxel centers with max(r - rho/2, 0)^2 <= d^2 < (r + rho/2)^2,
    via an exhaustive scan of every voxel."""
    h = 0.5 * grid.resolution
    cxs, cys, czs = _axis_centers(grid)
    dx2 = (cxs - center[0]) ** 2
    dy2 = (cys - center[1]) ** 2
    dz2 = (czs - center[2]) ** 2
    hiv = float(radius) + h
    lov = max(float(radius) - h, 0.0)
    d2 = dz2[:, None, None] + dy2[None, :, None] + dx2[None, None, :]
    return (d2 >= lov * lov) & (d2 < hiv * hiv)


def ray_voxels_oracle(grid: AccumulatorGrid, start: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Boolean mask of voxels whose closed box intersects the half-line
    start + t * direction, t >= 0 (per-voxel slab test)."""
    nx, ny, nz = grid.dims
    rho = grid.resolution
    p = np.asarray(start, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    near_parts = []
    far_parts = []
    shapes = [(1, 1, nx), (1, ny, 1), (nz, 1, 1)]
    for a, n in enumerate((nx, ny, nz)):
        lo = grid.origin[a] + np.arange(n) * rho
        hi = lo + rho
        if d[a] != 0.0:
            t1 = (lo - p[a]) / d[a]
            t2 = (hi - p[a]) / d[a]
            near = np.minimum(t1, t2)
            far = np.maximum(t1, t2)
        else:
            inside = (p[a] >= lo) & (p[a] <= hi)
            near = np.where(inside, -np.inf, np.inf)
            far = np.where(inside, np.inf, -np.inf)
        near_parts.append(near.reshape(shapes[a]))
        far_parts.append(far.reshape(shapes[a]))
    t_near = np.maximum(np.maximum(near_parts[0], near_parts[1]), near_parts[2])
    t_far = np.minimum(np.minimum(far_parts[0], far_parts[1]), far_parts[2])
    return (t_far >= np.maximum(t_near, 0.0)) & (t_far >= 0.0)


def horn_quaternion_oracle(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Absolute orientation via the unit-quaternion eigenvector method.

    Returns (R, t) minimizing sum ||R src_i + t - dst_i||^2.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    a = src - cs
    b = dst - cd
    S = a.T @ b
    sxx, sxy, sxz = S[0]
    syx, syy, syz = S[1]
    szx, szy, szz = S[2]
    N = np.array(
        [
            [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
            [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
            [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
            [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
        ]
    )
    w, v = np.linalg.eigh(N)
    q = v[:, -1]  # eigenvector of the largest eigenvalue
    q0, q1, q2, q3 = q
    R = np.array(
        [
            [q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3, 2 * (q1 * q2 - q0 * q3), 2 * (q1 * q3 + q0 * q2)],
            [2 * (q2 * q1 + q0 * q3), q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3, 2 * (q2 * q3 - q0 * q1)],
            [2 * (q3 * q1 - q0 * q2), 2 * (q3 * q2 + q0 * q1), q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3],
        ]
    )
    t = cd - R @ cs
    return R, t


def add_oracle(model_points: np.ndarray, gt, est) -> float:
    """Naive-loop ADD: mean corresponded-point distance."""
    total = 0.0
    for x in model_points:
        total += float(np.linalg.norm(gt.apply(x[None, :])[0] - est.apply(x[None, :])[0]))
    return total / len(model_points)


def adds_oracle(model_points: np.ndarray, gt, est) -> float:
    """Naive double-loop ADD-S: mean closest-point distance."""
    a = gt.apply(model_points)
    b = est.apply(model_points)
    total = 0.0
    for x in a:
        total += float(np.sqrt(((b - x) ** 2).sum(axis=1)).min())
    return total / len(a)


def auc_oracle(distances, max_threshold: float, samples: int = 10_000) -> float:
    """Numerically integrated accuracy-vs-threshold curve on a fine grid."""
    d = np.asarray(distances, dtype=np.float64)
    taus = np.linspace(0.0, max_threshold, samples + 1)
    acc = (d[None, :] < taus[:, None]).mean(axis=1)
    return float(np.trapezoid(acc, taus) / max_threshold)
