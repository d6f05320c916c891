"""The 3D accumulator: voxel grid construction, vote rasterization for all
four schemes, peak detection, ensemble merging, and the debug dump format.

counts is stored as a C-contiguous uint32 array of shape (nz, ny, nx), so a
flat numpy index is x-fastest; that same order is the tie-break rule for
peak detection and the payload order of the dump blob.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    DegenerateGeometryError,
    GridDumpError,
    GridMismatchError,
    NoPeakError,
    ParameterError,
)
from .geometry import PointCloud
from .votemaps import DepthFrame, SchemeKind, VoteMap, polar_to_direction

__all__ = [
    "AccumulatorGrid",
    "PeakResult",
    "VoteStats",
    "build_grid",
    "cast_offset_vote",
    "cast_ray_vote",
    "cast_sphere_vote",
    "cast_votes",
    "find_peak",
    "merge_grids",
    "dump_grid",
    "load_grid",
]

DUMP_MAGIC = b"RVG1"
_HUGE_INDEX = np.iinfo(np.int64).max


@dataclass
class VoteStats:
    """Bookkeeping for a cast_votes call."""

    votes_cast: int = 0
    votes_dropped: int = 0
    increments: int = 0
    wall_ms: float = 0.0

    def merge(self, other: "VoteStats") -> "VoteStats":
        return VoteStats(
            self.votes_cast + other.votes_cast,
            self.votes_dropped + other.votes_dropped,
            self.increments + other.increments,
            self.wall_ms + other.wall_ms,
        )


@dataclass
class PeakResult:
    location: np.ndarray
    count: int
    refined: bool


@dataclass
class AccumulatorGrid:
    """Axis-aligned integer voxel grid: origin is the min corner (mm),
    resolution is the voxel edge length (mm)."""

    origin: np.ndarray
    resolution: float
    dims: tuple[int, int, int]
    counts: np.ndarray = field(default=None)  # type: ignore[assignment]
    # cumulative cast statistics
    votes_cast: int = 0
    votes_dropped: int = 0
    increments: int = 0
    # online peak tracker; valid while every increment went through a kernel
    _best_count: int = 0
    _best_index: int = _HUGE_INDEX
    _tracker_valid: bool = True

    def __post_init__(self):
        if self.resolution <= 0:
            raise ParameterError("resolution must be positive")
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        nx, ny, nz = (int(d) for d in self.dims)
        if nx < 1 or ny < 1 or nz < 1:
            raise ParameterError("dims must be positive")
        self.dims = (nx, ny, nz)
        if self.counts is None:
            self.counts = np.zeros((nz, ny, nx), dtype=np.uint32)
        else:
            self.counts = np.ascontiguousarray(self.counts, dtype=np.uint32)
            if self.counts.shape != (nz, ny, nx):
                raise ParameterError("counts shape must be (nz, ny, nx)")
            self._tracker_valid = False

    @property
    def nvoxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def memory_bytes(self) -> int:
        """Reported accumulator footprint: 4 bytes per voxel."""
        return 4 * self.nvoxels

    def voxel_center(self, ix: int, iy: int, iz: int) -> np.ndarray:
        return self.origin + (np.array([ix, iy, iz], dtype=np.float64) + 0.5) * self.resolution

    def voxel_of(self, point: np.ndarray) -> tuple[int, int, int] | None:
        idx = np.floor((np.asarray(point, dtype=np.float64) - self.origin) / self.resolution)
        ix, iy, iz = (int(i) for i in idx)
        nx, ny, nz = self.dims
        if 0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz:
            return ix, iy, iz
        return None

    def linear_index(self, ix: int, iy: int, iz: int) -> int:
        nx, ny, _ = self.dims
        return (iz * ny + iy) * nx + ix

    def same_geometry(self, other: "AccumulatorGrid") -> bool:
        return (
            self.dims == other.dims
            and self.resolution == other.resolution
            and bool(np.array_equal(self.origin, other.origin))
        )

    def _apply_kernel_result(self, ncast: int, result: tuple) -> VoteStats:
        inc, dropped, bc, bi = result
        self.votes_cast += ncast
        self.votes_dropped += int(dropped)
        self.increments += int(inc)
        self._best_count = int(bc)
        self._best_index = int(bi)
        return VoteStats(ncast, int(dropped), int(inc), 0.0)


def build_grid(
    scene_points: PointCloud,
    max_radius: float,
    resolution: float,
    counts_buffer: np.ndarray | None = None,
) -> AccumulatorGrid:
    """Grid spanning the scene bounding box padded by max_radius on all
    sides; dims = ceil(extent / resolution) per axis (at least 1).

    counts_buffer optionally recycles a flat uint32 array (it is zeroed
    here); reusing warm pages is much faster than faulting fresh ones when
    casting touches a large share of a big grid.
    """
    if resolution <= 0:
        raise ParameterError("resolution must be positive")
    if max_radius < 0:
        raise ParameterError("max_radius must be non-negative")
    lo = scene_points.points.min(axis=0) - max_radius
    hi = scene_points.points.max(axis=0) + max_radius
    extent = hi - lo
    dims = tuple(max(1, int(np.ceil(e / resolution - 1e-12))) for e in extent)
    counts = None
    if counts_buffer is not None:
        n = dims[0] * dims[1] * dims[2]
        if counts_buffer.dtype != np.uint32 or counts_buffer.ndim != 1 or counts_buffer.size < n:
            raise ParameterError("counts_buffer must be a flat uint32 array of sufficient size")
        counts = counts_buffer[:n].reshape(dims[2], dims[1], dims[0])
        counts.fill(0)
    grid = AccumulatorGrid(lo, float(resolution), dims, counts)  # type: ignore[arg-type]
    if counts is not None:
        grid._tracker_valid = True  # buffer was just zeroed
    return grid


def cast_offset_vote(grid: AccumulatorGrid, point: np.ndarray, offset: np.ndarray) -> int:
    """Vote for the keypoint voxel implied by an offset value (keypoint =
    point - offset, per the stored sign convention). Returns increments."""
    target = np.asarray(point, dtype=np.float64) - np.asarray(offset, dtype=np.float64)
    stats = grid._apply_kernel_result(
        1,
        _kernels.cast_points(
            grid.counts, *grid.origin, grid.resolution,
            target.reshape(1, 3), grid._best_count, grid._best_index,
        ),
    )
    return stats.increments


def cast_ray_vote(grid: AccumulatorGrid, point: np.ndarray, direction: np.ndarray) -> int:
    """Increment every voxel crossed by the half-line from point along
    direction (toward the keypoint), clipped at the grid box."""
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(d))
    if n < 1e-12:
        raise DegenerateGeometryError("zero ray direction")
    if abs(n - 1.0) > 1e-6:
        raise ParameterError("ray direction must be unit norm within 1e-6")
    stats = grid._apply_kernel_result(
        1,
        _kernels.cast_rays(
            grid.counts, *grid.origin, grid.resolution,
            np.asarray(point, dtype=np.float64).reshape(1, 3), (d / n).reshape(1, 3),
            grid._best_count, grid._best_index,
        ),
    )
    return stats.increments


def cast_sphere_vote(grid: AccumulatorGrid, center: np.ndarray, radius: float) -> int:
    """Increment every voxel on the sphere surface of the given radius
    centered at `center` (each voxel at most once per sphere)."""
    if radius <= 0:
        raise ParameterError("sphere radius must be positive")
    stats = grid._apply_kernel_result(
        1,
        _kernels.cast_spheres(
            grid.counts, *grid.origin, grid.resolution,
            np.asarray(center, dtype=np.float64).reshape(1, 3),
            np.array([float(radius)]), _kernels._sphere_radius_bias,
            grid._best_count, grid._best_index,
        ),
    )
    return stats.increments


def cast_votes(grid: AccumulatorGrid, vmap: VoteMap, frame: DepthFrame) -> VoteStats:
    """Cast one vote per masked pixel with valid depth, dispatching to the
    scheme's rasterizer. Pixels whose cast touches no in-grid voxel count
    as dropped."""
    t0 = time.perf_counter()
    live = vmap.mask & frame.valid
    skipped = 0
    if not np.any(live):
        return VoteStats(0, 0, 0, (time.perf_counter() - t0) * 1e3)
    pts = frame.points()[live]
    vals = vmap.values[live]
    scheme = vmap.scheme
    if scheme is SchemeKind.RADIAL:
        radii = vals[:, 0]
        keep = radii > 0
        skipped = int((~keep).sum())
        result = _kernels.cast_spheres(
            grid.counts, *grid.origin, grid.resolution,
            np.ascontiguousarray(pts[keep]), np.ascontiguousarray(radii[keep]),
            _kernels._sphere_radius_bias, grid._best_count, grid._best_index,
        )
    elif scheme is SchemeKind.OFFSET:
        targets = pts - vals
        result = _kernels.cast_points(
            grid.counts, *grid.origin, grid.resolution,
            np.ascontiguousarray(targets), grid._best_count, grid._best_index,
        )
    else:
        if scheme is SchemeKind.VECTOR:
            dirs = -vals
        else:
            dirs = -polar_to_direction(vals[:, 0], vals[:, 1])
        norms = np.linalg.norm(dirs, axis=1)
        keep = norms > 1e-12
        skipped = int((~keep).sum())
        dirs = dirs[keep] / norms[keep, None]
        result = _kernels.cast_rays(
            grid.counts, *grid.origin, grid.resolution,
            np.ascontiguousarray(pts[keep]), np.ascontiguousarray(dirs),
            grid._best_count, grid._best_index,
        )
    stats = grid._apply_kernel_result(int(live.sum()), result)
    grid.votes_dropped += skipped
    stats.votes_dropped += skipped
    stats.wall_ms = (time.perf_counter() - t0) * 1e3
    return stats


def find_peak(grid: AccumulatorGrid, refine: bool = False) -> PeakResult:
    """Global maximum voxel; ties break on the smallest x-fastest flat index.

    With refine=True the location is the count-weighted centroid of the
    3x3x3 neighborhood around the max voxel instead of the voxel center.
    """
    if grid._tracker_valid and grid._best_count > 0:
        best_c = grid._best_count
        flat = grid._best_index
    else:
        flat = int(np.argmax(grid.counts))
        best_c = int(grid.counts.reshape(-1)[flat])
        if best_c == 0:
            raise NoPeakError("accumulator grid holds no votes")
    nx, ny, nz = grid.dims
    iz, rem = divmod(flat, ny * nx)
    iy, ix = divmod(rem, nx)
    if not refine:
        return PeakResult(grid.voxel_center(ix, iy, iz), int(best_c), False)
    z0, z1 = max(0, iz - 1), min(nz - 1, iz + 1)
    y0, y1 = max(0, iy - 1), min(ny - 1, iy + 1)
    x0, x1 = max(0, ix - 1), min(nx - 1, ix + 1)
    block = grid.counts[z0:z1 + 1, y0:y1 + 1, x0:x1 + 1].astype(np.float64)
    zz, yy, xx = np.meshgrid(
        np.arange(z0, z1 + 1), np.arange(y0, y1 + 1), np.arange(x0, x1 + 1), indexing="ij"
    )
    w = block.sum()
    loc = grid.origin + (
        np.array(
            [(xx * block).sum(), (yy * block).sum(), (zz * block).sum()]
        ) / w + 0.5
    ) * grid.resolution
    return PeakResult(loc, int(best_c), True)


def merge_grids(grids: list[AccumulatorGrid]) -> AccumulatorGrid:
    """Element-wise integer sum of compatible grids."""
    if not grids:
        raise ParameterError("nothing to merge")
    first = grids[0]
    for g in grids[1:]:
        if not first.same_geometry(g):
            raise GridMismatchError("grids differ in origin, resolution, or dims")
    total = np.zeros(first.counts.shape, dtype=np.uint64)
    for g in grids:
        total += g.counts
    if total.max(initial=0) > np.iinfo(np.uint32).max:
        raise ParameterError("merged counts overflow 32-bit capacity")
    merged = AccumulatorGrid(
        first.origin.copy(), first.resolution, first.dims, total.astype(np.uint32)
    )
    merged.votes_cast = sum(g.votes_cast for g in grids)
    merged.votes_dropped = sum(g.votes_dropped for g in grids)
    merged.increments = sum(g.increments for g in grids)
    return merged


def dump_grid(grid: AccumulatorGrid) -> bytes:
    """Serialize to the debug blob: 4-byte magic, little-endian header
    (origin float64 x3, resolution float64, dims uint32 x3), then counts
    as uint32 in x-fastest order."""
    header = struct.pack(
        "<4s3dd3I", DUMP_MAGIC, *grid.origin, grid.resolution, *grid.dims
    )
    payload = grid.counts.astype("<u4", copy=False).tobytes()
    return header + payload


def load_grid(blob: bytes) -> AccumulatorGrid:
    """Parse a dump_grid blob; raises GridDumpError on any malformation."""
    head_size = struct.calcsize("<4s3dd3I")
    if len(blob) < head_size:
        raise GridDumpError("blob shorter than the header")
    magic, ox, oy, oz, rho, nx, ny, nz = struct.unpack("<4s3dd3I", blob[:head_size])
    if magic != DUMP_MAGIC:
        raise GridDumpError(f"bad magic {magic!r}")
    if rho <= 0 or min(nx, ny, nz) < 1:
        raise GridDumpError("invalid header fields")
    expected = head_size + 4 * nx * ny * nz
    if len(blob) != expected:
        raise GridDumpError(f"payload size {len(blob) - head_size} != {4 * nx * ny * nz}")
    counts = np.frombuffer(blob, dtype="<u4", offset=head_size).reshape(nz, ny, nx)
    return AccumulatorGrid(
        np.array([ox, oy, oz]), rho, (int(nx), int(ny), int(nz)), counts.copy()
    )
