"""Benchmark experiments: scheme comparison, keypoint dispersion, accumulator
resolution sweep, keypoint-count study, and ensemble voting.

Each experiment is a deterministic function of (spec, seed): trials derive
independent rng streams from the root seed and the trial index, so results
are identical for any thread count. Rows follow one CSV schema:

    experiment, object, scheme, rho, scale, K, seed, eps_mean, eps_std,
    add, adds, accuracy, auc, votes, drops, wall_ms, mem_bytes
"""

from __future__ import annotations

import dataclasses
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .accumulator import build_grid, cast_votes, find_peak, merge_grids
from .errors import ConfigError
from .geometry import (
    KeypointSet,
    PointCloud,
    RigidTransform,
    bbox_keypoints,
    corner_subset_indices,
    disperse_keypoints,
    fps_keypoints,
    horn_solve,
    object_radius,
)
from .pipeline import accuracy_at_threshold, add_metric, adds_metric, auc_metric, recover_pose
from .synthetic import OBJECT_RADII, default_intrinsics, make_object, random_pose, synth_frame
from .votemaps import NoiseKind, NoiseSpec, SchemeKind, apply_noise, generate_gt_maps

__all__ = [
    "ExperimentSpec",
    "EXPERIMENT_KINDS",
    "CSV_COLUMNS",
    "spec_from_dict",
    "scheme_noise_spec",
    "run_experiment",
    "rows_to_csv",
]

EXPERIMENT_KINDS = (
    "scheme_comparison",
    "dispersion_sweep",
    "resolution_sweep",
    "keypoint_count",
    "ensemble",
)

CSV_COLUMNS = (
    "experiment", "object", "scheme", "rho", "scale", "K", "seed",
    "eps_mean", "eps_std", "add", "adds", "accuracy", "auc",
    "votes", "drops", "wall_ms", "mem_bytes",
)

SCHEME_NAMES = {s.value: s for s in SchemeKind}

# Regressor-error model. The radial channel gets a small per-pixel sigma
# plus a dominant per-map systematic bias ("bias"), matching how a learned
# regressor's error field is mostly smooth; iid pixel noise on a 1D radius
# otherwise gets geometrically amplified at dispersed keypoints far beyond
# anything a real regressor exhibits. Offset channels get per-channel sigma
# that grows with the regressed magnitude relative to the object size
# (sigma = base * (a + b * |value| / r_obj)). Direction channels (vector
# components, polar angles) get sigma = base * a_dir / mean-vote-distance,
# i.e. a transverse error at the keypoint that is roughly independent of
# object size and dispersion, mirroring how direction fields get smoother
# as keypoints move out. Constants were calibrated once against the radial
# disperse error band; tests rely on the resulting error ordering, not on
# these exact values.
NOISE_MODEL = {
    SchemeKind.RADIAL: {"a": 0.22, "b": 0.0, "bias": 1.30},
    SchemeKind.OFFSET: {"a": 0.50, "b": 4.4, "bias": 0.0},
    SchemeKind.VECTOR: {"a_dir": 6.0},
    SchemeKind.POLAR: {"a_dir": 3.0},
}

DEFAULT_BASE_SIGMA = 1.0  # mm; calibrated so disperse radial error ~ 1.8 mm


@dataclass
class ExperimentSpec:
    """Validated experiment configuration with paper-default values."""

    experiment: str = "scheme_comparison"
    objects: list[str] = field(default_factory=lambda: list(OBJECT_RADII))
    schemes: list[str] = field(default_factory=lambda: ["radial", "polar", "offset", "vector"])
    resolutions: list[float] = field(default_factory=lambda: [5.0])
    scales: list[float] = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 5.0])
    keypoint_counts: list[int] = field(default_factory=lambda: [3, 4, 8])
    keypoints: int = 3
    keypoint_sets: list[str] = field(default_factory=lambda: ["surface", "disperse"])
    bbox_scale: float = 2.0
    trials: int = 100
    render_points: int = 60
    model_points: int = 1500
    noise_base_sigma: float = DEFAULT_BASE_SIGMA
    mask_flip_rate: float = 0.0
    perturbation_mm: float = 1.5
    seed: int = 0
    threads: int = 1
    auc_max_mm: float = 100.0
    add_threshold_fraction: float = 0.10
    image_width: int = 160
    image_height: int = 120
    focal: float = 150.0
    timing: str = "real"
    models: dict = field(default_factory=dict)

    def intrinsics(self):
        return default_intrinsics(self.image_width, self.image_height, self.focal)

    def load_object(self, name: str) -> PointCloud:
        if name in self.models:
            from .dataio import load_ply  # local import to avoid a module cycle

            entry = self.models[name]
            return load_ply(entry["path"], scale=float(entry.get("scale", 1.0)))
        return make_object(name, self.model_points)


_SPEC_FIELD_TYPES = {
    "experiment": str,
    "objects": list,
    "schemes": list,
    "resolutions": list,
    "scales": list,
    "keypoint_counts": list,
    "keypoints": int,
    "keypoint_sets": list,
    "bbox_scale": (int, float),
    "trials": int,
    "render_points": int,
    "model_points": int,
    "noise_base_sigma": (int, float),
    "mask_flip_rate": (int, float),
    "perturbation_mm": (int, float),
    "seed": int,
    "threads": int,
    "auc_max_mm": (int, float),
    "add_threshold_fraction": (int, float),
    "image_width": int,
    "image_height": int,
    "focal": (int, float),
    "timing": str,
    "models": dict,
}


def spec_from_dict(raw: dict) -> ExperimentSpec:
    """Build a validated spec from parsed config data; unknown keys, type
    mismatches, and out-of-range values raise ConfigError naming the field."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    known = {f.name for f in dataclasses.fields(ExperimentSpec)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    for key, value in raw.items():
        want = _SPEC_FIELD_TYPES[key]
        if isinstance(value, bool) or not isinstance(value, want):
            raise ConfigError(f"config key {key!r} must be {want}")
    spec = ExperimentSpec(**raw)
    if spec.experiment not in EXPERIMENT_KINDS:
        raise ConfigError(f"experiment must be one of {EXPERIMENT_KINDS}, got {spec.experiment!r}")
    for s in spec.schemes:
        if s not in SCHEME_NAMES:
            raise ConfigError(f"schemes: unknown voting scheme {s!r}")
    for o in spec.objects:
        if o not in OBJECT_RADII and o not in spec.models:
            raise ConfigError(f"objects: unknown object {o!r}")
    for ks in spec.keypoint_sets:
        if ks not in ("surface", "disperse"):
            raise ConfigError(f"keypoint_sets: must be surface/disperse, got {ks!r}")
    if any(r <= 0 for r in spec.resolutions):
        raise ConfigError("resolutions: every value must be positive")
    if any(s <= 0 for s in spec.scales):
        raise ConfigError("scales: every value must be positive")
    if spec.trials < 1:
        raise ConfigError("trials: must be at least 1")
    if spec.keypoints < 1:
        raise ConfigError("keypoints: must be at least 1")
    if spec.bbox_scale < 1:
        raise ConfigError("bbox_scale: must be >= 1")
    if spec.noise_base_sigma < 0:
        raise ConfigError("noise_base_sigma: must be non-negative")
    if not (0 <= spec.mask_flip_rate < 1):
        raise ConfigError("mask_flip_rate: must be in [0, 1)")
    if spec.threads < 1:
        raise ConfigError("threads: must be at least 1")
    if spec.timing not in ("real", "zero"):
        raise ConfigError("timing: must be 'real' or 'zero'")
    if spec.auc_max_mm <= 0:
        raise ConfigError("auc_max_mm: must be positive")
    if spec.add_threshold_fraction <= 0:
        raise ConfigError("add_threshold_fraction: must be positive")
    return spec


def scheme_noise_spec(
    scheme: SchemeKind, base_sigma: float, obj_radius: float, seed: int,
    mask_flip_rate: float = 0.0, mean_vote_dist: float | None = None,
) -> NoiseSpec:
    """Per-scheme NoiseSpec derived from one base magnitude (mm).

    mm channels (radial, offset) get per-pixel sigma scaled as documented on
    NOISE_MODEL; direction channels get sigma inversely proportional to the
    mean point-to-keypoint distance (falling back to the object radius when
    unknown).
    """
    p = NOISE_MODEL[scheme]
    d = scheme.channel_depth
    bias = None
    if scheme in (SchemeKind.RADIAL, SchemeKind.OFFSET):
        sigma = (p["a"] * base_sigma,) * d
        vs = (p["b"] * base_sigma / obj_radius,) * d if p["b"] else None
        if p["bias"]:
            bias = (p["bias"] * base_sigma,) * d
    else:
        lever = max(mean_vote_dist if mean_vote_dist is not None else obj_radius, 1e-9)
        sigma = (p["a_dir"] * base_sigma / lever,) * d
        vs = None
    return NoiseSpec(NoiseKind.GAUSSIAN, sigma, mask_flip_rate, seed, vs, bias)


# -- keypoint-set construction ------------------------------------------------

def build_keypoint_set(model: PointCloud, kind: str, k: int, bbox_scale: float) -> KeypointSet:
    """surface -> FPS on the model; disperse -> scaled-bbox corner subset."""
    if kind == "surface":
        return fps_keypoints(model, k)
    corners = bbox_keypoints(model, bbox_scale)
    idx = corner_subset_indices(corners, k)
    return KeypointSet(corners.keypoints[list(idx)], corners.selection_method,
                       corners.dispersion_scale)


def _trial_rng(root_seed: int, *levels: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((root_seed, *levels)))


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".9g")
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c, "")) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def _row(**kw) -> dict:
    return kw


def _parallel_trials(fn, n: int, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


# -- single-keypoint voting trial (shared by several experiments) -------------

class _GridBufferPool(threading.local):
    """Thread-local recycled counts buffers, keyed by approximate size."""

    def get(self, nvoxels: int) -> np.ndarray:
        buf = getattr(self, "buf", None)
        if buf is None or buf.size < nvoxels:
            self.buf = np.empty(max(nvoxels, 1), dtype=np.uint32)
        return self.buf


_grid_pool = _GridBufferPool()


@dataclass
class _Frame:
    """One rendered synthetic observation shared across schemes."""

    pose: RigidTransform
    frame: object
    scene: PointCloud
    gt_cam: np.ndarray  # (K, 3) ground-truth camera-frame keypoints


def _prep_trial(model, kpset, spec, rng_pose) -> _Frame:
    r_obj = object_radius(model)
    pose = random_pose(rng_pose, r_obj)
    frame = synth_frame(model, pose, spec.intrinsics(), spec.render_points)
    return _Frame(pose, frame, frame.cloud(), pose.apply(kpset.keypoints))


def _vote_one(
    prep: _Frame,
    model: PointCloud,
    kpset: KeypointSet,
    kp_index: int,
    scheme: SchemeKind,
    rho: float,
    spec: ExperimentSpec,
    noise_seed: int | None,
    pad_mm: float,
):
    """Vote one keypoint map on a prepared frame; returns (error_mm, stats,
    mem_bytes)."""
    vmap = generate_gt_maps(model, prep.pose, kpset, spec.intrinsics(), scheme,
                            frame=prep.frame)[kp_index]
    if noise_seed is not None and spec.noise_base_sigma > 0:
        mvd = float(np.mean(np.linalg.norm(
            prep.scene.points - prep.gt_cam[kp_index], axis=1)))
        noise = scheme_noise_spec(scheme, spec.noise_base_sigma, object_radius(model),
                                  noise_seed, spec.mask_flip_rate, mvd)
        vmap = apply_noise(vmap, noise)
    # sphere casts touch a large share of the grid, so recycling a warm
    # buffer beats faulting fresh zero pages; ray/point casts touch little
    # and are better off with lazily-zeroed fresh memory
    buf = (_grid_pool.get(_pad_voxels(prep.scene, pad_mm, rho))
           if scheme is SchemeKind.RADIAL else None)
    grid = build_grid(prep.scene, pad_mm, rho, counts_buffer=buf)
    stats = cast_votes(grid, vmap, prep.frame)
    peak = find_peak(grid)
    err = float(np.linalg.norm(peak.location - prep.gt_cam[kp_index]))
    return err, stats, grid.memory_bytes()


def _pad_voxels(scene: PointCloud, pad_mm: float, rho: float) -> int:
    ext = scene.points.max(axis=0) - scene.points.min(axis=0) + 2 * pad_mm
    dims = np.maximum(1, np.ceil(ext / rho - 1e-12).astype(np.int64))
    return int(dims[0] * dims[1] * dims[2])


def _vote_keypoint_trial(
    model: PointCloud,
    kpset: KeypointSet,
    kp_index: int,
    scheme: SchemeKind,
    rho: float,
    spec: ExperimentSpec,
    rng_pose: np.random.Generator,
    noise_seed: int | None,
    pad_mm: float,
):
    """Render one synthetic frame and vote one keypoint map."""
    prep = _prep_trial(model, kpset, spec, rng_pose)
    return _vote_one(prep, model, kpset, kp_index, scheme, rho, spec, noise_seed, pad_mm)


def _kp_pad(kpset: KeypointSet, rho: float) -> float:
    """Grid padding that keeps every candidate keypoint inside the grid:
    the keypoint set's own radius about the object origin plus margin."""
    return float(np.linalg.norm(kpset.keypoints, axis=1).max() + 4 * rho)


# -- experiments ---------------------------------------------------------------

def _exp_scheme_comparison(spec: ExperimentSpec):
    rows: list[dict] = []
    summary: list[dict] = []
    rho = spec.resolutions[0]
    schemes = [SCHEME_NAMES[s] for s in spec.schemes]
    for obj_idx, obj_name in enumerate(spec.objects):
        model = spec.load_object(obj_name)
        r_obj = object_radius(model)
        for kind_idx, kind in enumerate(spec.keypoint_sets):
            kpset = build_keypoint_set(model, kind, spec.keypoints, spec.bbox_scale)
            pad = _kp_pad(kpset, rho)
            exp_name = f"scheme_compare/{kind}"

            def one_trial(t: int, _kpset=kpset, _combo=(obj_idx, kind_idx), _pad=pad,
                          _model=model):
                out = []
                kp_index = t % len(_kpset)
                prep = _prep_trial(_model, _kpset, spec, _trial_rng(spec.seed, *_combo, t, 0))
                for s_idx, scheme in enumerate(schemes):
                    noise_seed = int(
                        _trial_rng(spec.seed, *_combo, t, 1, s_idx).integers(2**32)
                    )
                    err, stats, mem = _vote_one(
                        prep, _model, _kpset, kp_index, scheme, rho, spec,
                        noise_seed, _pad,
                    )
                    out.append((scheme, err, stats, mem, noise_seed))
                return out

            per_trial = _parallel_trials(one_trial, spec.trials, spec.threads)
            errs = {s: [] for s in schemes}
            for t, results in enumerate(per_trial):
                for scheme, err, stats, mem, nseed in results:
                    errs[scheme].append(err)
                    rows.append(_row(
                        experiment=exp_name, object=obj_name, scheme=scheme.value,
                        rho=rho, scale=kpset.dispersion_scale, K=len(kpset), seed=nseed,
                        eps_mean=err, eps_std="", add="", adds="", accuracy="", auc="",
                        votes=stats.votes_cast, drops=stats.votes_dropped,
                        wall_ms=stats.wall_ms if spec.timing == "real" else 0.0,
                        mem_bytes=mem,
                    ))
            for scheme in schemes:
                e = np.array(errs[scheme])
                summary.append(_row(
                    experiment=exp_name, object=obj_name, scheme=scheme.value,
                    rho=rho, scale=kpset.dispersion_scale, K=len(kpset), seed=spec.seed,
                    eps_mean=float(e.mean()), eps_std=float(e.std()),
                    add="", adds="", accuracy="", auc="",
                    votes="", drops="", wall_ms="", mem_bytes="",
                ))
    return rows, summary


def _exp_dispersion_sweep(spec: ExperimentSpec):
    """Geometry-only simulation: fixed keypoint perturbations re-applied at
    growing dispersion scales, measuring the pose (ADD) error."""
    rows: list[dict] = []
    summary: list[dict] = []
    k = max(spec.keypoints, 4)
    for obj_idx, obj_name in enumerate(spec.objects):
        model = spec.load_object(obj_name)
        r_obj = object_radius(model)
        centroid = model.centroid()
        base = fps_keypoints(model, k)
        kpsets = {
            s: disperse_keypoints(base, centroid, s, r_obj) for s in spec.scales
        }

        def one_trial(t: int, _kpsets=kpsets, _r=r_obj, _centroid=centroid, _oi=obj_idx):
            rng = _trial_rng(spec.seed, _oi, t)
            pose = random_pose(rng, _r, z_range=(0.0, 0.0))
            # translation within half the object radius, per the protocol
            pose = RigidTransform(pose.rotation, rng.uniform(-0.5, 0.5, 3) * _r)
            dirs = rng.normal(size=(k, 3))
            dirs /= np.linalg.norm(dirs, axis=1)[:, None]
            pert = dirs * spec.perturbation_mm
            out = {}
            for s, kps in _kpsets.items():
                moved = pose.apply(kps.keypoints) + pert
                est = horn_solve(kps.keypoints, moved)
                out[s] = add_metric(model, pose, est)
            return out

        per_trial = _parallel_trials(one_trial, spec.trials, spec.threads)
        for s in spec.scales:
            vals = np.array([res[s] for res in per_trial])
            for t, v in enumerate(vals):
                rows.append(_row(
                    experiment="dispersion", object=obj_name, scheme="simulated",
                    rho="", scale=s, K=k, seed=spec.seed + t,
                    eps_mean=spec.perturbation_mm, eps_std="",
                    add=float(v), adds="", accuracy="", auc="",
                    votes="", drops="", wall_ms="", mem_bytes="",
                ))
            summary.append(_row(
                experiment="dispersion", object=obj_name, scheme="simulated",
                rho="", scale=s, K=k, seed=spec.seed,
                eps_mean=spec.perturbation_mm, eps_std="",
                add=float(vals.mean()), adds="", accuracy="", auc="",
                votes="", drops="", wall_ms="", mem_bytes="",
            ))
    return rows, summary


def _exp_resolution_sweep(spec: ExperimentSpec):
    """Radial voting at each resolution over identical frames; reports
    keypoint error, voting wall time, and the 4-byte-per-voxel memory."""
    rows: list[dict] = []
    summary: list[dict] = []
    obj_name = spec.objects[0]
    model = spec.load_object(obj_name)
    kpset = build_keypoint_set(model, "disperse", spec.keypoints, spec.bbox_scale)
    noisy = spec.noise_base_sigma > 0
    for rho in spec.resolutions:
        pad = _kp_pad(kpset, rho)

        def one_trial(t: int, _rho=rho, _pad=pad):
            kp_index = t % len(kpset)
            rng_pose = _trial_rng(spec.seed, t, 0)
            noise_seed = int(_trial_rng(spec.seed, t, 1).integers(2**32)) if noisy else None
            return _vote_keypoint_trial(
                model, kpset, kp_index, SchemeKind.RADIAL, _rho, spec,
                rng_pose, noise_seed, _pad,
            )

        per_trial = _parallel_trials(one_trial, spec.trials, spec.threads)
        errs = np.array([r[0] for r in per_trial])
        total_wall = float(sum(r[1].wall_ms for r in per_trial))
        mem = max(r[2] for r in per_trial)
        for t, (err, stats, mem_t) in enumerate(per_trial):
            rows.append(_row(
                experiment="resolution", object=obj_name, scheme="radial",
                rho=rho, scale=kpset.dispersion_scale, K=len(kpset), seed=spec.seed + t,
                eps_mean=err, eps_std="", add="", adds="", accuracy="", auc="",
                votes=stats.votes_cast, drops=stats.votes_dropped,
                wall_ms=stats.wall_ms if spec.timing == "real" else 0.0,
                mem_bytes=mem_t,
            ))
        summary.append(_row(
            experiment="resolution", object=obj_name, scheme="radial",
            rho=rho, scale=kpset.dispersion_scale, K=len(kpset), seed=spec.seed,
            eps_mean=float(errs.mean()), eps_std=float(errs.std()),
            add="", adds="", accuracy="", auc="",
            votes="", drops="",
            wall_ms=total_wall if spec.timing == "real" else 0.0,
            mem_bytes=mem,
        ))
    return rows, summary


def _estimate_all_keypoints(model, kpset, scheme, rho, spec, rng_pose, noise_seeds, pad):
    """One frame, all keypoint maps voted; returns (pose, estimates, stats)."""
    intr = spec.intrinsics()
    r_obj = object_radius(model)
    pose = random_pose(rng_pose, r_obj)
    frame = synth_frame(model, pose, intr, spec.render_points)
    scene = frame.cloud()
    maps = generate_gt_maps(model, pose, kpset, intr, scheme, frame=frame)
    estimates = []
    all_stats = []
    for j, vmap in enumerate(maps):
        if noise_seeds is not None and spec.noise_base_sigma > 0:
            mvd = float(np.mean(np.linalg.norm(
                scene.points - pose.apply(kpset.keypoints[j][None, :])[0], axis=1)))
            noise = scheme_noise_spec(scheme, spec.noise_base_sigma, r_obj,
                                      noise_seeds[j], spec.mask_flip_rate, mvd)
            vmap = apply_noise(vmap, noise)
        buf = (_grid_pool.get(_pad_voxels(scene, pad, rho))
               if scheme is SchemeKind.RADIAL else None)
        grid = build_grid(scene, pad, rho, counts_buffer=buf)
        all_stats.append(cast_votes(grid, vmap, frame))
        estimates.append(find_peak(grid).location)
    return pose, estimates, all_stats


def _exp_keypoint_count(spec: ExperimentSpec):
    """Estimate the 8 disperse corners once per trial, then recover the pose
    from the K-subsets; per-keypoint voting is independent so the subsets
    reuse the same estimates."""
    rows: list[dict] = []
    summary: list[dict] = []
    rho = spec.resolutions[0]
    threshold_radius = spec.add_threshold_fraction
    for obj_name in spec.objects:
        model = spec.load_object(obj_name)
        r_obj = object_radius(model)
        corners = bbox_keypoints(model, spec.bbox_scale)
        pad = _kp_pad(corners, rho)
        subsets = {kk: corner_subset_indices(corners, kk) for kk in spec.keypoint_counts}

        def one_trial(t: int, _corners=corners, _pad=pad, _model=model, _r=r_obj):
            rng_pose = _trial_rng(spec.seed, t, 0)
            seeds = [int(_trial_rng(spec.seed, t, 1, j).integers(2**32))
                     for j in range(len(_corners))]
            pose, estimates, stats = _estimate_all_keypoints(
                _model, _corners, SchemeKind.RADIAL, rho, spec, rng_pose, seeds, _pad
            )
            gt_cam = pose.apply(_corners.keypoints)
            errs = np.linalg.norm(np.asarray(estimates) - gt_cam, axis=1)
            adds = {}
            for kk, idx in subsets.items():
                sub = KeypointSet(_corners.keypoints[list(idx)],
                                  _corners.selection_method, _corners.dispersion_scale)
                est_pose = recover_pose(sub, [estimates[i] for i in idx])
                adds[kk] = add_metric(_model, pose, est_pose)
            return errs, adds, stats

        per_trial = _parallel_trials(one_trial, spec.trials, spec.threads)
        for kk in spec.keypoint_counts:
            add_vals = np.array([res[1][kk] for res in per_trial])
            eps = np.concatenate([res[0] for res in per_trial])
            acc = accuracy_at_threshold(add_vals, r_obj, threshold_radius)
            for t, v in enumerate(add_vals):
                rows.append(_row(
                    experiment="keypoint_count", object=obj_name, scheme="radial",
                    rho=rho, scale=corners.dispersion_scale, K=kk, seed=spec.seed + t,
                    eps_mean=float(per_trial[t][0].mean()), eps_std="",
                    add=float(v), adds="",
                    accuracy=int(v < threshold_radius * r_obj), auc="",
                    votes="", drops="", wall_ms="", mem_bytes="",
                ))
            summary.append(_row(
                experiment="keypoint_count", object=obj_name, scheme="radial",
                rho=rho, scale=corners.dispersion_scale, K=kk, seed=spec.seed,
                eps_mean=float(eps.mean()), eps_std=float(eps.std()),
                add=float(add_vals.mean()), adds="",
                accuracy=acc, auc=auc_metric(add_vals, spec.auc_max_mm),
                votes="", drops="", wall_ms="", mem_bytes="",
            ))
    return rows, summary


_ENSEMBLE_BASES = (SchemeKind.VECTOR, SchemeKind.OFFSET, SchemeKind.RADIAL)
_ENSEMBLE_COMBOS = (
    ("vector",), ("offset",), ("radial",),
    ("vector", "offset"), ("vector", "radial"), ("radial", "offset"),
    ("vector", "offset", "radial"),
)


def _exp_ensemble(spec: ExperimentSpec):
    """Cast vector / offset / radial votes for the same keypoint into
    geometry-identical grids, then run peak detection on every summed
    combination."""
    rows: list[dict] = []
    summary: list[dict] = []
    rho = spec.resolutions[0]
    intr = spec.intrinsics()
    for obj_name in spec.objects:
        model = spec.load_object(obj_name)
        r_obj = object_radius(model)
        kpset = build_keypoint_set(model, "disperse", spec.keypoints, spec.bbox_scale)
        pad = _kp_pad(kpset, rho)

        def one_trial(t: int, _kpset=kpset, _pad=pad, _model=model, _r=r_obj):
            rng_pose = _trial_rng(spec.seed, t, 0)
            pose = random_pose(rng_pose, _r)
            frame = synth_frame(_model, pose, intr, spec.render_points)
            kp_index = t % len(_kpset)
            scene = frame.cloud()
            grids = {}
            mvd = float(np.mean(np.linalg.norm(scene.points - gt_kp, axis=1)))
            for s_idx, scheme in enumerate(_ENSEMBLE_BASES):
                vmap = generate_gt_maps(_model, pose, _kpset, intr, scheme,
                                        frame=frame)[kp_index]
                if spec.noise_base_sigma > 0:
                    seed = int(_trial_rng(spec.seed, t, 1, s_idx).integers(2**32))
                    vmap = apply_noise(vmap, scheme_noise_spec(
                        scheme, spec.noise_base_sigma, _r, seed, spec.mask_flip_rate, mvd))
                grid = build_grid(scene, _pad, rho)
                cast_votes(grid, vmap, frame)
                grids[scheme.value] = grid
            gt = pose.apply(_kpset.keypoints[kp_index][None, :])[0]
            out = {}
            for combo in _ENSEMBLE_COMBOS:
                merged = grids[combo[0]] if len(combo) == 1 else merge_grids(
                    [grids[c] for c in combo])
                peak = find_peak(merged)
                out[combo] = float(np.linalg.norm(peak.location - gt))
            return out

        per_trial = _parallel_trials(one_trial, spec.trials, spec.threads)
        for combo in _ENSEMBLE_COMBOS:
            combo_name = "+".join(combo)
            errs = np.array([res[combo] for res in per_trial])
            for t, v in enumerate(errs):
                rows.append(_row(
                    experiment="ensemble", object=obj_name, scheme=combo_name,
                    rho=rho, scale=kpset.dispersion_scale, K=len(kpset),
                    seed=spec.seed + t,
                    eps_mean=float(v), eps_std="", add="", adds="",
                    accuracy="", auc="", votes="", drops="", wall_ms="", mem_bytes="",
                ))
            summary.append(_row(
                experiment="ensemble", object=obj_name, scheme=combo_name,
                rho=rho, scale=kpset.dispersion_scale, K=len(kpset), seed=spec.seed,
                eps_mean=float(errs.mean()), eps_std=float(errs.std()),
                add="", adds="", accuracy="", auc="",
                votes="", drops="", wall_ms="", mem_bytes="",
            ))
    return rows, summary


_RUNNERS = {
    "scheme_comparison": _exp_scheme_comparison,
    "dispersion_sweep": _exp_dispersion_sweep,
    "resolution_sweep": _exp_resolution_sweep,
    "keypoint_count": _exp_keypoint_count,
    "ensemble": _exp_ensemble,
}


def run_experiment(spec: ExperimentSpec) -> tuple[list[dict], list[dict]]:
    """Run the configured experiment; returns (per-trial rows, summary rows)."""
    if spec.experiment not in _RUNNERS:
        raise ConfigError(f"unknown experiment kind {spec.experiment!r}")
    return _RUNNERS[spec.experiment](spec)
