"""Command-line entry points.

Exit codes: 0 success, 1 usage/config error, 2 IO error, 3 numerical failure.
Set RADVOTE_LOG=debug|info|warning for verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time

import numpy as np

from . import _kernels
from .accumulator import AccumulatorGrid, build_grid, cast_votes, dump_grid, find_peak
from .errors import ConfigError, RadVoteError
from .experiments import (
    CSV_COLUMNS,
    EXPERIMENT_KINDS,
    ExperimentSpec,
    rows_to_csv,
    run_experiment,
    spec_from_dict,
)
from .geometry import PointCloud, RigidTransform, horn_solve, object_radius
from .oracles import (
    adds_oracle,
    add_oracle,
    auc_oracle,
    horn_quaternion_oracle,
    ray_voxels_oracle,
    sphere_voxels_oracle,
)
from .pipeline import accuracy_at_threshold, add_metric, adds_metric, auc_metric
from .synthetic import make_object, random_pose, synth_frame
from .votemaps import SchemeKind, generate_gt_maps

log = logging.getLogger("radvote")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3

_SUBCOMMAND_KINDS = {
    "scheme-compare": "scheme_comparison",
    "dispersion": "dispersion_sweep",
    "resolution": "resolution_sweep",
    "keypoints": "keypoint_count",
    "ensemble": "ensemble",
}


def _setup_logging():
    level = os.environ.get("RADVOTE_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--out", help="output directory for CSV files")
    p.add_argument("--seed", type=int, help="root seed")
    p.add_argument("--threads", type=int, help="trial-level thread count")
    p.add_argument("--resolution", type=float, action="append",
                   help="voxel edge in mm (repeatable)")
    p.add_argument("--scheme", action="append", help="voting scheme (repeatable)")
    p.add_argument("--noise-sigma", type=float, help="base regressor noise in mm (0 = noiseless)")
    p.add_argument("--scale", type=float, action="append",
                   help="dispersion scale (repeatable)")
    p.add_argument("--keypoints", type=int, help="keypoints per object")
    p.add_argument("--trials", type=int, help="trials per combination")
    p.add_argument("--object", action="append", dest="objects", help="object name (repeatable)")
    p.add_argument("--timing", choices=("real", "zero"),
                   help="wall_ms column mode; 'zero' makes CSV bytes reproducible")


def _spec_from_args(args, kind: str) -> ExperimentSpec:
    if args.config:
        from .dataio import load_config

        spec = load_config(args.config)
    else:
        spec = ExperimentSpec()
    overrides = {
        "experiment": kind,
        "seed": args.seed,
        "threads": args.threads,
        "resolutions": args.resolution,
        "schemes": args.scheme,
        "noise_base_sigma": args.noise_sigma,
        "scales": args.scale,
        "keypoints": args.keypoints,
        "trials": args.trials,
        "objects": args.objects,
        "timing": args.timing,
    }
    raw = dataclasses.asdict(spec)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return spec_from_dict(raw)


def _write_outputs(spec: ExperimentSpec, rows, summary, out_dir: str | None):
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "results.csv"), "w", newline="") as f:
            f.write(rows_to_csv(rows))
        with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as f:
            f.write(rows_to_csv(summary))
    sys.stdout.write(rows_to_csv(summary))


def _cmd_experiment(args, kind: str) -> int:
    spec = _spec_from_args(args, kind)
    rows, summary = run_experiment(spec)
    _write_outputs(spec, rows, summary, args.out)
    return EXIT_OK


def _cmd_vote_once(args) -> int:
    spec = _spec_from_args(args, "scheme_comparison")
    obj = spec.objects[0]
    model = spec.load_object(obj)
    scheme = SchemeKind(spec.schemes[0])
    rho = spec.resolutions[0]
    rng = np.random.default_rng(spec.seed)
    pose = random_pose(rng, object_radius(model))
    intr = spec.intrinsics()
    frame = synth_frame(model, pose, intr, spec.render_points)
    from .experiments import build_keypoint_set, _kp_pad

    kpset = build_keypoint_set(model, "disperse", spec.keypoints, spec.bbox_scale)
    vmap = generate_gt_maps(model, pose, kpset, intr, scheme, frame=frame)[0]
    grid = build_grid(frame.cloud(), _kp_pad(kpset, rho), rho)
    stats = cast_votes(grid, vmap, frame)
    peak = find_peak(grid)
    gt = pose.apply(kpset.keypoints[0][None, :])[0]
    print(f"object={obj} scheme={scheme.value} rho={rho}")
    print(f"grid dims={grid.dims} mem_bytes={grid.memory_bytes()}")
    print(f"votes={stats.votes_cast} drops={stats.votes_dropped} increments={stats.increments}")
    print(f"peak count={peak.count} location={peak.location.round(3).tolist()}")
    print(f"error_mm={np.linalg.norm(peak.location - gt):.3f}")
    if args.dump:
        with open(args.dump, "wb") as f:
            f.write(dump_grid(grid))
        print(f"grid dumped to {args.dump}")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    from .dataio import load_ply, load_pose_file

    model = load_ply(args.model, scale=args.model_scale)
    gt = load_pose_file(args.gt)
    est = load_pose_file(args.est)
    radius = args.radius if args.radius else object_radius(model)
    common = [oid for oid in gt if oid in est]
    if not common:
        print("no common object ids between pose files", file=sys.stderr)
        return EXIT_USAGE
    adds_vals = []
    print("object_id,add_mm,adds_mm")
    for oid in common:
        a = add_metric(model, gt[oid], est[oid])
        s = adds_metric(model, gt[oid], est[oid])
        adds_vals.append(a)
        print(f"{oid},{a:.6g},{s:.6g}")
    acc = accuracy_at_threshold(adds_vals, radius, args.threshold)
    auc = auc_metric(adds_vals, args.auc_max)
    print(f"accuracy@{args.threshold:.0%}radius={acc:.4f} auc={auc:.4f} radius_mm={radius:.3f}")
    return EXIT_OK


def _selftest_sphere(rng) -> bool:
    for _ in range(12):
        rho = float(rng.choice([1.0, 5.0]))
        dims = tuple(int(d) for d in rng.integers(16, 48, 3))
        origin = rng.uniform(-40, 40, 3)
        g = AccumulatorGrid(origin, rho, dims)
        center = origin + rng.uniform(0.1, 0.9, 3) * np.array(dims) * rho
        radius = float(rng.uniform(0.15, 0.45) * min(dims) * rho)
        from .accumulator import cast_sphere_vote

        cast_sphere_vote(g, center, radius)
        if not np.array_equal(g.counts > 0, sphere_voxels_oracle(g, center, radius)):
            return False
    return True


def _selftest_ray(rng) -> bool:
    for _ in range(25):
        rho = float(rng.choice([1.0, 5.0]))
        dims = tuple(int(d) for d in rng.integers(8, 40, 3))
        origin = rng.uniform(-40, 40, 3)
        g = AccumulatorGrid(origin, rho, dims)
        start = origin + rng.uniform(-0.5, 1.5, 3) * np.array(dims) * rho
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        from .accumulator import cast_ray_vote

        cast_ray_vote(g, start, d)
        if not np.array_equal(g.counts > 0, ray_voxels_oracle(g, start, d)):
            return False
    return True


def _selftest_horn(rng) -> bool:
    for _ in range(300):
        n = int(rng.integers(3, 12))
        src = rng.uniform(-100, 100, (n, 3))
        if np.linalg.svd(src - src.mean(0), compute_uv=False)[1] < 1e-6:
            continue
        pose = random_pose(rng, 100.0)
        dst = pose.apply(src)
        est = horn_solve(src, dst)
        if np.abs(est.apply(src) - dst).max() > 1e-9:
            return False
        qr, qt = horn_quaternion_oracle(src, dst)
        if np.abs(qr - est.rotation).max() > 1e-7 or np.abs(qt - est.translation).max() > 1e-6:
            return False
    return True


def _selftest_metrics(rng) -> bool:
    model = PointCloud(rng.uniform(-50, 50, (80, 3)))
    for _ in range(20):
        g = random_pose(rng, 50.0)
        e = random_pose(rng, 50.0)
        if abs(add_metric(model, g, e) - add_oracle(model.points, g, e)) > 1e-9:
            return False
        if abs(adds_metric(model, g, e) - adds_oracle(model.points, g, e)) > 1e-9:
            return False
    d = rng.uniform(0, 150, 200)
    if abs(auc_metric(d, 100.0) - auc_oracle(d, 100.0)) > 1e-3:
        return False
    return True


def _cmd_selftest(_args) -> int:
    mutate = os.environ.get("RADVOTE_MUTATE", "")
    if mutate == "sphere":
        _kernels._sphere_radius_bias = 0.4  # deliberate defect injection
    t0 = time.time()
    rng = np.random.default_rng(20240917)
    suites = [
        ("sphere-rasterizer-vs-oracle", _selftest_sphere),
        ("ray-rasterizer-vs-oracle", _selftest_ray),
        ("horn-roundtrip-and-quaternion-oracle", _selftest_horn),
        ("metric-oracles", _selftest_metrics),
    ]
    failed = 0
    for name, fn in suites:
        ok = fn(rng)
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        if not ok:
            failed += 1
    print(f"selftest finished in {time.time() - t0:.1f}s, {failed} failed suite(s)")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="radvote",
        description="Keypoint-voting benchmark for 6-DoF pose estimation in RGB-D data",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_KINDS:
        sp = sub.add_parser(name, help=f"run the {name.replace('-', ' ')} experiment")
        _add_common_flags(sp)
    sp = sub.add_parser("vote-once", help="cast one synthetic frame and report the peak")
    _add_common_flags(sp)
    sp.add_argument("--dump", help="write the accumulator blob to this path")
    sp = sub.add_parser("metrics", help="ADD / ADD-S / AUC between two pose files")
    sp.add_argument("--model", required=True, help="model PLY path")
    sp.add_argument("--model-scale", type=float, default=1.0, help="file units to mm")
    sp.add_argument("--gt", required=True, help="ground-truth pose file")
    sp.add_argument("--est", required=True, help="estimated pose file")
    sp.add_argument("--radius", type=float, help="object radius override (mm)")
    sp.add_argument("--threshold", type=float, default=0.10, help="accuracy fraction of radius")
    sp.add_argument("--auc-max", type=float, default=100.0, help="AUC threshold cap (mm)")
    sub.add_parser("selftest", help="oracle-equivalence suites at small scale")
    return p


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command in _SUBCOMMAND_KINDS:
            return _cmd_experiment(args, _SUBCOMMAND_KINDS[args.command])
        if args.command == "vote-once":
            return _cmd_vote_once(args)
        if args.command == "metrics":
            return _cmd_metrics(args)
        if args.command == "selftest":
            return _cmd_selftest(args)
        parser.error(f"unknown command {args.command}")
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, IOError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RadVoteError as exc:
        from .errors import (
            DepthImageError, GridDumpError, PlyHeaderError, PlyLayoutError,
            PlyTruncatedError, PoseFileError,
        )

        if isinstance(exc, (PlyHeaderError, PlyLayoutError, PlyTruncatedError,
                            DepthImageError, GridDumpError, PoseFileError)):
            print(f"io error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
