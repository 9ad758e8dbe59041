"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 degenerate scene.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import data_path
from .errors import DegenerateSceneError
from .geometry import PointCloud, PoseSE3, Trajectory, aggregate_map
from .io import SCAN_FORMATS, format_xyz, load_poses, load_scan, write_poses, write_scan
from .metrics import MapEvaluator
from .ortho import ExtractConfig, extract_orthogonal_subset
from .pipeline import SUBSET_SOURCES, ExperimentConfig, hotmap, hotmap_csv, orthogonal_subset, run_experiment
from .spatial import IndexConfig
from .synthetic import (
    POSE_SPACING,
    PerturbSpec,
    axis_planes_env,
    perturb_trajectory,
    render_trajectory,
    sample_env,
    straight_trajectory,
    urban_canyon,
)

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE = 0, 2, 3
METRIC_SCHEMA = "mapmetrics.metric/1"
EXTRACT_SCHEMA = "mapmetrics.extract/1"
SCAN_SUFFIXES = {".bin", ".xyz", ".txt"}


class InputError(ValueError):
    pass


def _threads_default() -> int:
    raw = os.environ.get("MAPMETRICS_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("vicinity and extraction")
    nb = g.add_mutually_exclusive_group()
    nb.add_argument("--radius", type=float, help="radius vicinity in meters (default 0.5)")
    nb.add_argument("--knn", type=int, help="k-nearest-neighbor vicinity instead of a radius")
    g.add_argument("--min-points", type=int, default=4, help="smallest usable vicinity (default 4)")
    g.add_argument("--eps", type=float, default=0.0872,
                   help="co-linearity/orthogonality tolerance on |n_i.n_j| (default 0.0872)")
    g.add_argument("--max-points", default="2000",
                   help="cap on the orthogonal subset size, or 'none' (default 2000)")
    g.add_argument("--seed", type=int, default=None, help="seed for every random stream")
    g.add_argument("--threads", type=int, default=_threads_default(),
                   help="worker processes (default: $MAPMETRICS_THREADS or 1)")
    return p


def _index_cfg(args) -> IndexConfig:
    if args.knn is not None:
        return IndexConfig(mode="knn", k=args.knn, min_points=args.min_points)
    return IndexConfig(mode="radius", radius=0.5 if args.radius is None else args.radius,
                       min_points=args.min_points)


def _extract_cfg(args) -> ExtractConfig:
    mp = None if str(args.max_points).lower() == "none" else int(args.max_points)
    return ExtractConfig(eps=args.eps, max_points=mp, seed=args.seed or 0)


def _resolve(path: str) -> Path:
    if path.startswith("bundled:"):
        return data_path(path.split(":", 1)[1])
    return Path(path)


def _scan_paths(inputs) -> tuple[list[Path], Path | None]:
    """Expand directories into sorted scan files; also return a poses.txt found there."""
    out, poses = [], None
    for raw in inputs:
        p = _resolve(raw)
        if p.is_dir():
            files = sorted(f for f in p.iterdir()
                           if f.suffix.lower() in SCAN_SUFFIXES and f.name != "poses.txt"
                           and not f.name.endswith("_poses.txt"))
            if not files:
                raise InputError(f"{p}: no scan files")
            out.extend(files)
            if (p / "poses.txt").exists():
                poses = p / "poses.txt"
        elif p.exists():
            out.append(p)
        else:
            raise InputError(f"{p}: no such file")
    return out, poses


def _load_inputs(args) -> tuple[list[PointCloud], Trajectory]:
    paths, found = _scan_paths(args.scans)
    clouds = [load_scan(p, args.format) for p in paths]
    pose_file = _resolve(args.poses) if args.poses else found
    if pose_file is None:
        if len(clouds) != 1:
            raise InputError("--poses is required for more than one scan")
        poses = Trajectory([PoseSE3.identity()])
    else:
        poses = load_poses(pose_file)
    if len(poses) != len(clouds):
        raise InputError(f"pose count {len(poses)} does not match scan count {len(clouds)}")
    return clouds, poses


def _add_inputs(p):
    p.add_argument("scans", nargs="+",
                   help="scan files or directories (directories may hold poses.txt); "
                        "'bundled:three_planes' names the packaged fixture")
    p.add_argument("--poses", help="KITTI pose file, one line per scan")
    p.add_argument("--format", choices=SCAN_FORMATS, help="scan format (default: by extension)")


def _emit(text: str, output: str | None) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def cmd_metric(args) -> int:
    clouds, poses = _load_inputs(args)
    cloud = aggregate_map(clouds, poses)
    icfg = _index_cfg(args)
    doc = {"schema": METRIC_SCHEMA, "kind": args.kind, "n_scans": len(clouds), "n_points": len(cloud),
           "index": {"mode": icfg.mode, "radius": icfg.radius, "k": icfg.k, "min_points": icfg.min_points}}
    try:
        ev = MapEvaluator(cloud, icfg)
        if args.kind in ("mom", "omme"):
            subset = orthogonal_subset(clouds, poses, args.subset_source, _extract_cfg(args))
            doc["subset_size"] = subset.size
            doc["subset_directions"] = subset.n_directions
            res = ev.mom(subset) if args.kind == "mom" else ev.omme(subset, args.degenerate or "floor")
        elif args.kind == "mpv":
            res = ev.mpv()
        else:
            res = ev.mme(args.degenerate or "skip")
    except DegenerateSceneError as e:
        doc.update(value=None, error=str(e), degenerate=True)
        _emit(json.dumps(doc, indent=2) + "\n", args.output)
        return EXIT_DEGENERATE
    doc.update(res.as_dict())
    _emit(json.dumps(doc, indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_extract(args) -> int:
    clouds, poses = _load_inputs(args)
    cloud = aggregate_map(clouds, poses)
    subset = extract_orthogonal_subset(cloud, _extract_cfg(args), IndexConfig.for_normals())
    idx = subset.indices
    labels = subset.labels(len(cloud))[idx]
    basis = ";".join(" ".join(f"{v:.6f}" for v in b) for b in subset.basis)
    header = (f"schema={EXTRACT_SCHEMA} input_points={len(cloud)} subset_points={len(idx)} "
              f"directions={subset.n_directions} degraded={int(subset.degraded)} basis={basis}")
    _emit(format_xyz(cloud.points[idx], labels, header), args.output)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.load(_resolve(args.config))
    if args.seed is not None:
        cfg = replace(cfg, env_seed=args.seed, render_seed=args.seed, perturb_seed=args.seed)
    if args.radius is not None or args.knn is not None or args.min_points != 4:
        cfg = replace(cfg, index=_index_cfg(args))
    if args.eps != 0.0872:
        cfg = replace(cfg, extract=replace(cfg.extract, eps=args.eps))
    report = run_experiment(cfg, threads=args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{args.name}.csv").write_text(report.to_csv())
    (out / f"{args.name}.json").write_text(report.to_json() + "\n")
    if args.pairs:
        (out / f"{args.name}_pairs.csv").write_text(report.pairs_csv())
    return EXIT_OK


def cmd_hotmap(args) -> int:
    clouds, poses = _load_inputs(args)
    entries = hotmap(clouds, poses, args.window, args.stride, _index_cfg(args), _extract_cfg(args),
                     args.subset_source)
    _emit(hotmap_csv(entries), args.output)
    return EXIT_OK


def cmd_generate(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed or 0
    ext = ".bin" if args.format == "kitti-bin" else ".xyz"
    if args.preset == "urban-canyon":
        scene = urban_canyon(seed, args.points)
        write_scan(out / f"000000{ext}", scene.cloud, args.format)
        write_poses(out / "poses.txt", Trajectory([PoseSE3.identity()]))
        return EXIT_OK
    gt = straight_trajectory(args.length, args.spacing)
    if args.preset == "three-planes":
        env = axis_planes_env(seed=seed)
    else:
        env = sample_env(seed, positions=gt.translations)
    env.save(out / "env.ini")
    for i, c in enumerate(render_trajectory(env, gt, seed)):
        write_scan(out / f"{i:06d}{ext}", c, args.format)
    write_poses(out / "poses.txt", gt)
    if args.sigma > 0:
        est = perturb_trajectory(gt, PerturbSpec(args.sigma, 0.0, seed))
        write_poses(out / "perturbed_poses.txt", est)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="mapmetrics",
        description="No-reference map metrics (MME, MPV, OMME, MOM) for trajectory quality.",
        epilog="Exit codes: 0 success, 2 input error, 3 degenerate scene.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metric", parents=[common], help="evaluate one metric on scans + poses (JSON)")
    _add_inputs(p)
    p.add_argument("--kind", choices=("mme", "mpv", "omme", "mom"), required=True)
    p.add_argument("--subset-source", choices=SUBSET_SOURCES, default="scans",
                   help="extract the orthogonal subset per scan and merge (scans), from the first "
                        "scan only (first) or from the aggregated map (map); default scans")
    p.add_argument("--degenerate", choices=("skip", "floor"),
                   help="low-determinant handling for mme/omme (defaults: skip for mme, floor for omme)")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("extract", parents=[common], help="write the orthogonal subset as labeled xyz-text")
    _add_inputs(p)
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("experiment", parents=[common], help="run a correlation experiment (CSV + JSON)")
    p.add_argument("config", help="experiment INI file ('bundled:small_experiment.ini' for the packaged one)")
    p.add_argument("--out-dir", default=".", help="directory for the reports (default .)")
    p.add_argument("--name", default="experiment", help="report file stem (default 'experiment')")
    p.add_argument("--pairs", action="store_true", help="also write the raw (RPE, metric) samples")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("hotmap", parents=[common], help="MOM per window of consecutive poses (CSV)")
    _add_inputs(p)
    p.add_argument("--window", type=int, default=10, help="poses per window (default 10)")
    p.add_argument("--stride", type=int, help="window step; default equals --window (no overlap)")
    p.add_argument("--subset-source", choices=SUBSET_SOURCES, default="scans",
                   help="orthogonal subset source within each window (default scans)")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.set_defaults(func=cmd_hotmap)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic scans + poses fixture")
    p.add_argument("out_dir")
    p.add_argument("--preset", choices=("plane-world", "three-planes", "urban-canyon"), default="plane-world")
    p.add_argument("--length", type=int, default=5, help="number of poses (default 5)")
    p.add_argument("--spacing", type=float, default=POSE_SPACING, help=f"pose spacing in meters (default {POSE_SPACING})")
    p.add_argument("--sigma", type=float, default=0.0, help="also write perturbed poses with this sigma")
    p.add_argument("--points", type=int, default=120_000, help="urban-canyon point count")
    p.add_argument("--format", choices=SCAN_FORMATS, default="xyz-text")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DegenerateSceneError as e:
        print(f"mapmetrics: degenerate scene: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ValueError, OSError) as e:
        print(f"mapmetrics: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
