"""Command-line surface: calibrate, init, run, baseline, evaluate, synth.

Exit codes are stable: 0 success, 1 data error (typed pipeline errors,
unreadable files), 2 usage error.  ``--json`` emits key-sorted
machine-readable results on stdout.  Per-frame inputs are matched by
patterns with an ``{id}`` placeholder; only the ``file`` depth backend
exists (network inference happens upstream and writes the input maps).
"""

from __future__ import annotations

import argparse
import glob
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io_formats
from .baseline import baseline_pairs, baseline_positions, fit_ground_homography
from .calibration import filter_by_confidence, remap_control_points
from .distancing import RiskThresholds
from .errors import DistmonError, NoMatchedPairs, UsageError
from .evaluation import reference_distances, render_tables, summarize
from .geometry import CameraIntrinsics, estimate_pose_pnp, reprojection_rms
from .pipeline import process_frame, render_overlay
from .synth import SceneSpec, generate_scene, write_bundle


def _expand_pattern(pattern: str) -> list[tuple[str, str]]:
    """Resolve a '{id}' pattern to sorted (frame_id, path) pairs.

    Without a placeholder the pattern is a single file whose stem is
    the frame id.
    """
    if pattern.count("{id}") > 1:
        raise UsageError(f"pattern may contain '{{id}}' at most once: {pattern}")
    if "{id}" not in pattern:
        path = Path(pattern)
        if not path.is_file():
            raise UsageError(f"input file does not exist: {pattern}")
        return [(path.stem, str(path))]
    prefix, suffix = pattern.split("{id}")
    matches = []
    for path in sorted(glob.glob(pattern.replace("{id}", "*"))):
        if len(path) > len(prefix) + len(suffix):
            matches.append((path[len(prefix) : len(path) - len(suffix)], path))
    if not matches:
        raise UsageError(f"no files match pattern: {pattern}")
    return matches


def _substitute(pattern: str, frame_id: str) -> str:
    return pattern.replace("{id}", frame_id)


def _require(value, config_value, name: str):
    if value is not None:
        return value
    if config_value is not None:
        return config_value
    raise UsageError(f"--{name} is required (on the command line or in --config)")


def _thresholds(args, config) -> RiskThresholds:
    dangerous = args.dangerous_below if args.dangerous_below is not None else config.dangerous_below
    safe = args.safe_above if args.safe_above is not None else config.safe_above
    return RiskThresholds(dangerous_below=dangerous, safe_above=safe)


def _emit(args, payload) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))


# -- subcommands --------------------------------------------------------------

def _cmd_calibrate(args, config) -> int:
    k_mobile = io_formats.read_intrinsics(
        _require(args.mobile_intrinsics, config.mobile_intrinsics, "mobile-intrinsics")
    )
    k_fixed = io_formats.read_intrinsics(
        _require(args.fixed_intrinsics, config.fixed_intrinsics, "fixed-intrinsics")
    )
    rows_mobile = io_formats.read_points_csv(args.mobile_board, io_formats.BOARD_SCHEMA)
    rows_fixed = io_formats.read_points_csv(args.fixed_board, io_formats.BOARD_SCHEMA)
    if len(rows_mobile) < 4 or len(rows_fixed) < 4:
        raise UsageError(
            "calibration needs at least 4 board correspondences per camera "
            f"(got {len(rows_mobile)} mobile, {len(rows_fixed)} fixed)"
        )

    results = {}
    for name, rows, k in (
        ("mobile", rows_mobile, k_mobile),
        ("fixed", rows_fixed, k_fixed),
    ):
        world = np.array([r[:3] for r in rows])
        pixels = np.array([r[3:] for r in rows])
        pose = estimate_pose_pnp(world, pixels, k)
        results[name] = (pose, reprojection_rms(pose, world, pixels, k))

    pose_mobile_to_fixed = results["fixed"][0].compose(results["mobile"][0].inverse())
    io_formats.write_pose(pose_mobile_to_fixed, args.out)
    print(f"mobile camera reprojection RMS: {results['mobile'][1]:.3e} px")
    print(f"fixed camera reprojection RMS: {results['fixed'][1]:.3e} px")
    print(f"pose written to {args.out}")
    _emit(
        args,
        {
            "pose": pose_mobile_to_fixed.to_dict(),
            "rms_mobile_px": results["mobile"][1],
            "rms_fixed_px": results["fixed"][1],
            "out": str(args.out),
        },
    )
    return 0


def _cmd_init(args, config) -> int:
    threshold = (
        args.confidence_threshold
        if args.confidence_threshold is not None
        else config.confidence_threshold
    )
    points = io_formats.read_raw_slam_points(args.slam)
    pose = io_formats.read_pose(_require(args.pose, config.pose, "pose"))
    k_mobile = io_formats.read_intrinsics(
        _require(args.mobile_intrinsics, config.mobile_intrinsics, "mobile-intrinsics")
    )
    k_fixed = io_formats.read_intrinsics(
        _require(args.fixed_intrinsics, config.fixed_intrinsics, "fixed-intrinsics")
    )
    confident = filter_by_confidence(points, threshold)
    control = remap_control_points(confident, k_mobile, k_fixed, pose)
    io_formats.write_control_points(control, args.out)
    print(
        f"{len(control)} control points survived "
        f"(from {len(points)} SLAM points, {len(confident)} confident)"
    )
    _emit(
        args,
        {
            "survivors": len(control),
            "confident": len(confident),
            "total": len(points),
            "out": str(args.out),
        },
    )
    return 0


def _cmd_run(args, config) -> int:
    frames_pattern = _require(args.frames, config.frames, "frames")
    masks_pattern = _require(args.masks, config.masks, "masks")
    control = io_formats.read_control_points(
        _require(args.control, config.control_points, "control")
    )
    k = io_formats.read_intrinsics(
        _require(args.intrinsics, config.fixed_intrinsics, "intrinsics")
    )
    thresholds = _thresholds(args, config)
    min_pixels = args.min_pixels if args.min_pixels is not None else config.min_pixels
    trim = args.trim if args.trim is not None else config.trim_fraction

    frames = _expand_pattern(frames_pattern)
    if len(frames) > 1 and "{id}" not in args.out:
        raise UsageError("--out needs an '{id}' placeholder for multiple frames")

    def run_one(frame_id: str, rel_path: str):
        rel = io_formats.read_pfm(rel_path)
        mask = io_formats.read_label_mask(_substitute(masks_pattern, frame_id))
        report = process_frame(
            frame_id,
            rel,
            mask,
            control,
            k,
            thresholds=thresholds,
            min_pixels=min_pixels,
            trim_fraction=trim,
        )
        out_path = _substitute(args.out, frame_id)
        io_formats.write_report(report, out_path)
        if args.overlay:
            io_formats.write_ppm(
                render_overlay(rel, mask, report),
                _substitute(args.overlay, frame_id),
            )
        return report

    reports, failures = {}, {}
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        futures = {
            frame_id: pool.submit(run_one, frame_id, path)
            for frame_id, path in frames
        }
        for frame_id, future in futures.items():
            try:
                reports[frame_id] = future.result()
            except DistmonError as exc:
                failures[frame_id] = exc

    for frame_id, report in sorted(reports.items()):
        print(
            f"frame {frame_id}: persons={len(report.persons)} "
            f"pairs={len(report.pairs)} alpha={report.scale.alpha:.6g} "
            f"beta={report.scale.beta:.6g} control={report.control_points_used}"
        )
    for frame_id, exc in sorted(failures.items()):
        print(f"frame {frame_id}: error: {exc}", file=sys.stderr)
    _emit(
        args,
        [io_formats.report_to_dict(r) for _, r in sorted(reports.items())],
    )
    return 1 if failures else 0


def _cmd_baseline(args, config) -> int:
    rows = io_formats.read_points_csv(args.ground, io_formats.GROUND_SCHEMA)
    if len(rows) < 4:
        raise UsageError(
            f"ground homography needs at least 4 correspondences, got {len(rows)}"
        )
    h = fit_ground_homography(
        [r[:2] for r in rows], [r[2:] for r in rows]
    )
    thresholds = _thresholds(args, config)
    min_pixels = args.min_pixels if args.min_pixels is not None else config.min_pixels

    frames = _expand_pattern(_require(args.masks, config.masks, "masks"))
    if len(frames) > 1 and "{id}" not in args.out:
        raise UsageError("--out needs an '{id}' placeholder for multiple frames")

    results = []
    for frame_id, mask_path in frames:
        mask = io_formats.read_label_mask(mask_path)
        positions = baseline_positions(mask, h, min_pixels)
        pairs = baseline_pairs(positions, thresholds)
        payload = {
            "frame_id": frame_id,
            "persons": [
                {"id": iid, "ground": [x, y]} for iid, (x, y) in positions
            ],
            "pairs": [
                {
                    "a": p.id_a,
                    "b": p.id_b,
                    "distance_m": p.distance,
                    "risk": p.risk.value,
                }
                for p in pairs
            ],
        }
        io_formats.write_json(payload, _substitute(args.out, frame_id))
        print(
            f"frame {frame_id}: persons={len(positions)} pairs={len(pairs)}"
        )
        results.append(payload)
    _emit(args, results)
    return 0


def _cmd_evaluate(args, config) -> int:
    k = io_formats.read_intrinsics(
        _require(args.intrinsics, config.fixed_intrinsics, "intrinsics")
    )
    thresholds = _thresholds(args, config)
    min_pixels = args.min_pixels if args.min_pixels is not None else config.min_pixels

    reports = dict(_expand_pattern(args.reports))
    masks = dict(_expand_pattern(args.masks))
    refs = dict(_expand_pattern(args.reference))
    if len(reports) == len(masks) == len(refs) == 1:
        # Single-file inputs form one frame even when stems differ.
        key = next(iter(reports))
        masks = {key: next(iter(masks.values()))}
        refs = {key: next(iter(refs.values()))}
    shared = sorted(set(reports) & set(masks) & set(refs))
    if not shared:
        raise NoMatchedPairs("no frame ids shared by reports, masks and references")

    predicted, reference = {}, {}
    dropped = 0
    for frame_id in shared:
        report = io_formats.read_report(reports[frame_id])
        mask = io_formats.read_label_mask(masks[frame_id])
        ref = io_formats.read_pfm(refs[frame_id])
        ref_pairs, dropped_ids = reference_distances(
            mask, ref, k, thresholds, min_pixels
        )
        predicted[frame_id] = list(report.pairs)
        reference[frame_id] = ref_pairs
        dropped += len(dropped_ids)

    summary = summarize(
        predicted,
        reference,
        max_ref_distance=args.max_ref_distance,
        t=thresholds,
        dropped_instances=dropped,
    )
    io_formats.write_json(summary.to_dict(), args.out)
    if args.table:
        print(render_tables(summary), end="")
    else:
        below = "x" if summary.mae_below is None else f"{summary.mae_below:.3f}"
        print(
            f"pairs={summary.pair_count} mae_any={summary.mae_any:.3f} "
            f"mae_below={below}"
        )
    _emit(args, summary.to_dict())
    return 0


def _cmd_synth(args, config) -> int:
    intrinsics = _DEFAULT_SYNTH_INTRINSICS
    if args.width is not None or args.height is not None:
        width = args.width if args.width is not None else 160
        height = args.height if args.height is not None else 120
        intrinsics = CameraIntrinsics(
            fx=0.875 * width,
            fy=0.875 * width,
            cx=width / 2.0,
            cy=height / 2.0,
            width=width,
            height=height,
        )
    spec = SceneSpec(
        seed=args.seed,
        intrinsics=intrinsics,
        n_people=args.people,
        control_count=args.control_points,
        ground_visible=args.ground,
    )
    bundle = generate_scene(spec)
    paths = write_bundle(bundle, args.out)
    print(
        f"scene seed={args.seed}: people={len(bundle.persons)} "
        f"pairs={len(bundle.pairs)} control={len(bundle.control_points)} "
        f"ground={'yes' if bundle.ground else 'no'}"
    )
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")
    _emit(args, {name: str(path) for name, path in paths.items()})
    return 0


_DEFAULT_SYNTH_INTRINSICS = SceneSpec(seed=0).intrinsics


# -- parser -------------------------------------------------------------------

def _add_threshold_flags(sub) -> None:
    sub.add_argument("--dangerous-below", type=float, default=None,
                     help="distance below which a pair is dangerous (default 1.0 m)")
    sub.add_argument("--safe-above", type=float, default=None,
                     help="distance above which a pair is safe (default 2.0 m)")
    sub.add_argument("--min-pixels", type=int, default=None,
                     help="ignore instances smaller than this (default 50)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distmon",
        description="Social-distance monitoring from scale-recovered monocular depth.",
    )
    parser.add_argument("--config", default=None, help="JSON config with defaults")
    parser.add_argument("--json", action="store_true",
                        help="emit machine-readable JSON on stdout")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker pool size for per-frame commands")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("calibrate", help="solve the mobile-to-fixed pose from a board")
    p.add_argument("--mobile-board", required=True,
                   help="CSV X,Y,Z,u,v seen by the mobile camera")
    p.add_argument("--fixed-board", required=True,
                   help="CSV X,Y,Z,u,v seen by the fixed camera")
    p.add_argument("--mobile-intrinsics", default=None)
    p.add_argument("--fixed-intrinsics", default=None)
    p.add_argument("--out", required=True, help="output pose JSON")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("init", help="remap SLAM points into fixed-frame control points")
    p.add_argument("--slam", required=True, help="CSV u,v,depth_m,confidence")
    p.add_argument("--pose", default=None, help="mobile-to-fixed pose JSON")
    p.add_argument("--mobile-intrinsics", default=None)
    p.add_argument("--fixed-intrinsics", default=None)
    p.add_argument("--confidence-threshold", type=float, default=None,
                   help="keep SLAM points at or above this confidence (default 1.0)")
    p.add_argument("--out", required=True, help="output control-point CSV")
    p.set_defaults(func=_cmd_init)

    p = sub.add_parser("run", help="per-frame distance monitoring")
    p.add_argument("--frames", default=None,
                   help="relative inverse-depth PFM pattern with {id}")
    p.add_argument("--masks", default=None, help="instance mask PGM pattern with {id}")
    p.add_argument("--control", default=None, help="control-point CSV")
    p.add_argument("--intrinsics", default=None, help="fixed-camera intrinsics JSON")
    p.add_argument("--out", required=True, help="report JSON pattern with {id}")
    p.add_argument("--overlay", default=None, help="optional PPM overlay pattern")
    p.add_argument("--trim", type=float, default=None,
                   help="refit once discarding this fraction of worst residuals")
    p.add_argument("--depth-backend", choices=("file",), default="file",
                   help="depth source (only 'file' is implemented)")
    _add_threshold_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("baseline", help="ground-homography foot-point baseline")
    p.add_argument("--ground", required=True, help="CSV u,v,X_m,Y_m correspondences")
    p.add_argument("--masks", default=None, help="instance mask PGM pattern with {id}")
    p.add_argument("--out", required=True, help="baseline report JSON pattern")
    _add_threshold_flags(p)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("evaluate", help="MAE and risk-class metrics vs reference depth")
    p.add_argument("--reports", required=True, help="report JSON pattern with {id}")
    p.add_argument("--masks", required=True, help="instance mask PGM pattern with {id}")
    p.add_argument("--reference", required=True,
                   help="reference metric-depth PFM pattern with {id}")
    p.add_argument("--intrinsics", default=None)
    p.add_argument("--max-ref-distance", type=float, default=3.0,
                   help="range cap (on the reference distance) for the second MAE")
    p.add_argument("--table", action="store_true", help="print text tables")
    p.add_argument("--out", required=True, help="output summary JSON")
    _add_threshold_flags(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic scene bundle")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--people", type=int, default=3)
    p.add_argument("--ground", action="store_true",
                   help="place people on a visible ground plane")
    p.add_argument("--control-points", type=int, default=60)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help(sys.stderr)
        return 2
    try:
        config = (
            io_formats.load_config(args.config)
            if args.config
            else io_formats.PipelineConfig()
        )
        return args.func(args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DistmonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
