"""Command-line entry points: simulate, localize, evaluate, ablate.

Every command is deterministic for a fixed seed and configuration, and
records a run manifest next to its outputs.  Exit codes: 0 success,
1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__, config, evaluation, pipeline, scanlog, simulator
from .errors import ConfigError, LidarLocError
from .evaluation import Trajectory
from .mapping import write_map_ascii, write_map_binary
from .simulator import (
    AuxSensors,
    SensorModel,
    TiltModel,
    TRAJECTORY_PRESETS,
    WORLD_PRESETS,
    hover_spec,
    line_spec,
    loop_spec,
    read_world,
    synthesize,
)

log = logging.getLogger(__name__)

SENSOR_PROFILES = {
    "clean": SensorModel(range_noise_sigma=0.0, outlier_probability=0.0, dropout_probability=0.0),
    "default": SensorModel(range_noise_sigma=0.02, outlier_probability=0.01, dropout_probability=0.01),
    "noisy": SensorModel(range_noise_sigma=0.05, outlier_probability=0.08, dropout_probability=0.05),
}

#: Ablation ladder: cumulative feature switches from plain closest-point
#: matching up to the full pipeline.
ABLATION_VARIANTS: list[tuple[str, dict[str, str]]] = []


def _variant(name: str, noise: bool, interp: bool, imrp: bool, weight: bool, frmsd: bool) -> None:
    overrides = {"processing.noise_filter": str(noise)}
    for prefix in ("sequential", "global_matching"):
        overrides[f"{prefix}.use_interpolation"] = str(interp)
        overrides[f"{prefix}.use_imrp"] = str(imrp)
        overrides[f"{prefix}.use_weighting"] = str(weight)
        overrides[f"{prefix}.use_frmsd"] = str(frmsd)
    ABLATION_VARIANTS.append((name, overrides))


_variant("closest", noise=False, interp=False, imrp=False, weight=False, frmsd=False)
_variant("noise", noise=True, interp=False, imrp=False, weight=False, frmsd=False)
_variant("interp", noise=True, interp=True, imrp=False, weight=False, frmsd=False)
_variant("imrp", noise=True, interp=True, imrp=True, weight=False, frmsd=False)
_variant("weight", noise=True, interp=True, imrp=True, weight=True, frmsd=False)
_variant("outliers", noise=True, interp=True, imrp=True, weight=True, frmsd=True)


def _write_manifest(out_dir: str, command: str, seed, inputs, outputs, settings, elapsed: float) -> None:
    manifest = {
        "tool": "lidarloc",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config_digest": config.digest(settings),
        "inputs": sorted(str(p) for p in inputs),
        "outputs": sorted(str(p) for p in outputs),
        "elapsed_seconds": round(elapsed, 3),
    }
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    os.replace(tmp, path)


def _require_file(path: str) -> str:
    if not os.path.isfile(path):
        raise ConfigError(f"no such file: {path}")
    return path


def _load_world(spec: str):
    if spec in WORLD_PRESETS:
        return WORLD_PRESETS[spec]()
    return read_world(_require_file(spec))


def _load_trajectory(spec: str, duration: float, tilt: TiltModel):
    if spec == "loop":
        return loop_spec(duration=duration, tilt=tilt)
    if spec == "hover":
        return hover_spec(duration=duration)
    if spec == "line":
        return line_spec(duration=duration)
    rows = scanlog.read_trajectory_csv(_require_file(spec))
    return simulator.TrajectorySpec(rows[:, [0, 1, 2, 3, 4]], tilt=tilt)


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    tilt = TiltModel(*args.tilt) if args.tilt else TiltModel()
    world = _load_world(args.world)
    spec = _load_trajectory(args.trajectory, args.duration, tilt)
    profile = SENSOR_PROFILES[args.sensor]
    lidar = SensorModel(
        rate_hz=args.scan_rate if args.scan_rate else profile.rate_hz,
        points_per_scan=args.points if args.points else profile.points_per_scan,
        max_range=args.max_range if args.max_range else profile.max_range,
        range_noise_sigma=profile.range_noise_sigma,
        outlier_probability=profile.outlier_probability,
        dropout_probability=profile.dropout_probability,
    )
    run = synthesize(world, spec, lidar, AuxSensors(), seed=args.seed)

    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "scans.log")
    truth_path = os.path.join(args.out, "truth.csv")
    scanlog.write_scanlog(log_path, run.messages)
    scanlog.write_trajectory_csv(truth_path, run.truth)
    settings = config.load_settings(args.config)
    _write_manifest(
        args.out, "simulate", args.seed, [], [log_path, truth_path], settings,
        time.perf_counter() - started,
    )
    n_scans = sum(1 for m in run.messages if m.kind == "scan")
    print(f"wrote {n_scans} scans over {spec.end_time - spec.start_time:.1f} s to {log_path}")
    return 0


def _write_localization_outputs(out_dir: str, result: pipeline.PipelineResult):
    paths = {}
    paths["fused"] = os.path.join(out_dir, "fused.csv")
    scanlog.write_trajectory_csv(paths["fused"], result.fused_trajectory_rows())

    def planar_rows(rows):
        return [(t, x, y, 0.0, heading) for t, x, y, heading in rows]

    paths["sequential"] = os.path.join(out_dir, "sequential.csv")
    scanlog.write_trajectory_csv(paths["sequential"], planar_rows(result.sequential_rows))
    paths["global"] = os.path.join(out_dir, "global.csv")
    scanlog.write_trajectory_csv(paths["global"], planar_rows(result.global_rows))

    paths["map_sparse"] = os.path.join(out_dir, "map_sparse.txt")
    write_map_ascii(paths["map_sparse"], result.map.snapshot())
    paths["map_dense"] = os.path.join(out_dir, "map_dense.txt")
    write_map_ascii(paths["map_dense"], result.map.export_dense())
    paths["map_binary"] = os.path.join(out_dir, "map_sparse.bin")
    write_map_binary(paths["map_binary"], result.map.snapshot())

    paths["summary"] = os.path.join(out_dir, "summary.txt")
    with open(paths["summary"], "w") as handle:
        for key in sorted(result.summary):
            handle.write(f"{key} = {result.summary[key]}\n")
    return paths


def cmd_localize(args) -> int:
    started = time.perf_counter()
    cfg = config.load(args.config)
    messages = scanlog.read_scanlog(_require_file(args.log))
    result = pipeline.run(messages, cfg)

    os.makedirs(args.out, exist_ok=True)
    paths = _write_localization_outputs(args.out, result)
    _write_manifest(
        args.out, "localize", args.seed, [args.log], list(paths.values()), cfg.settings,
        time.perf_counter() - started,
    )
    print(
        f"processed {result.summary['scans_total']} scans "
        f"({result.summary['scans_skipped_empty']} empty), "
        f"{result.summary['map_updates']} map updates; outputs in {args.out}"
    )
    return 0


def _trajectory_from_csv(path: str) -> Trajectory:
    rows = scanlog.read_trajectory_csv(path)
    return Trajectory(rows[:, 0], rows[:, 1:3], rows[:, 4])


def _evaluate_pair(estimate: Trajectory, truth: Trajectory, map_points=None, mme_radius=0.3):
    metrics = {
        "ate": evaluation.ate(estimate, truth),
        "heading_rmse": evaluation.heading_rmse(estimate, truth),
        "loop_drift": evaluation.loop_drift(estimate),
        "loop_drift_truth": evaluation.loop_drift(truth),
        "samples": len(estimate),
    }
    if map_points is not None and len(map_points):
        entropy, skipped = evaluation.mme(map_points, mme_radius)
        metrics["mme"] = entropy
        metrics["mme_skipped_points"] = skipped
    return metrics


def cmd_evaluate(args) -> int:
    started = time.perf_counter()
    estimate = _trajectory_from_csv(_require_file(args.estimate))
    truth = _trajectory_from_csv(_require_file(args.truth))
    map_points = None
    if args.map:
        from .mapping import read_map_ascii

        map_points = read_map_ascii(_require_file(args.map))
    metrics = _evaluate_pair(estimate, truth, map_points, args.mme_radius)

    lines = [f"{key} = {value:.6f}" if isinstance(value, float) else f"{key} = {value}"
             for key, value in metrics.items()]
    report = "\n".join(lines) + "\n"
    print(report, end="")
    if args.out:
        out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
        os.makedirs(out_dir, exist_ok=True)
        with open(args.out, "w") as handle:
            handle.write(report)
        settings = config.load_settings(args.config)
        _write_manifest(
            out_dir, "evaluate", args.seed,
            [args.estimate, args.truth] + ([args.map] if args.map else []),
            [args.out], settings, time.perf_counter() - started,
        )
    return 0


def run_ablation(log_path: str, truth_path: str, base_config=None, mme_radius: float = 0.3):
    """Localize and evaluate every matcher variant; returns table rows."""
    messages = scanlog.read_scanlog(log_path)
    truth = _trajectory_from_csv(truth_path)
    rows = []
    for name, overrides in ABLATION_VARIANTS:
        cfg = config.load(base_config, overrides)
        result = pipeline.run(messages, cfg)
        row = {"variant": name}
        for label, data in (("seq", result.sequential_rows), ("global", result.global_rows)):
            try:
                traj = Trajectory.from_rows(np.array(data, dtype=float).reshape(-1, 4))
                row[f"{label}_ate"] = evaluation.ate(traj, truth)
                row[f"{label}_hdg"] = evaluation.heading_rmse(traj, truth)
            except LidarLocError:
                row[f"{label}_ate"] = math.nan
                row[f"{label}_hdg"] = math.nan
        try:
            row["mme"], _ = evaluation.mme(result.map.export_dense(), mme_radius)
        except LidarLocError:
            row["mme"] = math.nan
        rows.append(row)
        log.info("ablation %s: %s", name, row)
    return rows


def cmd_ablate(args) -> int:
    started = time.perf_counter()
    rows = run_ablation(
        _require_file(args.log), _require_file(args.truth), args.config, args.mme_radius
    )
    columns = ["variant", "seq_ate", "seq_hdg", "global_ate", "global_hdg", "mme"]
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    with open(args.out, "w") as handle:
        handle.write(",".join(columns) + "\n")
        for row in rows:
            handle.write(
                ",".join(
                    row["variant"] if c == "variant" else f"{row[c]:.6f}" for c in columns
                )
                + "\n"
            )
    header = f"{'variant':<10}" + "".join(f"{c:>12}" for c in columns[1:])
    print(header)
    for row in rows:
        print(f"{row['variant']:<10}" + "".join(f"{row[c]:>12.4f}" for c in columns[1:]))
    settings = config.load_settings(args.config)
    _write_manifest(
        out_dir, "ablate", args.seed, [args.log, args.truth], [args.out], settings,
        time.perf_counter() - started,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidarloc",
        description="2D-LIDAR localization toolkit: simulate, localize, evaluate, ablate.",
    )
    parser.add_argument("--version", action="version", version=f"lidarloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="random seed (simulation only)")
        p.add_argument("--config", default=None, help="configuration file (key = value lines)")
        p.add_argument("--verbose", action="store_true", help="debug logging")

    sim = sub.add_parser("simulate", help="generate a synthetic scan log with ground truth")
    common(sim)
    sim.add_argument("--world", default="room", help="world preset (room, church, forest, tunnel) or file")
    sim.add_argument("--trajectory", default="loop", help="trajectory preset (hover, loop, line) or waypoint CSV")
    sim.add_argument("--duration", type=float, default=60.0, help="flight duration in seconds")
    sim.add_argument("--sensor", choices=sorted(SENSOR_PROFILES), default="default")
    sim.add_argument("--scan-rate", type=float, default=None, help="override scan rate in Hz")
    sim.add_argument("--points", type=int, default=None, help="override points per scan")
    sim.add_argument("--max-range", type=float, default=None, help="override sensor range in m")
    sim.add_argument("--tilt", type=float, nargs=3, metavar=("ROLL", "PITCH", "PERIOD"),
                     default=None, help="sinusoidal attitude wobble")
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=cmd_simulate)

    loc = sub.add_parser("localize", help="run the localization pipeline over a scan log")
    common(loc)
    loc.add_argument("--log", required=True, help="scan log produced by simulate")
    loc.add_argument("--out", required=True, help="output directory")
    loc.set_defaults(func=cmd_localize)

    ev = sub.add_parser("evaluate", help="trajectory and map metrics against ground truth")
    common(ev)
    ev.add_argument("--estimate", required=True, help="estimated trajectory CSV")
    ev.add_argument("--truth", required=True, help="ground-truth trajectory CSV")
    ev.add_argument("--map", default=None, help="map point file for the entropy metric")
    ev.add_argument("--mme-radius", type=float, default=0.3)
    ev.add_argument("--out", default=None, help="metrics report path")
    ev.set_defaults(func=cmd_evaluate)

    ab = sub.add_parser("ablate", help="matcher-variant comparison table")
    common(ab)
    ab.add_argument("--log", required=True)
    ab.add_argument("--truth", required=True)
    ab.add_argument("--mme-radius", type=float, default=0.3)
    ab.add_argument("--out", required=True, help="table CSV path")
    ab.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LidarLocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
