"""Command-line front end.

    sponge-twin <subcommand> [--config FILE] [--out DIR] ...

Subcommands: validate, bus, gravity, fatigue, airtight, track, sweep.
Exit codes: 0 success, 1 configuration error, 2 simulation fault,
3 acceptance-threshold failure (--check gates, for CI use).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bus import BusConfig, max_targets, schedule, wire_count
from .configfile import TwinConfig, build, load, serialize, validate_twin
from .dynamics import SimulationFault
from .experiments import (
    HOLD_TOLERANCE_BAR,
    TRACKING_JOINT_LIMIT_DEG,
    TRACKING_MEAN_LIMIT_DEG,
    ExperimentResult,
    gravity_margin,
    leaky_variant,
    run_airtightness,
    run_fatigue,
    run_sweep,
    run_tracking,
    wear_report,
)
from .model import (
    BaseOrientation,
    BellowsKind,
    BinaryValve,
    ConfigurationError,
    Variant,
    preset,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAULT = 2
EXIT_THRESHOLD = 3


def _load_config(args) -> TwinConfig:
    if args.config:
        return load(args.config)
    return build({})


def _write_result(result: ExperimentResult, out: str | None, name: str) -> None:
    if not out:
        return
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if result.data.size:
        result.write_csv(out_dir / f"{name}.csv")
    result.write_summary(out_dir / f"{name}_summary.txt")


def _print_summary(result: ExperimentResult) -> None:
    for key in sorted(result.summary):
        value = result.summary[key]
        if isinstance(value, float):
            print(f"{key} = {value:.9g}")
        else:
            print(f"{key} = {value}")


def _cmd_validate(args) -> int:
    cfg = _load_config(args)
    violations = validate_twin(cfg)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return EXIT_CONFIG
    print("configuration ok")
    if args.dump:
        sys.stdout.write(serialize(cfg))
    return EXIT_OK


def _cmd_bus(args) -> int:
    cfg = _load_config(args)
    bus_cfg = BusConfig(
        bit_rate=args.bit_rate,
        bits_per_target=args.bits_per_target,
        sample_rate=args.sample_rate,
    )
    n = args.targets if args.targets is not None else cfg.robot.n
    report = schedule(n, bus_cfg)
    wires, tubes = wire_count(n, cfg.variant)
    print(f"max_targets = {max_targets(bus_cfg)}")
    print(f"targets = {report.n}")
    print(f"feasible = {report.feasible}")
    print(f"utilization = {report.utilization:.9g}")
    print(f"effective_sample_rate_hz = {report.effective_sample_rate:.9g}")
    print(f"data_age_s = {', '.join(f'{a:.9g}' for a in report.data_age)}")
    print(f"wires = {wires}")
    print(f"tubes = {tubes}")
    if args.out:
        result = ExperimentResult(
            kind="bus",
            columns=[],
            data=np.empty((0, 0)),
            summary={
                "max_targets": report.max_targets,
                "targets": report.n,
                "feasible": str(report.feasible),
                "utilization": report.utilization,
                "effective_sample_rate_hz": report.effective_sample_rate,
                "wires": wires,
                "tubes": tubes,
            },
        )
        _write_result(result, args.out, "bus")
    return EXIT_OK


def _cmd_gravity(args) -> int:
    cfg = _load_config(args)
    orientation = BaseOrientation(args.orientation) if args.orientation else None
    report = gravity_margin(cfg.robot, orientation, search_limit=args.max_n)
    print(f"orientation = {report.orientation}")
    for i in range(cfg.robot.n):
        print(
            f"joint{i + 1}: available = {report.available[i]:.9g} N*m, "
            f"demand = {report.demand[i]:.9g} N*m, margin = {report.margin[i]:.9g} N*m"
        )
    if report.max_stackable is None:
        print("max_stackable = unbounded (no static load at q = 0)")
    else:
        print(f"max_stackable = {report.max_stackable}")
    if args.out:
        summary: dict[str, object] = {
            "orientation": report.orientation,
            "max_stackable": -1 if report.max_stackable is None else report.max_stackable,
        }
        for i in range(cfg.robot.n):
            summary[f"margin_q{i + 1}_nm"] = float(report.margin[i])
        _write_result(
            ExperimentResult(kind="gravity", columns=[], data=np.empty((0, 0)), summary=summary),
            args.out,
            "gravity",
        )
    return EXIT_OK


def _cmd_fatigue(args) -> int:
    cfg = _load_config(args)
    if args.all:
        print("variant      bellows   p_max_bar  cycles    lifetime")
        for variant in Variant:
            for kind in BellowsKind:
                spec = preset(variant, kind).bellows
                result = run_fatigue(spec)
                print(
                    f"{variant.value:<12} {kind.value:<9} {spec.max_pressure:<10.9g}"
                    f" {result.summary['cycles_to_failure']:<9.9g}"
                    f" {result.summary['lifetime']}"
                )
        return EXIT_OK
    spec = cfg.robot.actuators[0].bellows
    result = run_fatigue(spec, trace_cycles=args.trace_cycles)
    _print_summary(result)
    valve = cfg.robot.actuators[0].valve
    if isinstance(valve, BinaryValve):
        for key, value in wear_report(valve).items():
            print(f"valve_{key} = {value:.9g}")
    _write_result(result, args.out, "fatigue")
    return EXIT_OK


def _cmd_airtight(args) -> int:
    cfg = _load_config(args)
    if args.leaky:
        cfg = leaky_variant(cfg)
    result = run_airtightness(cfg)
    _print_summary(result)
    _write_result(result, args.out, "airtight")
    if args.check:
        dev = result.summary["final_hold_max_dev_bar"]
        if dev > HOLD_TOLERANCE_BAR:
            print(
                f"check failed: final hold deviation {dev:.9g} bar "
                f"> {HOLD_TOLERANCE_BAR} bar"
            )
            return EXIT_THRESHOLD
        print("check passed")
    return EXIT_OK


def _cmd_track(args) -> int:
    cfg = _load_config(args)
    result = run_tracking(cfg)
    _print_summary(result)
    _write_result(result, args.out, "track")
    if args.check:
        mean = result.summary["mean_rmse_deg"]
        worst = max(
            result.summary[f"rmse_q{i + 1}_deg"] for i in range(cfg.robot.n)
        )
        if mean >= TRACKING_MEAN_LIMIT_DEG or worst >= TRACKING_JOINT_LIMIT_DEG:
            print(
                f"check failed: mean {mean:.3f} deg (limit {TRACKING_MEAN_LIMIT_DEG}),"
                f" worst joint {worst:.3f} deg (limit {TRACKING_JOINT_LIMIT_DEG})"
            )
            return EXIT_THRESHOLD
        print("check passed")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    result = run_sweep(cfg, args.param, values, experiment=args.experiment, jobs=args.jobs)
    header = ", ".join(result.columns)
    print(header)
    for row in result.data:
        print(", ".join(f"{x:.9g}" for x in row))
    _write_result(result, args.out, "sweep")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sponge-twin",
        description="Deterministic digital twin of the SPONGE articulated soft robots",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file (defaults apply if omitted)")
        p.add_argument("--out", help="directory for CSV log and summary")

    p = sub.add_parser("validate", help="check a config file against all invariants")
    common(p)
    p.add_argument("--dump", action="store_true", help="print the canonical serialization")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("bus", help="I2C capacity and schedule report")
    common(p)
    p.add_argument("--targets", type=int, help="bus target count (default: robot.n)")
    p.add_argument("--bit-rate", type=float, default=400_000.0)
    p.add_argument("--bits-per-target", type=float, default=33.0)
    p.add_argument("--sample-rate", type=float, default=1000.0)
    p.set_defaults(func=_cmd_bus)

    p = sub.add_parser("gravity", help="static torque margins against gravity")
    common(p)
    p.add_argument(
        "--orientation",
        choices=[o.value for o in BaseOrientation],
        help="override the config base orientation",
    )
    p.add_argument("--max-n", type=int, default=100, help="stack search limit")
    p.set_defaults(func=_cmd_gravity)

    p = sub.add_parser("fatigue", help="bellows lifetime accounting")
    common(p)
    p.add_argument("--all", action="store_true", help="print the stock preset table")
    p.add_argument("--trace-cycles", type=int, default=0, help="emit a short pressure trace")
    p.set_defaults(func=_cmd_fatigue)

    p = sub.add_parser("airtight", help="supply staircase leak experiment")
    common(p)
    p.add_argument("--leaky", action="store_true", help="use the early-design leaky preset")
    p.add_argument("--check", action="store_true", help="gate on the hold tolerance")
    p.set_defaults(func=_cmd_airtight)

    p = sub.add_parser("track", help="closed-loop ramp tracking experiment")
    common(p)
    p.add_argument("--check", action="store_true", help="gate on the RMSE limits")
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("sweep", help="repeat an experiment over a parameter grid")
    common(p)
    p.add_argument("--param", required=True, help="config key to vary, e.g. control.kp")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--experiment", choices=["track", "airtight"], default="track")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationFault as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
