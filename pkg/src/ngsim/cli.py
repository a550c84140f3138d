"""Command line entry point: ``ngsim run|sweep|metrics|bounds|gen-topology``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from fractions import Fraction
from pathlib import Path

from . import incentives
from .eventlog import EventLogError, read_event_log
from .harness import (CONFIG_FIELDS, ConfigError, SimConfig, SweepSpec, config_from_mapping,
                      load_config, run_simulation, run_sweep, sweep_csv)
from .metrics import compute_metrics
from .network import LatencyHistogram, TopologyError, generate_topology


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' config file")
    group = p.add_argument_group("config overrides (same names as the config file)")
    for name in CONFIG_FIELDS:
        group.add_argument(f"--{name}", dest=f"cfg_{name}", metavar="VALUE")


def _config(args) -> SimConfig:
    base = load_config(args.config) if args.config else SimConfig()
    overrides = {k[4:]: v for k, v in vars(args).items()
                 if k.startswith("cfg_") and v is not None}
    cfg = config_from_mapping(overrides, base)
    cfg.validate()
    return cfg


def _number(s: str):
    """Parse ``1/4`` exactly, anything else as a float."""
    return Fraction(s) if "/" in s else float(s)


def cmd_run(args) -> int:
    cfg = _config(args)
    _, report = run_simulation(cfg, log_path=args.log)
    sys.stdout.write(report.to_text())
    sys.stdout.write(f"configured_tps = {cfg.configured_tps!r}\n")
    if args.csv:
        Path(args.csv).write_text(report.csv_header() + "\n" + report.to_csv_row() + "\n")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = [float(v) for v in args.values.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    spec = SweepSpec(cfg, args.axis, values, constant_payload=not args.fixed_size, seeds=seeds)

    def warn(value, exc):
        print(f"warning: run at {args.axis}={value} failed: {exc}", file=sys.stderr)

    text = sweep_csv(run_sweep(spec, workers=args.workers, on_error=warn))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_metrics(args) -> int:
    log = read_event_log(args.log)
    report = compute_metrics(log, args.epsilon, args.delta, start=args.start,
                             warmup_fraction=args.warmup_fraction)
    if args.format == "csv":
        print(report.csv_header())
        print(report.to_csv_row())
    else:
        sys.stdout.write(report.to_text())
    return 0


def cmd_bounds(args) -> int:
    lo, hi, step = (_number(x) for x in (args.alpha_min, args.alpha_max, args.alpha_step))
    alphas = []
    a = lo
    while a <= hi:
        alphas.append(a)
        a += step
    sys.stdout.write(incentives.bounds_csv(alphas, _number(args.r)))
    return 0


def cmd_gen_topology(args) -> int:
    hist = LatencyHistogram.from_file(args.histogram) if args.histogram else None
    topo = generate_topology(args.n_nodes, args.min_degree, hist, args.bandwidth, seed=args.seed)
    sys.stdout.write(topo.dumps())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ngsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration")
    _add_config_flags(p)
    p.add_argument("--log", help="write the event log here")
    p.add_argument("--csv", help="also write the report as a one-row CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep block frequency or size over seeds")
    _add_config_flags(p)
    p.add_argument("--axis", choices=["frequency", "size"], required=True)
    p.add_argument("--values", required=True,
                   help="comma list: intervals in seconds (frequency) or bytes (size)")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--fixed-size", action="store_true",
                   help="do not rescale block size to keep the payload rate constant")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", help="recompute metrics from an event log")
    p.add_argument("log")
    p.add_argument("--epsilon", type=float, default=0.9)
    p.add_argument("--delta", type=float, default=0.9)
    p.add_argument("--start", type=float, default=None, help="ignore samples before this time")
    p.add_argument("--warmup-fraction", type=float, default=0.05)
    p.add_argument("--format", choices=["text", "csv"], default="text")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bounds", help="leader fee-share bounds over an attacker range")
    p.add_argument("--alpha-min", default="0")
    p.add_argument("--alpha-max", default="1/3")
    p.add_argument("--alpha-step", default="1/24")
    p.add_argument("--r", default="2/5", help="leader share to test")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("gen-topology", help="print a random topology")
    p.add_argument("--n-nodes", type=int, default=100)
    p.add_argument("--min-degree", type=int, default=5)
    p.add_argument("--bandwidth", type=float, default=100_000.0)
    p.add_argument("--histogram")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_topology)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, EventLogError, TopologyError, incentives.DomainError,
            FileNotFoundError) as exc:
        print(f"ngsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
