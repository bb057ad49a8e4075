"""Command-line entry point: ``manoma <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .config import ScenarioConfig, load_config
from .errors import ConfigError, ManomaError
from . import experiments

DEFAULTS_EPILOG = """\
scenario defaults (override with --config FILE or --set KEY=VALUE):
  M=4 antennas, K=3 users, L=5 paths per user (assumed)
  A=3 wavelengths (square moving region side), D=0.5 wavelength (minimum spacing)
  P_s=10 dBm, sigma2=-80 dBm noise, R_min=0.25 bps/Hz
  path loss: pathloss_ref_db=-30 dB at 1 m, pathloss_exponent=2.8,
             distance_range_m=[50, 100]
  algorithm: eps=1e-3 (relative-increase stop rule), T_max=150,
             order_policy=auto (enumerate orders for K<=3, else heuristic)
  Monte Carlo: trials=50, seed=2024

The config file is YAML (JSON also works) with keys named exactly like the
fields above, e.g.:

  M: 4
  P_s: 15
  distance_range_m: [50, 100]
"""


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML/JSON scenario file (keys = ScenarioConfig fields)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config field; repeatable")
    common.add_argument("--seed", type=int, help="master seed (default 2024)")
    common.add_argument("--trials", type=int, help="number of channel realizations (default 50)")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory (default ./results)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for trials (default 1)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(
        prog="manoma",
        description="Movable-antenna NOMA sum-rate maximization: Monte-Carlo experiments.",
        epilog=DEFAULTS_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("convergence", parents=[common], epilog=DEFAULTS_EPILOG, formatter_class=fmt,
                       help="mean objective versus iteration for several array sizes")
    p.add_argument("--Ms", type=_ints, default=[2, 3, 4], help="array sizes, e.g. '2,3,4' (default)")

    p = sub.add_parser("sweep-power", parents=[common], epilog=DEFAULTS_EPILOG, formatter_class=fmt,
                       help="sum rate of every scheme versus transmit power")
    p.add_argument("--powers", type=_floats, default=[10, 15, 20, 25], help="P_s values in dBm (default 10,15,20,25)")

    p = sub.add_parser("sweep-antennas", parents=[common], epilog=DEFAULTS_EPILOG, formatter_class=fmt,
                       help="sum rate of every scheme versus M for several K")
    p.add_argument("--Ms", type=_ints, default=[2, 3, 4, 5, 6], help="array sizes (default 2..6)")
    p.add_argument("--Ks", type=_ints, default=[2, 3], help="user counts (default 2,3)")

    p = sub.add_parser("single", parents=[common], epilog=DEFAULTS_EPILOG, formatter_class=fmt,
                       help="one trial with a full per-iteration JSON dump")
    p.add_argument("--trial", type=int, default=0, help="trial index (default 0)")
    return parser


def resolve_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        changes[key.strip()] = yaml.safe_load(value)
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if changes:
        cfg = ScenarioConfig.from_dict({**cfg.to_dict(), **changes})
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.command == "single":
            dump = experiments.cmd_single(cfg, args.trial)
            args.out.mkdir(parents=True, exist_ok=True)
            path = args.out / "single.json"
            path.write_text(experiments.dumps(dump))
            print(json.dumps({"status": dump["status"], "sum_rate": dump["final"]["sum_rate"],
                              "iterations": dump["iterations"], "output": str(path)}))
            return 0 if dump["status"] != "infeasible" else 1
        if args.command == "convergence":
            report = experiments.cmd_convergence(cfg, args.Ms, args.threads)
        elif args.command == "sweep-power":
            report = experiments.cmd_sweep_power(cfg, args.powers, args.threads)
        else:
            report = experiments.cmd_sweep_antennas(cfg, args.Ms, args.Ks, args.threads)
        paths = report.write(args.out)
        print(json.dumps({"outputs": [str(p) for p in paths], "status_counts": report.metadata["status_counts"],
                          "wall_time_s": round(report.metadata["wall_time_s"], 3)}))
        if report.systemic_failure:
            print(json.dumps({"error": "systemic-failure", "detail": "no trial produced a usable result"}),
                  file=sys.stderr)
            return 1
        return 0
    except ConfigError as exc:
        print(json.dumps({"error": "config", "detail": str(exc)}), file=sys.stderr)
        return 2
    except (ManomaError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
