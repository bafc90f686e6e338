"""Command line entry point: ``deepratio <subcommand> --config <path> ...``."""

from __future__ import annotations

import argparse
import logging
import sys

from .bench import (
    ConfigError,
    compare_methods,
    load_config,
    run_experiment,
    run_features,
    run_simulate,
    sweep_minibatch,
)
from .series import DataFormatError


def _common(p: argparse.ArgumentParser, multi_config: bool = False) -> None:
    if multi_config:
        p.add_argument("--config", action="append", required=True,
                       help="experiment config (repeat for each method)")
    else:
        p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepratio", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("simulate", help="export simulated series as CSV"))
    _common(sub.add_parser("run", help="run one experiment"))
    sweep = sub.add_parser("sweep-minibatch", help="ADL versus minibatch size for LSIF/BARR/DSKL")
    _common(sweep)
    sweep.add_argument("--sizes", default="10,100,200,1000",
                       help="comma separated minibatch sizes (default: %(default)s)")
    _common(sub.add_parser("compare", help="compare methods on one data source"), multi_config=True)
    _common(sub.add_parser("features", help="windowed energy features as a CSV dataset"))
    return parser


def _overrides(args) -> dict:
    out = {"seed": args.seed, "output": args.out, "workers": args.workers}
    if args.no_figures:
        out["figures"] = False
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            path = run_simulate(args.config, args.out or "simulated", args.seed)
            print(f"wrote {path}")
        elif args.command == "features":
            path = run_features(args.config, args.out or "features", args.seed)
            print(f"wrote {path}")
        elif args.command == "run":
            cfg = load_config(args.config, **_overrides(args))
            report = run_experiment(cfg)
            if report.summary is None:
                print("error: no series produced a scored change point", file=sys.stderr)
                return 3
            s = report.summary
            print(f"{cfg.method}: ADL mean {s.mean:.3f}, bootstrap median {s.median:.3f} "
                  f"over {len(s.per_series_lags)} series -> {cfg.output}")
        elif args.command == "sweep-minibatch":
            cfg = load_config(args.config, **_overrides(args))
            sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
            sweep = sweep_minibatch(cfg, sizes)
            sys.stdout.write(sweep.csv_text())
        elif args.command == "compare":
            cfgs = [load_config(c, **_overrides(args)) for c in args.config]
            reports = compare_methods(cfgs)
            for r in reports:
                med = "n/a" if r.summary is None else f"{r.summary.median:.3f}"
                print(f"{r.config.method}: bootstrap median ADL {med}")
    except (ConfigError, DataFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
