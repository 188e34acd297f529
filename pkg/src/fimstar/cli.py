"""Command-line entry point.

    fimstar run <experiment> --config cfg.yaml --seeds 1,2,3 --out results/
    fimstar report complexity --config cfg.yaml
    fimstar aggregate --out plot.csv [--metric ee] results/lr_sweep/*/seed_*.csv
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config
from .experiments import EXPERIMENTS, complexity_report, emit_plot_data, run_experiment
from .agent import LOG_COLUMNS


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.replace(" ", "").split(",") if s]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("need at least one seed")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fimstar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write per-seed CSV logs")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--config", default=None, help="YAML config (defaults when omitted)")
    run.add_argument("--seeds", type=_seed_list, default=None,
                     help="comma-separated seeds (default: training.seeds from the config)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--workers", type=int, default=None, help="parallel processes")
    run.add_argument("--series", nargs="+", default=None, help="only run these arms")

    report = sub.add_parser("report", help="print a report")
    report.add_argument("what", choices=("complexity",))
    report.add_argument("--config", default=None)

    agg = sub.add_parser("aggregate", help="mean/stderr over seeds in long format")
    agg.add_argument("--out", required=True)
    agg.add_argument("--metric", default="ee", choices=[c for c in LOG_COLUMNS if c != "episode"])
    agg.add_argument("inputs", nargs="+")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            seeds = args.seeds if args.seeds is not None else cfg.training.seeds
            paths = run_experiment(args.experiment, cfg, seeds, args.out, workers=args.workers,
                                   series=args.series)
            for label, files in paths.items():
                for p in files:
                    print(f"{label}\t{p}")
        elif args.command == "report":
            cfg = load_config(args.config)
            print(json.dumps(complexity_report(cfg), indent=2))
        else:
            emit_plot_data(args.inputs, args.metric, args.out)
            print(args.out)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
