"""Command line interface: ``nystromngd run|spectrum <config> [options]``."""

from __future__ import annotations

import argparse
import json
from dataclasses import replace

from .harness import dump_spectrum, load_config, run_experiment


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nystromngd",
        description="Train small neural PDE solvers with Nystrom-preconditioned "
        "natural gradient descent and baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("config", help="path to a flat key = value config file")
    run.add_argument("--out", metavar="DIR", help="override the output directory")
    run.add_argument("--seed", type=int, help="override the base seed")

    spect = sub.add_parser(
        "spectrum", help="dump the normalized Gramian spectrum at initialization"
    )
    spect.add_argument("config", help="path to a flat key = value config file")
    spect.add_argument("--top", type=int, default=None, help="keep only the top K values")
    spect.add_argument("--out", metavar="DIR", help="override the output directory")
    spect.add_argument("--seed", type=int, help="override the base seed")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.command == "run":
        summary = run_experiment(config, out_dir=args.out)
        print(json.dumps(summary, indent=2))
    else:
        ratios = dump_spectrum(config, out_dir=args.out, top=args.top)
        print(f"wrote {ratios.shape[0]} spectrum values")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
