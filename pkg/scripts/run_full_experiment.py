#!/usr/bin/env python3
"""Full benchmark: default cohort, 10-fold cross-validation, fold ensemble.

By default this trains the single best-known cell (hidden 10, lr 0.01) on
the 2177-admission cohort and evaluates against both baselines; about a
minute on one core. --grid searches the declared 3x3 grid first, which
includes hidden sizes up to 1000 and is orders of magnitude slower; pair
it with --jobs to train folds in parallel.
"""

import argparse
import sys

from hemocult.cli import entrypoint


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="runs/full")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--grid", action="store_true",
                        help="search the full hyperparameter grid before training")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()
    argv = ["pipeline", "--out-dir", args.out_dir, "--seed", str(args.seed),
            "--jobs", str(args.jobs)]
    if args.grid:
        argv.append("--grid")
    else:
        argv.extend(["--hidden", "10", "--lr", "0.01"])
    return entrypoint(argv)


if __name__ == "__main__":
    sys.exit(main())
