#!/usr/bin/env python3
"""Smoke experiment: the quick pipeline profile on a reduced cohort.

Generates 300 admissions (40 positive), trains a single hidden=10 cell for
at most 20 epochs per fold, and evaluates the fold ensemble on the held-out
test split. Finishes in well under a minute on one core.
"""

import argparse
import sys

from hemocult.cli import entrypoint


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="runs/quick")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--folds", type=int, default=10)
    args = parser.parse_args()
    return entrypoint(["pipeline", "--out-dir", args.out_dir,
                       "--seed", str(args.seed), "--folds", str(args.folds),
                       "--quick"])


if __name__ == "__main__":
    sys.exit(main())
