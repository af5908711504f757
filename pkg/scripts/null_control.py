#!/usr/bin/env python3
"""Null-signal control: repeated pipelines with the class signal removed.

With signal_strength 0 the two classes are draws from one generative
process, so the ensemble's test PR AUC should sit at the test-set
prevalence up to Monte Carlo error. Prints one line per seed and an
aggregate mean with its standard error.
"""

import argparse
import io
import math
import re
import shutil
import statistics
import sys
from contextlib import redirect_stdout
from pathlib import Path

from hemocult.cli import entrypoint

SUMMARY = re.compile(r"test_pr_auc=([0-9.e+-]+) baseline1=([0-9.e+-]+)")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=5, help="number of runs")
    parser.add_argument("--first-seed", type=int, default=1)
    parser.add_argument("--out-dir", default="runs/null")
    parser.add_argument("--quick", action="store_true",
                        help="reduced cohort, one fast training cell")
    parser.add_argument("--keep", action="store_true",
                        help="keep per-seed artifacts instead of deleting them")
    args = parser.parse_args()

    aucs = []
    prevalence = None
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        out = Path(args.out_dir) / f"seed{seed}"
        argv = ["pipeline", "--out-dir", str(out), "--seed", str(seed),
                "--signal-strength", "0", "--hidden", "10", "--lr", "0.01"]
        if args.quick:
            argv.append("--quick")
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = entrypoint(argv)
        if code != 0:
            sys.stderr.write(buf.getvalue())
            return code
        match = SUMMARY.search(buf.getvalue())
        auc = float(match.group(1))
        prevalence = float(match.group(2))
        aucs.append(auc)
        print(f"seed={seed} test_pr_auc={auc!r}")
        if not args.keep:
            shutil.rmtree(out, ignore_errors=True)

    mean = statistics.fmean(aucs)
    stderr = (statistics.stdev(aucs) / math.sqrt(len(aucs))
              if len(aucs) > 1 else float("nan"))
    print(f"runs={len(aucs)} mean={mean:.4f} prevalence={prevalence:.4f} "
          f"diff={mean - prevalence:+.4f} stderr={stderr:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
