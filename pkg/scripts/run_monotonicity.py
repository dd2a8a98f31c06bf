#!/usr/bin/env python3
"""Component-addition monotonicity on the desk-scale shortest-path grid.

Runs all eight subsets of the c/o/s components over one base error, then
walks every addition order and reports any step that raises mean normalized
regret by more than the tolerance. Exits 1 when a regression is found.
"""
import argparse
import sys

from cosdfl.cli import main as cli_main


def run(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/monotonicity")
    parser.add_argument("--problem", default="sp5x5")
    parser.add_argument("--base", default="mse", choices=["mse", "mae"])
    parser.add_argument("--seeds", default="0,1,2,3,4")
    parser.add_argument("--tolerance", type=float, default=0.05)
    args = parser.parse_args(argv)
    return cli_main(["monotonicity", "--problem", args.problem,
                     "--base", args.base, "--seeds", args.seeds,
                     "--tolerance", str(args.tolerance),
                     "--out-dir", args.out])


if __name__ == "__main__":
    sys.exit(run())
