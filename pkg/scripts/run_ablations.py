"""Run every DD-OPG ablation sweep on cartpole (3 seeds each).

Usage: python scripts/run_ablations.py [OUT_DIR] [extra harness flags...]
"""
import sys

from ddopg.harness import ABLATIONS, main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/ablations"
    for sweep in ABLATIONS:
        code = main(["ablation", "--sweep", sweep, "--max-steps", "50000", "--out", out, *sys.argv[2:]])
        if code:
            sys.exit(code)
