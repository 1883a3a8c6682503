"""Cartpole benchmark: DD-OPG against REINFORCE on the first three seeds.

Usage: python scripts/run_benchmark.py [OUT_DIR] [extra harness flags...]
"""
import sys

from ddopg.harness import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/benchmark"
    sys.exit(main(["benchmark", "--env", "cartpole", "--agents", "ddopg,reinforce",
                   "--seeds", "404,931,159", "--max-steps", "50000", "--out", out, *sys.argv[2:]]))
