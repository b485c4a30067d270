"""Test 1: exponentially decaying efficacy, 15 observations, 14-cell initial mesh.

    python3 scripts/run_test1.py [--out DIR] [--n-seeds N] [extra hivpip flags]

Runs the T1 = 50 grid at 1%, 3% and 5% noise and prints the level table.
"""

import sys

from hivpip.cli import main

if __name__ == "__main__":
    args = ["run", "--test", "test1", "--t1", "50", "--sigma", "0.01,0.03,0.05", "--max-refinements", "4"]
    if "--out" not in sys.argv:
        args += ["--out", "results/test1"]
    sys.exit(main(args + sys.argv[1:]))
