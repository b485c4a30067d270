"""Test 2: constant efficacy 0.7, 20 observations, 19-cell initial mesh.

    python3 scripts/run_test2.py [--out DIR] [--n-seeds N] [extra hivpip flags]

Runs T1 in {25, 50} at 1%, 3% and 5% noise with up to six refinements.
"""

import sys

from hivpip.cli import main

if __name__ == "__main__":
    args = ["run", "--test", "test2", "--t1", "25,50", "--sigma", "0.01,0.03,0.05", "--max-refinements", "6"]
    if "--out" not in sys.argv:
        args += ["--out", "results/test2"]
    sys.exit(main(args + sys.argv[1:]))
