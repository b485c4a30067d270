"""Mean relative error per refinement level over several seeds.

    python3 scripts/refinement_trend.py [test1|test2] [n_seeds]

Prints level-0 and level-3 means and their ratio for each T1, the quantity
the acceptance gate checks.
"""

import sys
import time

import numpy as np

from hivpip.experiment import TEST1, TEST2, run_case
from hivpip.optimizer import OptimizerConfig


def main(which: str = "test2", n_seeds: int = 10) -> None:
    base = TEST1 if which == "test1" else TEST2
    t1s = (50.0,) if which == "test1" else (25.0, 50.0)
    for t1 in t1s:
        start = time.perf_counter()
        rows = []
        for seed in range(n_seeds):
            errors = list(run_case(base.with_(t1=t1, seed=seed, optimizer=OptimizerConfig(max_refinements=3))).errors)
            rows.append(errors + [errors[-1]] * (4 - len(errors)))
        mean = np.mean(rows, axis=0)
        print(
            f"T1={t1:g}: mean e_eta per level {np.array2string(mean, precision=4)}, "
            f"level3/level0 = {mean[3] / mean[0]:.3f} ({time.perf_counter() - start:.1f} s)"
        )


if __name__ == "__main__":
    main(*(sys.argv[1:2] or ["test2"]), *[int(a) for a in sys.argv[2:3]])
