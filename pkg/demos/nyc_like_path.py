"""Trade-off curve on a 345-school synthetic city.

One group's intervention effect is made dominant, so the unconstrained
optimum gives it every seat; tightening tau shifts seats to the others.
Takes a few minutes on one core.
"""

import math
import sys

import numpy as np

from fairalloc import generate_synthetic, solution_path, tau_grid


def main(points=6):
    inst = generate_synthetic("nyc_like", {"dominant": "white", "noise": 0.0}, seed=1)
    p = inst.problem()
    group_of = np.array([u.group for u in p.units])
    taus = [*tau_grid(p, points).tolist(), math.inf]
    print("tau        status      objective  " + " ".join(f"{g:>9}" for g in p.groups.labels))
    for tau, sol in solution_path(p, taus).points:
        if sol.z is None:
            print(f"{tau:<10.4g} {sol.status.value}")
            continue
        counts = np.bincount(group_of[sol.z == 1], minlength=len(p.groups))
        print(f"{tau:<10.4g} {sol.status.value:<11} {sol.objective:9.4f}  "
              + " ".join(f"{c:9d}" for c in counts))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 6)
