"""A purely additive group effect makes every allocation infeasible below tau=1."""

import math

from fairalloc import generate_synthetic, solution_path


def main():
    inst = generate_synthetic("additive_infeasible")
    path = solution_path(inst.problem(), [*inst.config.tau_list, math.inf])
    for tau, sol in path.points:
        obj = "-" if sol.objective is None else f"{sol.objective:g}"
        print(f"tau={tau:<5g} {sol.status.value:<11} objective={obj}")


if __name__ == "__main__":
    main()
