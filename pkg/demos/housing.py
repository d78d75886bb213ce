"""Two households, one subsidy.

Without a fairness bound the subsidy goes to household 2 because the
privileged group gains more from it.  Adding interference and a tight
bound on privilege moves it to household 1.
"""

import math

from fairalloc import evaluate_policy, generate_synthetic, solve


def main():
    plain = generate_synthetic("housing").problem()
    s = solve(plain)
    print(f"no interference, tau=inf: z={s.z.tolist()} objective={s.objective:g}")

    inter = generate_synthetic("housing_interference", {"budget": 2}).problem()
    for z in ((0, 0), (1, 0), (0, 1), (1, 1)):
        r = evaluate_policy(inter, z)
        print(f"  z={z} total={r.total:g} worst gap={r.gaps.max():g}")

    one = inter.with_budget(1)
    for tau in (math.inf, 50.0, 10.0):
        s = solve(one.with_tau(tau))
        print(f"interference, B=1, tau={tau:g}: z={s.z.tolist()} objective={s.objective:g}")


if __name__ == "__main__":
    main()
