"""Brute-force oracle, tau solution paths and per-group allocation summaries."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from .bnb import TIE_TOL, Solution, SolverConfig, Status, solve
from .graph import neighbor_pattern
from .model import FEAS_TOL, AllocationProblem, evaluate_policy, privilege_gap

MAX_BRUTE_N = 22
MAX_BRUTE_POINTS = 10**7


def _allocations(n: int, budget: int):
    """Every binary vector with at most ``budget`` ones, in lexicographic order."""
    z = np.zeros(n, dtype=np.int64)

    def rec(pos, left):
        if pos == n:
            yield z.copy()
            return
        yield from rec(pos + 1, left)
        if left:
            z[pos] = 1
            yield from rec(pos + 1, left - 1)
            z[pos] = 0

    return rec(0, budget)


def brute_force(problem: AllocationProblem) -> Solution:
    """Enumerate every allocation within budget.

    Uses only the outcome models; per-unit values are memoized by
    neighbor pattern.  Returns the lexicographically smallest maximizer.
    """
    n, B = problem.n, problem.budget
    points = sum(comb(n, b) for b in range(B + 1))
    if n > MAX_BRUTE_N or points > MAX_BRUTE_POINTS:
        raise ValueError(
            f"instance too large to enumerate: n={n}, {points} allocations within budget"
        )
    g = len(problem.groups)
    value_cache: list[dict] = [{} for _ in range(n)]
    gap_cache: list[dict] = [{} for _ in range(n)]

    def unit_terms(i, bits):
        v = value_cache[i].get(bits)
        if v is None:
            v = problem.outcome(i, bits)
            value_cache[i][bits] = v
            gap_cache[i][bits] = max(privilege_gap(problem, i, a, bits) for a in range(g))
        return v, gap_cache[i][bits]

    best_z, best_obj = None, -math.inf
    for za in _allocations(n, B):
        total, ok = 0.0, True
        for i in range(n):
            v, gap = unit_terms(i, neighbor_pattern(problem.graph, za, i))
            if gap > problem.tau + FEAS_TOL:
                ok = False
                break
            total += v
        if ok and total > best_obj + TIE_TOL:
            best_z, best_obj = za, total

    if best_z is None:
        return Solution(Status.INFEASIBLE, None, None, -math.inf, None, 0, problem.tau, B)
    report = evaluate_policy(problem, best_z)
    return Solution(
        Status.OPTIMAL, best_z, best_obj, best_obj, report.gaps, 0, problem.tau, B
    )


def problem_fingerprint(problem: AllocationProblem) -> str:
    """SHA-256 over everything that determines the program except tau."""
    h = hashlib.sha256()
    for u in problem.units:
        h.update(json.dumps([u.id, u.group, u.coords]).encode())
        h.update(u.features.tobytes())
        h.update(u.prec_mask.tobytes())
    for nb, s in zip(problem.graph.neighbors, problem.graph.similarities):
        h.update(nb.tobytes())
        h.update(s.tobytes())
    h.update(repr(problem.objective_model).encode())
    h.update(repr(problem.privilege_model).encode())
    h.update(json.dumps([list(problem.groups.labels), problem.budget]).encode())
    return h.hexdigest()


@dataclass(frozen=True)
class SolutionPath:
    points: tuple[tuple[float, Solution], ...]
    budget: int
    fingerprint: str

    @property
    def taus(self) -> np.ndarray:
        return np.array([t for t, _ in self.points])

    def objectives(self) -> np.ndarray:
        """Objective per point, NaN where no allocation was found."""
        return np.array(
            [np.nan if s.objective is None else s.objective for _, s in self.points]
        )


def solution_path(
    problem: AllocationProblem,
    taus: Sequence[float],
    config: SolverConfig | None = None,
) -> SolutionPath:
    """Solve ``problem`` once per tau, each solve from scratch."""
    taus = [float(t) for t in taus]
    if not taus:
        raise ValueError("need at least one tau")
    if any(t <= 0 for t in taus):
        raise ValueError("every tau must be > 0")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be strictly increasing")
    points = tuple((t, solve(problem.with_tau(t), config)) for t in taus)
    return SolutionPath(points, problem.budget, problem_fingerprint(problem))


def tau_range(problem: AllocationProblem) -> tuple[float, float]:
    """Bracket the interesting tau values.

    The lower end is the largest, over units, of the smallest worst-case
    gap any neighbor pattern can give that unit; no allocation is
    feasible below it.  At or above the upper end (the largest gap any
    pattern produces) the privilege rows cannot bind.
    """
    from .milp import encode  # local: encoding is only needed for the coefficient tables

    program = encode(problem.with_tau(math.inf))
    worst = [gc.max(axis=1) for gc in program.gap_coef]
    lower = max(float(w.min()) for w in worst)
    upper = max(float(w.max()) for w in worst)
    return lower, upper


def tau_grid(problem: AllocationProblem, num: int = 10, floor: float = 1e-6) -> np.ndarray:
    """Geometric grid from the infeasibility estimate up to the vacuous level."""
    lower, upper = tau_range(problem)
    lo = max(lower, floor)
    hi = max(upper, lo * (1 + 1e-6), floor * 2)
    return np.geomspace(lo, hi, num)


@dataclass(frozen=True)
class GroupAllocationSummary:
    groups: tuple[str, ...]
    treated_counts: np.ndarray
    outcome_totals: np.ndarray
    objective: float
    treated_units: tuple[dict, ...]


def group_allocation_summary(problem: AllocationProblem, solution: Solution) -> GroupAllocationSummary:
    """Count treated units and total expected outcome per group."""
    if solution.z is None:
        raise ValueError(f"solution has no allocation (status {solution.status.value})")
    z = np.asarray(solution.z)
    report = evaluate_policy(problem, z)
    g = len(problem.groups)
    group_of = np.array([u.group for u in problem.units])
    counts = np.bincount(group_of[z == 1], minlength=g)
    totals = np.bincount(group_of, weights=report.outcomes, minlength=g)
    treated = tuple(
        {
            "id": u.id,
            "group": problem.groups.labels[u.group],
            "lon": None if u.coords is None else u.coords[0],
            "lat": None if u.coords is None else u.coords[1],
        }
        for u, zi in zip(problem.units, z)
        if zi
    )
    return GroupAllocationSummary(problem.groups.labels, counts, totals, report.total, treated)
