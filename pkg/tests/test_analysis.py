import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import additive_problem, housing_problem, random_problem
from fairalloc.analysis import (
    brute_force,
    group_allocation_summary,
    problem_fingerprint,
    solution_path,
    tau_grid,
    tau_range,
)
from fairalloc.bnb import Solution, Status


def test_brute_force_zero_budget():
    p = housing_problem(budget=0)
    s = brute_force(p)
    assert s.z.tolist() == [0, 0]
    assert s.objective == pytest.approx(140.0)


def test_brute_force_housing():
    s = brute_force(housing_problem())
    assert s.z.tolist() == [0, 1] and s.objective == pytest.approx(290.0)
    s = brute_force(housing_problem(interference=True, tau=10.0))
    assert s.z.tolist() == [1, 0] and s.objective == pytest.approx(240.0)


def test_brute_force_breaks_ties_lexicographically():
    # every unit gains exactly 1, so all single-unit allocations tie
    s = brute_force(additive_problem(budget=1))
    assert s.z.tolist() == [0, 0, 0, 1]
    assert s.objective == pytest.approx(3.0)


def test_brute_force_size_guard():
    big = random_problem(0, n=4, budget=2)
    object.__setattr__(big, "units", big.units * 8)  # n = 32, never evaluated
    with pytest.raises(ValueError, match="too large"):
        brute_force(big)


def test_brute_force_infeasible():
    s = brute_force(additive_problem(tau=0.5))
    assert s.status is Status.INFEASIBLE and s.z is None and s.bound == -math.inf


def test_tau_range_additive():
    lo, hi = tau_range(additive_problem())
    assert lo == pytest.approx(1.0) and hi == pytest.approx(1.0)


def test_tau_range_housing():
    lo, hi = tau_range(housing_problem())
    assert lo == pytest.approx(0.0, abs=1e-12)
    assert hi == pytest.approx(50.0)


def test_tau_grid_is_geometric_and_positive():
    grid = tau_grid(housing_problem(interference=True), 10)
    assert len(grid) == 10 and grid[0] > 0
    assert np.all(np.diff(grid) > 0)
    ratios = grid[1:] / grid[:-1]
    np.testing.assert_allclose(ratios, ratios[0])


def test_path_validation():
    p = housing_problem()
    with pytest.raises(ValueError, match="at least one"):
        solution_path(p, [])
    with pytest.raises(ValueError, match="> 0"):
        solution_path(p, [0.0, 1.0])
    with pytest.raises(ValueError, match="increasing"):
        solution_path(p, [1.0, 1.0])
    with pytest.raises(ValueError, match="increasing"):
        solution_path(p, [2.0, 1.0])


def test_additive_path_below_threshold_is_infeasible():
    path = solution_path(additive_problem(), [0.1, 0.5, 0.99, 1.0, 2.0, math.inf])
    status = [s.status for _, s in path.points]
    assert status[:3] == [Status.INFEASIBLE] * 3
    assert status[3:] == [Status.OPTIMAL] * 3
    obj = path.objectives()
    assert np.isnan(obj[:3]).all()
    assert obj[3] == obj[4] == obj[5]


def test_path_carries_fingerprint_and_inf_point():
    p = housing_problem(interference=True)
    path = solution_path(p, [1.0, 10.0, 60.0, math.inf])
    assert path.fingerprint == problem_fingerprint(p)
    assert path.fingerprint == problem_fingerprint(p.with_tau(3.0))
    assert path.fingerprint != problem_fingerprint(p.with_budget(2))
    assert path.taus[-1] == math.inf
    assert path.points[-1][1].objective == pytest.approx(path.points[-2][1].objective)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_path_objective_is_monotone(seed):
    p = random_problem(seed, n=int(np.random.default_rng(seed).integers(4, 9)))
    taus = list(tau_grid(p, 6)) + [math.inf]
    obj = solution_path(p, taus).objectives()
    seen = obj[~np.isnan(obj)]
    assert np.all(np.diff(seen) >= -1e-9)
    # once feasible, stays feasible
    feasible = ~np.isnan(obj)
    assert np.all(feasible[np.argmax(feasible):]) or not feasible.any()


def test_summary_conservation():
    p = random_problem(3, n=10, k=2, n_groups=3, budget=3, tau=math.inf)
    s = brute_force(p)
    summary = group_allocation_summary(p, s)
    assert summary.treated_counts.sum() == s.z.sum() == len(summary.treated_units)
    assert summary.outcome_totals.sum() == pytest.approx(s.objective, abs=1e-9)
    assert summary.objective == pytest.approx(s.objective, abs=1e-9)
    assert summary.groups == p.groups.labels
    ids = [u.id for u, zi in zip(p.units, s.z) if zi]
    assert [t["id"] for t in summary.treated_units] == ids


def test_summary_rejects_missing_allocation():
    p = additive_problem(tau=0.5)
    s = brute_force(p)
    with pytest.raises(ValueError, match="no allocation"):
        group_allocation_summary(p, s)
    assert isinstance(s, Solution)
