"""Domain types and outcome/privilege evaluation.

Outcome models map ``(unit, group, neighbor pattern)`` to an expected
outcome.  Two models are attached to every allocation problem: one that
may read every feature (used in the objective) and one restricted to the
non-descendant features ``x_i^<`` (used for privilege gaps).  The
restriction is enforced by handing the privilege model copies of the
units whose other features are NaN, so any read of a forbidden feature
surfaces as a non-finite result.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .graph import InterferenceGraph, neighbor_pattern

FEAS_TOL = 1e-9

NeighborPattern = tuple  # bits of z restricted to N(i), in neighbor order


@dataclass(frozen=True)
class GroupDomain:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        if len(labels) < 2:
            raise ValueError("a group domain needs at least 2 labels")
        if len(set(labels)) != len(labels):
            raise ValueError(f"group labels must be unique: {labels}")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise ValueError(f"unknown group label {label!r}") from None


@dataclass(frozen=True)
class Unit:
    """One individual (or school).

    ``prec_mask`` marks which entries of ``features`` are non-descendants
    of the group attribute and may be used by the privilege model.
    """

    id: str
    group: int
    features: np.ndarray
    prec_mask: np.ndarray
    coords: tuple[float, float] | None = None

    def __post_init__(self):
        feats = np.array(self.features, dtype=float).reshape(-1)
        mask = np.array(self.prec_mask, dtype=bool).reshape(-1)
        if feats.shape != mask.shape:
            raise ValueError(
                f"unit {self.id}: prec_mask length {mask.size} != features length {feats.size}"
            )
        feats.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "group", int(self.group))
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "prec_mask", mask)
        if self.coords is not None:
            object.__setattr__(self, "coords", (float(self.coords[0]), float(self.coords[1])))

    def restricted(self) -> "Unit":
        """Copy of the unit exposing only its non-descendant features."""
        feats = np.where(self.prec_mask, self.features, np.nan)
        return Unit(self.id, self.group, feats, self.prec_mask, self.coords)

    def __eq__(self, other):
        if not isinstance(other, Unit):
            return NotImplemented
        return (
            self.id == other.id
            and self.group == other.group
            and np.array_equal(self.features, other.features, equal_nan=True)
            and np.array_equal(self.prec_mask, other.prec_mask)
            and self.coords == other.coords
        )

    __hash__ = None


@dataclass(frozen=True)
class SEMParams:
    """Per-group coefficients of the max-interference outcome equation."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        arrs = [np.array(getattr(self, f), dtype=float).reshape(-1) for f in self.names]
        if len({a.size for a in arrs}) != 1:
            raise ValueError("alpha, beta, gamma, theta must have equal length")
        for name, a in zip(self.names, arrs):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    names = ("alpha", "beta", "gamma", "theta")

    def __len__(self):
        return self.alpha.size

    def as_matrix(self) -> np.ndarray:
        """Shape (n_groups, 4), columns alpha, beta, gamma, theta."""
        return np.column_stack([self.alpha, self.beta, self.gamma, self.theta])


class StructuralOutcomeModel(abc.ABC):
    """Expected outcome of one unit given its group and neighbor pattern."""

    n_groups: int

    @abc.abstractmethod
    def expected(
        self,
        units: Sequence[Unit],
        graph: InterferenceGraph,
        i: int,
        group: int,
        bits: NeighborPattern,
    ) -> float:
        ...


@dataclass(frozen=True)
class MaxInterferenceModel(StructuralOutcomeModel):
    """School-level equation with max-type spillovers.

    ``E[Y_i | a, p, f] = alpha[a] * max_{j in N(i), z_j=1} s(i,j)
    + beta[a] * max_{j in N(i)} s(i,j) p_j + gamma[a] * f_i + theta[a]``

    An empty active set contributes 0 to the first term.
    """

    params: SEMParams
    ap_ib_feature: int = 1
    counselors_feature: int = 0

    @property
    def n_groups(self) -> int:
        return len(self.params)

    def expected(self, units, graph, i, group, bits):
        nb = graph.neighbors[i]
        s = graph.similarities[i]
        on = np.asarray(bits, dtype=bool)
        treated = float(s[on].max()) if on.any() else 0.0
        if len(nb):
            p = np.array([units[j].features[self.ap_ib_feature] for j in nb])
            offered = float(np.max(s * p))
        else:
            offered = 0.0
        f = units[i].features[self.counselors_feature]
        pr = self.params
        return float(
            pr.alpha[group] * treated + pr.beta[group] * offered
            + pr.gamma[group] * f + pr.theta[group]
        )


@dataclass(frozen=True)
class LinearInterferenceModel(StructuralOutcomeModel):
    """Linear outcome equation with additive spillovers.

    ``E[Y_i] = w . x_i + intercept[a] + treatment[a] * z_i
    + sum_{j in N(i), j != i} spillover[a, z_i, a_j] * z_j``

    ``a_j`` is the factual group of neighbor ``j``.  The unit's own
    intervention is read from its slot in ``N(i)``.  Zero feature weights
    are skipped so a weight vector may cover features the privilege model
    cannot see.
    """

    feature_weights: np.ndarray
    intercept: np.ndarray
    treatment: np.ndarray
    spillover: np.ndarray | None = None

    def __post_init__(self):
        w = np.array(self.feature_weights, dtype=float).reshape(-1)
        b = np.array(self.intercept, dtype=float).reshape(-1)
        t = np.array(self.treatment, dtype=float).reshape(-1)
        g = b.size
        if t.size != g:
            raise ValueError("intercept and treatment must have one entry per group")
        if self.spillover is None:
            sp = np.zeros((g, 2, g))
        else:
            sp = np.array(self.spillover, dtype=float)
        if sp.shape != (g, 2, g):
            raise ValueError(f"spillover must have shape {(g, 2, g)}, got {sp.shape}")
        for name, a in (("feature_weights", w), ("intercept", b), ("treatment", t), ("spillover", sp)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} must be finite")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_groups(self) -> int:
        return self.intercept.size

    def expected(self, units, graph, i, group, bits):
        unit = units[i]
        if unit.features.size != self.feature_weights.size:
            raise ValueError(
                f"unit {unit.id}: {unit.features.size} features, model expects "
                f"{self.feature_weights.size}"
            )
        nz = self.feature_weights != 0
        value = float(self.feature_weights[nz] @ unit.features[nz])
        nb = graph.neighbors[i]
        bits = np.asarray(bits, dtype=np.int64)
        own = np.flatnonzero(nb == i)
        sp = self.spillover[group]
        if own.size:
            zi = int(bits[own[0]])
        else:
            if self.treatment[group] != 0 or np.any(sp[0] != sp[1]):
                raise ValueError(
                    f"unit {unit.id} is not in its own neighbor list, so its own "
                    "intervention cannot reach its outcome"
                )
            zi = 0
        value += self.intercept[group] + self.treatment[group] * zi
        for slot, j in enumerate(nb):
            if j != i and bits[slot]:
                value += sp[zi, units[j].group]
        return float(value)


@dataclass(frozen=True)
class TabularModel(StructuralOutcomeModel):
    """Explicit lookup ``(unit index, group, bits) -> expected outcome``."""

    table: Mapping[tuple, float]
    n_groups: int = 2

    def expected(self, units, graph, i, group, bits):
        key = (int(i), int(group), tuple(int(b) for b in bits))
        try:
            return float(self.table[key])
        except KeyError:
            raise ValueError(f"tabular model has no entry for {key}") from None


def _check_pattern(graph: InterferenceGraph, i: int, bits) -> tuple[int, ...]:
    bits = tuple(int(b) for b in bits)
    if len(bits) != graph.degree(i):
        raise ValueError(
            f"pattern length {len(bits)} != |N({i})| = {graph.degree(i)}"
        )
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"pattern must be binary, got {bits}")
    return bits


def expected_outcome(
    model: StructuralOutcomeModel,
    units: Sequence[Unit],
    graph: InterferenceGraph,
    i: int,
    group: int,
    bits: NeighborPattern,
) -> float:
    """Validated call into ``model.expected``."""
    if not 0 <= group < model.n_groups:
        raise ValueError(f"group index {group} out of range for {model.n_groups} groups")
    bits = _check_pattern(graph, i, bits)
    return model.expected(units, graph, i, group, bits)


@dataclass(frozen=True)
class AllocationProblem:
    """A budgeted allocation with per-unit privilege bounds.

    ``tau = inf`` drops the privilege constraints.
    """

    units: tuple[Unit, ...]
    graph: InterferenceGraph
    objective_model: StructuralOutcomeModel
    privilege_model: StructuralOutcomeModel
    groups: GroupDomain
    budget: int
    tau: float = float("inf")
    restricted_units: tuple[Unit, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        units = tuple(self.units)
        object.__setattr__(self, "units", units)
        n = len(units)
        if self.graph.n != n:
            raise ValueError(f"graph has {self.graph.n} units, problem has {n}")
        if len({u.id for u in units}) != n:
            raise ValueError("unit ids must be unique")
        g = len(self.groups)
        for u in units:
            if not 0 <= u.group < g:
                raise ValueError(f"unit {u.id}: group index {u.group} out of range")
        for m in (self.objective_model, self.privilege_model):
            if m.n_groups != g:
                raise ValueError(f"model covers {m.n_groups} groups, domain has {g}")
        if int(self.budget) != self.budget or not 0 <= self.budget <= n:
            raise ValueError(f"budget must be an integer in [0, {n}], got {self.budget}")
        object.__setattr__(self, "budget", int(self.budget))
        tau = float(self.tau)
        if not tau > 0:
            raise ValueError(f"tau must be > 0, got {tau}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "restricted_units", tuple(u.restricted() for u in units))
        zero = np.zeros(n, dtype=np.int64)
        for i in range(n):
            bits = neighbor_pattern(self.graph, zero, i)
            self.outcome(i, bits)
            for a in range(g):
                self.restricted_outcome(i, a, bits)

    @property
    def n(self) -> int:
        return len(self.units)

    def with_tau(self, tau: float) -> "AllocationProblem":
        return AllocationProblem(
            self.units, self.graph, self.objective_model, self.privilege_model,
            self.groups, self.budget, tau,
        )

    def with_budget(self, budget: int) -> "AllocationProblem":
        return AllocationProblem(
            self.units, self.graph, self.objective_model, self.privilege_model,
            self.groups, budget, self.tau,
        )

    def outcome(self, i: int, bits) -> float:
        """Objective-model outcome of unit ``i`` under its factual group."""
        return expected_outcome(
            self.objective_model, self.units, self.graph, i, self.units[i].group, bits
        )

    def restricted_outcome(self, i: int, group: int, bits) -> float:
        value = expected_outcome(
            self.privilege_model, self.restricted_units, self.graph, i, group, bits
        )
        if not np.isfinite(value):
            raise ValueError(
                f"privilege model read a feature outside x^prec for unit {self.units[i].id}"
            )
        return value


def privilege_gap(problem: AllocationProblem, i: int, a_prime: int, bits) -> float:
    """Advantage unit ``i`` draws from its factual group over ``a_prime``.

    Both evaluations use the privilege model, the same pattern and the
    same non-descendant features; only the group index changes.
    """
    if not 0 <= a_prime < len(problem.groups):
        raise ValueError(f"group index {a_prime} out of range")
    a = problem.units[i].group
    if a_prime == a:
        _check_pattern(problem.graph, i, bits)
        return 0.0
    return problem.restricted_outcome(i, a, bits) - problem.restricted_outcome(i, a_prime, bits)


@dataclass(frozen=True)
class PolicyReport:
    total: float
    outcomes: np.ndarray
    gaps: np.ndarray  # (n, n_groups); column a_i is 0
    budget_used: int
    feasible: bool
    max_gap: float


def evaluate_policy(problem: AllocationProblem, z) -> PolicyReport:
    """Evaluate objective, gaps and feasibility of a fixed allocation."""
    z = np.asarray(z)
    if z.shape != (problem.n,):
        raise ValueError(f"z must have length {problem.n}, got shape {z.shape}")
    if not np.all((z == 0) | (z == 1)):
        raise ValueError("z must be binary")
    z = z.astype(np.int64)
    g = len(problem.groups)
    outcomes = np.empty(problem.n)
    gaps = np.zeros((problem.n, g))
    for i in range(problem.n):
        bits = neighbor_pattern(problem.graph, z, i)
        outcomes[i] = problem.outcome(i, bits)
        for a in range(g):
            gaps[i, a] = privilege_gap(problem, i, a, bits)
    used = int(z.sum())
    max_gap = float(gaps.max()) if gaps.size else 0.0
    feasible = used <= problem.budget and max_gap <= problem.tau + FEAS_TOL
    return PolicyReport(float(outcomes.sum()), outcomes, gaps, used, feasible, max_gap)
