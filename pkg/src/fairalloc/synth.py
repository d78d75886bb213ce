"""Seeded synthetic instances with known generating models.

Kinds
-----
housing
    Two households, one per group, with a pure treatment boost that is
    larger for the privileged group ``w``.  No interference.
housing_interference
    Same two households plus a penalty of 10 on an untreated household
    for every treated neighbor in group ``w``.
additive_infeasible
    ``Y = I(A = w) + Z``: every ``w`` unit carries a privilege gap of
    exactly 1 under any allocation.
nyc_like
    School-like units scattered around group-specific spatial anchors in
    a lon/lat box, with max-interference outcomes.
random
    Small random instances (linear or max models) for oracle checks.

Conventions of the nyc_like generator: counselors are drawn from a gamma
distribution and rounded to half steps (part-time counselors count as
0.5); group labels are assigned before positions, each unit then being
placed near one of its group's anchors.  Effect sizes are specified as
the outcome change from treating the unit itself, so ``alpha`` is that
size divided by the self similarity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .graph import InterferenceGraph, build_knn_graph
from .io import (
    BASE_FEATURES,
    ModelPair,
    RunConfig,
    UnitsTable,
    dump_config,
    models_to_json,
    write_json,
    write_units,
)
from .model import (
    AllocationProblem,
    GroupDomain,
    LinearInterferenceModel,
    MaxInterferenceModel,
    SEMParams,
    StructuralOutcomeModel,
    Unit,
)

KINDS = ("housing", "housing_interference", "additive_infeasible", "nyc_like", "random")

NYC_BOX = ((-74.25, -73.70), (40.50, 40.92))
NYC_GROUPS = ("black", "Hispanic", "white")


@dataclass(frozen=True)
class SyntheticInstance:
    kind: str
    seed: int
    table: UnitsTable
    objective_model: StructuralOutcomeModel
    privilege_model: StructuralOutcomeModel
    graph: InterferenceGraph
    config: RunConfig
    info: Mapping[str, Any]

    @property
    def units(self) -> tuple[Unit, ...]:
        return self.table.units

    @property
    def groups(self) -> GroupDomain:
        return self.table.groups

    @property
    def models(self) -> ModelPair:
        return ModelPair(self.objective_model, self.privilege_model)

    def problem(self, tau: float = math.inf, budget: int | None = None) -> AllocationProblem:
        return AllocationProblem(
            self.table.units, self.graph, self.objective_model, self.privilege_model,
            self.table.groups, self.config.budget if budget is None else budget, tau,
        )

    def write(self, directory: str | Path) -> dict[str, Path]:
        """Write ``units.csv``, ``model.json`` and ``config.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "units": directory / "units.csv",
            "model": directory / "model.json",
            "config": directory / "config.json",
        }
        t = self.table
        write_units(paths["units"], t.units, t.groups, t.feature_names, t.calculus, t.outcome)
        write_json(paths["model"], models_to_json(self.models, t))
        dump_config(self.config, paths["config"])
        return paths


def _observed_outcomes(model, units, graph, calculus, rng, noise) -> np.ndarray:
    """Expected outcome under the observed Calculus pattern, plus noise."""
    y = np.array([
        model.expected(units, graph, i, units[i].group, tuple(calculus[graph.neighbors[i]]))
        for i in range(len(units))
    ])
    if noise > 0:
        y = y + rng.normal(0.0, noise, size=len(y))
    return y


def _finish(kind, seed, units, groups, feature_names, calculus, outcome,
            obj, priv, config, info) -> SyntheticInstance:
    table = UnitsTable(
        tuple(units), groups, tuple(feature_names),
        np.asarray(calculus, dtype=np.int64), np.asarray(outcome, dtype=float),
    )
    graph = table.build_graph(config)
    return SyntheticInstance(kind, seed, table, obj, priv, graph, config, dict(info))


def _check_params(kind, params, allowed):
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ValueError(f"unknown {kind} parameters: {unknown}")


def _housing(params, seed, interference: bool) -> SyntheticInstance:
    _check_params("housing", params, ("x1", "x2", "budget"))
    x1 = float(params.get("x1", 60.0))
    x2 = float(params.get("x2", 80.0))
    groups = GroupDomain(("b", "w"))
    names = (*BASE_FEATURES, "x")
    mask = [True, True, False]
    units = [
        Unit("1", 0, [0.0, 0.0, x1], mask, (0.0, 0.0)),
        Unit("2", 1, [0.0, 0.0, x2], mask, (1.0, 0.0)),
    ]
    spill = np.zeros((2, 2, 2))
    if interference:
        # untreated units lose 10 per treated neighbor in group w
        spill[:, 0, 1] = -10.0
    obj = LinearInterferenceModel([0.0, 0.0, 1.0], [0.0, 0.0], [100.0, 150.0], spill)
    # the privilege model may not read x; only the group-dependent terms remain
    priv = LinearInterferenceModel([0.0, 0.0, 0.0], [0.0, 0.0], [100.0, 150.0], spill)
    config = RunConfig(
        k=2 if interference else 1, budget=int(params.get("budget", 1)),
        model="linear_interference", seed=seed, groups=groups.labels,
        outcome_bounds=None, prec_feature_list=BASE_FEATURES,
    )
    outcome = [x1, x2]
    kind = "housing_interference" if interference else "housing"
    return _finish(kind, seed, units, groups, names, [0, 0], outcome, obj, priv, config, {})


def _additive(params, seed) -> SyntheticInstance:
    _check_params("additive_infeasible", params, ("n", "budget"))
    n = int(params.get("n", 4))
    if n < 2:
        raise ValueError("additive_infeasible needs n >= 2")
    rng = np.random.default_rng(seed)
    groups = GroupDomain(("b", "w"))
    g = np.arange(n) % 2
    rng.shuffle(g)
    units = [
        Unit(str(i + 1), int(g[i]), [0.0, 0.0], [True, True], (float(i), 0.0))
        for i in range(n)
    ]
    model = LinearInterferenceModel([0.0, 0.0], [0.0, 1.0], [1.0, 1.0])
    config = RunConfig(
        k=1, budget=int(params.get("budget", 1)), model="linear_interference",
        seed=seed, groups=groups.labels, outcome_bounds=None,
        tau_list=(0.1, 0.5, 0.99, 1.0, 2.0),
    )
    outcome = g.astype(float)
    return _finish("additive_infeasible", seed, units, groups, BASE_FEATURES,
                   np.zeros(n), outcome, model, model, config, {"min_feasible_tau": 1.0})


def _place(rng, n, anchors, spread, min_sep, box):
    """Rejection-sample points around anchors keeping a minimum separation."""
    (x0, x1), (y0, y1) = box
    pts = np.empty((n, 2))
    for i in range(n):
        for _ in range(10_000):
            a = anchors[rng.integers(len(anchors))]
            p = a + rng.normal(0.0, spread, size=2)
            if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
                continue
            if i == 0 or np.min(np.hypot(*(pts[:i] - p).T)) >= min_sep:
                pts[i] = np.round(p, 6)
                break
        else:
            raise RuntimeError("could not place units; lower min_sep or n")
    return pts


def _nyc_like(params, seed) -> SyntheticInstance:
    p = {
        "n": 345,
        "k": 5,
        "budget": 25,
        "shares": (0.35, 0.40, 0.25),
        "anchors_per_group": 4,
        "spread": 0.035,
        "min_sep": 0.004,
        "self_factor": 2.0,
        "effect_alpha": (0.10, 0.12, 0.20),
        "effect_beta": (0.05, 0.06, 0.08),
        "gamma": (0.015, 0.015, 0.02),
        "theta": (0.28, 0.30, 0.38),
        "ap_ib_rate": (0.55, 0.60, 0.85),
        "calculus_rate": (0.40, 0.45, 0.70),
        "noise": 0.02,
        "dominant": None,
        "dominance_ratio": 0.5,
    }
    unknown = set(params) - set(p)
    if unknown:
        raise ValueError(f"unknown nyc_like parameters: {sorted(unknown)}")
    p.update(params)
    rng = np.random.default_rng(seed)
    groups = GroupDomain(NYC_GROUPS)
    G = len(groups)
    n = int(p["n"])

    group = rng.choice(G, size=n, p=np.asarray(p["shares"]) / np.sum(p["shares"]))
    (x0, x1), (y0, y1) = NYC_BOX
    anchors = [
        np.column_stack([rng.uniform(x0 + 0.05, x1 - 0.05, p["anchors_per_group"]),
                         rng.uniform(y0 + 0.04, y1 - 0.04, p["anchors_per_group"])])
        for _ in range(G)
    ]
    coords = np.empty((n, 2))
    for a in range(G):
        rows = np.flatnonzero(group == a)
        coords[rows] = _place(rng, rows.size, anchors[a], p["spread"], 0.0, NYC_BOX)
    # enforce separation globally by re-drawing offenders near their anchors
    for i in range(n):
        for _ in range(10_000):
            others = np.delete(coords, i, axis=0)
            if np.min(np.hypot(*(others - coords[i]).T)) >= p["min_sep"]:
                break
            coords[i] = _place(rng, 1, anchors[group[i]], p["spread"], 0.0, NYC_BOX)[0]
        else:
            raise RuntimeError("could not separate units; lower min_sep or n")

    counselors = np.round(rng.gamma(2.0, 1.2, size=n) * 2) / 2
    ap_ib = (rng.random(n) < np.asarray(p["ap_ib_rate"])[group]).astype(int)
    calculus = (rng.random(n) < np.asarray(p["calculus_rate"])[group]).astype(int)

    self_factor = float(p["self_factor"])
    effect_alpha = np.asarray(p["effect_alpha"], dtype=float)
    info: dict[str, Any] = {}
    if p["dominant"] is not None:
        # Treating a non-dominant unit is worth at most rho * E + D * E / c
        # (own gain plus spillover to at most D in-neighbors), treating an
        # untreated dominant unit at least E * (1 - 1/c); c > (1 + D) / (1 - rho)
        # makes every optimal unconstrained allocation dominant-only.
        dom = groups.index(p["dominant"])
        rho = float(p["dominance_ratio"])
        if not 0 <= rho < 1:
            raise ValueError("dominance_ratio must be in [0, 1)")
        if np.sum(group == dom) <= p["budget"]:
            raise ValueError("the dominant group needs more units than the budget")
        probe = build_knn_graph(coords, p["k"], True, self_factor)
        D = int(probe.in_degree().max())
        self_factor = max(self_factor, 1.25 * (1 + D) / (1 - rho))
        effect_alpha = np.full(G, rho * effect_alpha[dom])
        effect_alpha[dom] = float(p["effect_alpha"][dom])
        info.update(dominant=p["dominant"], max_in_degree=D, dominance_ratio=rho)
    info["self_factor"] = self_factor

    config = RunConfig(
        k=int(p["k"]), include_self=True, self_factor=self_factor,
        budget=int(p["budget"]), seed=seed, groups=groups.labels,
    )
    units = [
        Unit(f"S{i + 1:03d}", int(group[i]), [counselors[i], float(ap_ib[i])],
             [True, True], (float(coords[i, 0]), float(coords[i, 1])))
        for i in range(n)
    ]
    graph = build_knn_graph(coords, config.k, True, self_factor)
    s_self = float(graph.similarities[0][0])
    params_ = SEMParams(
        alpha=effect_alpha / s_self,
        beta=np.asarray(p["effect_beta"], dtype=float) / s_self,
        gamma=p["gamma"],
        theta=p["theta"],
    )
    model = MaxInterferenceModel(params_)
    outcome = _observed_outcomes(model, units, graph, calculus, rng, float(p["noise"]))
    if np.any((outcome < 0) | (outcome > 1)):
        raise ValueError("generated outcomes left [0, 1]; reduce effects or noise")
    info["s_self"] = s_self
    return _finish("nyc_like", seed, units, groups, BASE_FEATURES, calculus, outcome,
                   model, model, config, info)


def _random(params, seed) -> SyntheticInstance:
    _check_params("random", params, ("n", "k", "n_groups", "budget", "include_self", "model"))
    rng = np.random.default_rng(seed)
    n = int(params.get("n", rng.integers(3, 13)))
    k = int(params.get("k", rng.integers(1, min(3, n) + 1)))
    G = int(params.get("n_groups", rng.integers(2, 4)))
    budget = int(params.get("budget", rng.integers(0, min(4, n) + 1)))
    include_self = bool(params.get("include_self", rng.random() < 0.8))
    if not include_self and k >= n:
        k = n - 1
    kind = params.get("model", "linear" if rng.random() < 0.5 else "max")
    groups = GroupDomain(tuple(f"g{a}" for a in range(G)))
    group = rng.integers(0, G, size=n)
    group[: min(G, n)] = rng.permutation(G)[: min(G, n)]
    coords = np.round(rng.uniform(0, 10, size=(n, 2)), 3)
    counselors = np.round(rng.uniform(0, 4, size=n) * 2) / 2
    ap_ib = rng.integers(0, 2, size=n)
    calculus = rng.integers(0, 2, size=n)
    units = [
        Unit(f"u{i}", int(group[i]), [counselors[i], float(ap_ib[i])], [True, True],
             (float(coords[i, 0]), float(coords[i, 1])))
        for i in range(n)
    ]
    if kind == "max":
        obj = MaxInterferenceModel(SEMParams(
            alpha=rng.uniform(0, 2, G), beta=rng.uniform(0, 1, G),
            gamma=rng.uniform(0, 0.5, G), theta=rng.uniform(0, 1, G),
        ))
        # privilege model drawn separately so the two roles are exercised
        priv = MaxInterferenceModel(SEMParams(
            alpha=rng.uniform(0, 2, G), beta=rng.uniform(0, 1, G),
            gamma=rng.uniform(0, 0.5, G), theta=rng.uniform(0, 1, G),
        )) if rng.random() < 0.5 else obj
    elif kind == "linear":
        treat = rng.uniform(0, 3, G) if include_self else np.zeros(G)
        spill = rng.uniform(-1, 1, size=(G, 2, G))
        if not include_self:
            spill[:, 1] = spill[:, 0]
        obj = LinearInterferenceModel(rng.uniform(-1, 1, 2), rng.uniform(0, 2, G), treat, spill)
        priv = obj
    else:
        raise ValueError(f"unknown random model {kind!r}")
    config = RunConfig(
        k=k, include_self=include_self, budget=budget, seed=seed, groups=groups.labels,
        model="max_interference" if kind == "max" else "linear_interference",
        outcome_bounds=None,
    )
    table_graph = build_knn_graph(coords, k, include_self, config.self_factor)
    outcome = _observed_outcomes(obj, units, table_graph, calculus, rng, 0.0)
    return _finish("random", seed, units, groups, BASE_FEATURES, calculus, outcome,
                   obj, priv, config, {"model": kind})


def generate_synthetic(kind: str, params: Mapping[str, Any] | None = None,
                       seed: int = 0) -> SyntheticInstance:
    """Build a reproducible synthetic instance.

    Parameters
    ----------
    kind : str
        One of ``housing``, ``housing_interference``, ``additive_infeasible``,
        ``nyc_like`` or ``random``.
    params : mapping, optional
        Kind-specific overrides (see the module docstring and the
        defaults inside each generator).
    seed : int
        Seed for ``numpy.random.default_rng``.
    """
    params = dict(params or {})
    if kind == "housing":
        return _housing(params, seed, interference=False)
    if kind == "housing_interference":
        return _housing(params, seed, interference=True)
    if kind == "additive_infeasible":
        return _additive(params, seed)
    if kind == "nyc_like":
        return _nyc_like(params, seed)
    if kind == "random":
        return _random(params, seed)
    raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {KINDS}")


def with_config(instance: SyntheticInstance, **changes) -> SyntheticInstance:
    """Copy of ``instance`` with config fields replaced (graph unchanged)."""
    return replace(instance, config=replace(instance.config, **changes))
