"""Units CSV ingestion, run configuration and JSON/CSV serialization.

Units file columns (comma separated, UTF-8, header required)::

    id, group, lon, lat, counselors, ap_ib, calculus, outcome, [extra...]

Extra columns become auxiliary features.  The feature vector of every
unit is ``[counselors, ap_ib, *extras]`` in file order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .analysis import GroupAllocationSummary, SolutionPath
from .bnb import Solution, SolverConfig
from .estimation import FitDataset, FitResult
from .graph import DEFAULT_SELF_FACTOR, InterferenceGraph, build_knn_graph
from .model import (
    AllocationProblem,
    GroupDomain,
    LinearInterferenceModel,
    MaxInterferenceModel,
    SEMParams,
    StructuralOutcomeModel,
    TabularModel,
    Unit,
)

REQUIRED_COLUMNS = ("id", "group", "lon", "lat", "counselors", "ap_ib", "calculus", "outcome")
BASE_FEATURES = ("counselors", "ap_ib")
MODEL_KINDS = ("max_interference", "linear_interference", "tabular")


class SchemaError(ValueError):
    """Input file or config does not match the expected schema."""


def parse_tau(value) -> float:
    """Accept a number or the sentinel ``"inf"``."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf", "infinity"):
            return math.inf
        try:
            value = float(text)
        except ValueError:
            raise SchemaError(f"invalid tau {value!r}") from None
    tau = float(value)
    if math.isnan(tau) or tau <= 0:
        raise SchemaError(f"tau must be > 0 or 'inf', got {value!r}")
    return tau


def format_tau(tau: float) -> str | float:
    return "inf" if math.isinf(tau) else float(tau)


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by every command.

    ``groups`` fixes the group order; when empty the sorted labels found
    in the units file are used.  ``outcome_bounds`` of ``None`` disables
    the outcome range check (for instances whose outcomes are not rates).
    """

    k: int = 5
    include_self: bool = True
    self_factor: float = DEFAULT_SELF_FACTOR
    budget: int = 25
    tau_list: tuple[float, ...] = (math.inf,)
    group_column: str = "group"
    prec_feature_list: tuple[str, ...] = BASE_FEATURES
    model: str = "max_interference"
    solver: dict = field(default_factory=dict)
    seed: int = 0
    groups: tuple[str, ...] = ()
    outcome_bounds: tuple[float, float] | None = (0.0, 1.0)

    def __post_init__(self):
        if int(self.k) != self.k or self.k <= 0:
            raise SchemaError(f"k must be a positive integer, got {self.k!r}")
        if int(self.budget) != self.budget or self.budget < 0:
            raise SchemaError(f"budget must be a nonnegative integer, got {self.budget!r}")
        if self.model not in MODEL_KINDS:
            raise SchemaError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        taus = tuple(parse_tau(t) for t in self.tau_list)
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise SchemaError("tau_list must be strictly increasing")
        object.__setattr__(self, "tau_list", taus)
        object.__setattr__(self, "prec_feature_list", tuple(self.prec_feature_list))
        object.__setattr__(self, "groups", tuple(str(g) for g in self.groups))
        if self.outcome_bounds is not None:
            lo, hi = (float(v) for v in self.outcome_bounds)
            object.__setattr__(self, "outcome_bounds", (lo, hi))
        self.solver_config()

    def solver_config(self) -> SolverConfig:
        known = {f.name for f in fields(SolverConfig)}
        unknown = sorted(set(self.solver) - known)
        if unknown:
            raise SchemaError(f"unknown solver settings: {', '.join(unknown)}")
        opts = dict(self.solver)
        if "time_limit_seconds" in opts:
            opts["time_limit_seconds"] = float(opts["time_limit_seconds"])
        return SolverConfig(**opts)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tau_list"] = [format_tau(t) for t in self.tau_list]
        d["prec_feature_list"] = list(self.prec_feature_list)
        d["groups"] = list(self.groups)
        if self.outcome_bounds is not None:
            d["outcome_bounds"] = list(self.outcome_bounds)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SchemaError(f"unknown config keys: {', '.join(unknown)}")
        data = dict(data)
        if data.get("outcome_bounds") is not None:
            data["outcome_bounds"] = tuple(data["outcome_bounds"])
        for key in ("tau_list", "prec_feature_list", "groups"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def load_config(path: str | Path | None) -> RunConfig:
    """Read a JSON or YAML config; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: config must be a mapping")
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------- units


@dataclass(frozen=True)
class UnitsTable:
    """Parsed units file."""

    units: tuple[Unit, ...]
    groups: GroupDomain
    feature_names: tuple[str, ...]
    calculus: np.ndarray
    outcome: np.ndarray

    def build_graph(self, config: RunConfig) -> InterferenceGraph:
        return build_knn_graph(
            [u.coords for u in self.units], config.k, config.include_self, config.self_factor
        )

    def fit_dataset(self, graph: InterferenceGraph) -> FitDataset:
        return FitDataset(
            groups=self.groups,
            group=np.array([u.group for u in self.units]),
            ap_ib=np.array([u.features[1] for u in self.units]),
            counselors=np.array([u.features[0] for u in self.units]),
            calculus=self.calculus,
            outcome=self.outcome,
            graph=graph,
        )


def _cell_float(text: str, column: str, row: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise SchemaError(f"row {row}, column {column!r}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise SchemaError(f"row {row}, column {column!r}: value must be finite")
    return v


def _cell_indicator(text: str, column: str, row: int) -> int:
    v = _cell_float(text, column, row)
    if v not in (0.0, 1.0):
        raise SchemaError(f"row {row}, column {column!r}: indicator must be 0 or 1, got {text!r}")
    return int(v)


def load_units(path: str | Path, config: RunConfig | None = None) -> UnitsTable:
    """Parse and validate a units CSV.

    Rows are numbered from 1 (the header is row 0) in error messages.
    """
    config = config or RunConfig()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)

    required = list(REQUIRED_COLUMNS)
    required[1] = config.group_column
    for col in required:
        if col not in header:
            raise SchemaError(f"missing required column {col!r}")
    dup = sorted({h for h in header if header.count(h) > 1})
    if dup:
        raise SchemaError(f"duplicate column {dup[0]!r}")
    pos = {h: j for j, h in enumerate(header)}
    extras = [h for h in header if h not in required]
    feature_names = (*BASE_FEATURES, *extras)
    missing_prec = [f for f in config.prec_feature_list if f not in feature_names]
    if missing_prec:
        raise SchemaError(f"prec feature {missing_prec[0]!r} is not a column")
    prec_mask = np.array([f in config.prec_feature_list for f in feature_names])

    records = []
    seen: set[str] = set()
    for r, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise SchemaError(f"row {r}: expected {len(header)} cells, got {len(row)}")
        cell = {h: row[pos[h]].strip() for h in header}
        for col in header:
            if cell[col] == "":
                raise SchemaError(f"row {r}, column {col!r}: missing value")
        uid = cell["id"]
        if uid in seen:
            raise SchemaError(f"row {r}: duplicate id {uid!r}")
        seen.add(uid)
        lon = _cell_float(cell["lon"], "lon", r)
        lat = _cell_float(cell["lat"], "lat", r)
        counselors = _cell_float(cell["counselors"], "counselors", r)
        if counselors < 0:
            raise SchemaError(f"row {r}, column 'counselors': must be >= 0")
        ap_ib = _cell_indicator(cell["ap_ib"], "ap_ib", r)
        calculus = _cell_indicator(cell["calculus"], "calculus", r)
        outcome = _cell_float(cell["outcome"], "outcome", r)
        if config.outcome_bounds is not None:
            lo, hi = config.outcome_bounds
            if not lo <= outcome <= hi:
                raise SchemaError(f"row {r}, column 'outcome': {outcome} outside [{lo}, {hi}]")
        feats = [counselors, float(ap_ib)] + [_cell_float(cell[c], c, r) for c in extras]
        records.append((uid, cell[config.group_column], (lon, lat), feats, calculus, outcome))

    if not records:
        raise SchemaError(f"{path}: no data rows")
    found = {rec[1] for rec in records}
    if config.groups:
        unknown = sorted(found - set(config.groups))
        if unknown:
            raise SchemaError(f"group label {unknown[0]!r} not in configured groups")
        labels = config.groups
    else:
        labels = tuple(sorted(found))
    if len(labels) < 2:
        raise SchemaError("need at least 2 group labels")
    groups = GroupDomain(labels)
    units = tuple(
        Unit(uid, groups.index(g), feats, prec_mask, coords)
        for uid, g, coords, feats, _, _ in records
    )
    return UnitsTable(
        units=units,
        groups=groups,
        feature_names=feature_names,
        calculus=np.array([rec[4] for rec in records], dtype=np.int64),
        outcome=np.array([rec[5] for rec in records]),
    )


def _num(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def write_units(
    path: str | Path,
    units: Sequence[Unit],
    groups: GroupDomain,
    feature_names: Sequence[str],
    calculus,
    outcome,
) -> None:
    """Write a units CSV that :func:`load_units` reads back exactly."""
    if tuple(feature_names[:2]) != BASE_FEATURES:
        raise ValueError(f"feature_names must start with {BASE_FEATURES}")
    extras = list(feature_names[2:])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*REQUIRED_COLUMNS, *extras])
        for u, c, y in zip(units, calculus, outcome):
            f = u.features
            w.writerow([
                u.id, groups.labels[u.group], _num(u.coords[0]), _num(u.coords[1]),
                _num(f[0]), _num(f[1]), int(c), _num(y), *(_num(v) for v in f[2:]),
            ])


# ---------------------------------------------------------------- models


def model_to_dict(model: StructuralOutcomeModel, groups: GroupDomain,
                  feature_names: Sequence[str], unit_ids: Sequence[str]) -> dict:
    labels = groups.labels
    if isinstance(model, MaxInterferenceModel):
        pr = model.params
        return {
            "kind": "max_interference",
            "params": {
                a: {name: float(getattr(pr, name)[g]) for name in SEMParams.names}
                for g, a in enumerate(labels)
            },
            "ap_ib_feature": feature_names[model.ap_ib_feature],
            "counselors_feature": feature_names[model.counselors_feature],
        }
    if isinstance(model, LinearInterferenceModel):
        return {
            "kind": "linear_interference",
            "feature_weights": {
                name: float(w) for name, w in zip(feature_names, model.feature_weights)
            },
            "intercept": {a: float(model.intercept[g]) for g, a in enumerate(labels)},
            "treatment": {a: float(model.treatment[g]) for g, a in enumerate(labels)},
            "spillover": {
                a: {
                    state: {b: float(model.spillover[g, zi, h]) for h, b in enumerate(labels)}
                    for zi, state in enumerate(("untreated", "treated"))
                }
                for g, a in enumerate(labels)
            },
        }
    if isinstance(model, TabularModel):
        entries = [
            {"unit": unit_ids[i], "group": labels[g], "bits": list(bits), "value": float(v)}
            for (i, g, bits), v in sorted(model.table.items())
        ]
        return {"kind": "tabular", "entries": entries}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(data: dict, groups: GroupDomain, feature_names: Sequence[str],
                    unit_ids: Sequence[str]) -> StructuralOutcomeModel:
    kind = data.get("kind")
    labels = groups.labels

    def per_group(mapping, what):
        missing = [a for a in labels if a not in mapping]
        if missing:
            raise SchemaError(f"{what}: no entry for group {missing[0]!r}")
        return [float(mapping[a]) for a in labels]

    def feature(name):
        if name not in feature_names:
            raise SchemaError(f"model references unknown feature {name!r}")
        return list(feature_names).index(name)

    if kind == "max_interference":
        p = data["params"]
        cols = {
            name: per_group({a: p[a][name] for a in p}, f"params.{name}")
            for name in SEMParams.names
        }
        return MaxInterferenceModel(
            SEMParams(**cols),
            ap_ib_feature=feature(data.get("ap_ib_feature", "ap_ib")),
            counselors_feature=feature(data.get("counselors_feature", "counselors")),
        )
    if kind == "linear_interference":
        weights = np.zeros(len(feature_names))
        for name, w in data.get("feature_weights", {}).items():
            weights[feature(name)] = float(w)
        spill = np.zeros((len(labels), 2, len(labels)))
        for a, states in data.get("spillover", {}).items():
            g = groups.index(a)
            for zi, state in enumerate(("untreated", "treated")):
                for b, v in states.get(state, {}).items():
                    spill[g, zi, groups.index(b)] = float(v)
        return LinearInterferenceModel(
            weights,
            per_group(data["intercept"], "intercept"),
            per_group(data["treatment"], "treatment"),
            spill,
        )
    if kind == "tabular":
        index = {uid: i for i, uid in enumerate(unit_ids)}
        table = {}
        for e in data["entries"]:
            if e["unit"] not in index:
                raise SchemaError(f"tabular entry for unknown unit {e['unit']!r}")
            key = (index[e["unit"]], groups.index(e["group"]), tuple(int(b) for b in e["bits"]))
            table[key] = float(e["value"])
        return TabularModel(table, len(labels))
    raise SchemaError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class ModelPair:
    objective: StructuralOutcomeModel
    privilege: StructuralOutcomeModel


def models_to_json(pair: ModelPair, table: UnitsTable) -> dict:
    ids = [u.id for u in table.units]
    d = model_to_dict(pair.objective, table.groups, table.feature_names, ids)
    if pair.privilege is not pair.objective:
        d["privilege_model"] = model_to_dict(pair.privilege, table.groups, table.feature_names, ids)
    return d


def load_models(path: str | Path, table: UnitsTable) -> ModelPair:
    """Read a model JSON; ``privilege_model`` defaults to the objective model."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    ids = [u.id for u in table.units]
    try:
        obj = model_from_dict(data, table.groups, table.feature_names, ids)
        priv = obj
        if "privilege_model" in data:
            priv = model_from_dict(data["privilege_model"], table.groups, table.feature_names, ids)
    except KeyError as exc:
        raise SchemaError(f"{path}: missing key {exc.args[0]!r}") from None
    return ModelPair(obj, priv)


def fit_to_json(fit: FitResult, groups: GroupDomain) -> dict:
    d = model_to_dict(
        MaxInterferenceModel(fit.params), groups, BASE_FEATURES, ()
    )
    d["residual_variance"] = {a: float(v) for a, v in zip(groups.labels, fit.residual_variance)}
    d["n_per_group"] = {a: int(v) for a, v in zip(groups.labels, fit.n_per_group)}
    d["standard_errors"] = {
        a: {name: float(fit.standard_errors[g, j]) for j, name in enumerate(SEMParams.names)}
        for g, a in enumerate(groups.labels)
    }
    return d


# ---------------------------------------------------------------- outputs


def build_problem(table: UnitsTable, pair: ModelPair, config: RunConfig,
                  tau: float = math.inf, budget: int | None = None) -> AllocationProblem:
    graph = table.build_graph(config)
    return AllocationProblem(
        table.units, graph, pair.objective, pair.privilege, table.groups,
        config.budget if budget is None else budget, tau,
    )


def _finite(v):
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def solution_to_json(solution: Solution, problem: AllocationProblem) -> dict:
    """Fixed-field solution record; contains no timing so reruns match byte for byte."""
    ids = [u.id for u in problem.units]
    gaps = None
    if solution.per_unit_gaps is not None:
        gaps = {
            uid: {a: float(v) for a, v in zip(problem.groups.labels, row)}
            for uid, row in zip(ids, solution.per_unit_gaps)
        }
    return {
        "status": solution.status.value,
        "tau": format_tau(solution.tau),
        "budget": solution.budget,
        "objective": solution.objective,
        "bound": _finite(solution.bound),
        "z": None if solution.z is None else [ids[i] for i in np.flatnonzero(solution.z)],
        "budget_used": solution.budget_used,
        "nodes_explored": solution.nodes_explored,
        "per_unit_gaps": gaps,
    }


def read_allocation(data: dict, problem: AllocationProblem) -> np.ndarray:
    """Recover the binary z from a solution JSON."""
    if data.get("z") is None:
        raise SchemaError(f"solution has no allocation (status {data.get('status')})")
    index = {u.id: i for i, u in enumerate(problem.units)}
    z = np.zeros(problem.n, dtype=np.int64)
    for uid in data["z"]:
        if uid not in index:
            raise SchemaError(f"solution references unknown unit {uid!r}")
        z[index[uid]] = 1
    return z


def summary_to_json(summary: GroupAllocationSummary) -> dict:
    return {
        "groups": list(summary.groups),
        "treated_counts": {a: int(c) for a, c in zip(summary.groups, summary.treated_counts)},
        "outcome_totals": {a: float(t) for a, t in zip(summary.groups, summary.outcome_totals)},
        "objective": summary.objective,
        "treated_units": list(summary.treated_units),
    }


def write_json(path: str | Path, data: Any) -> None:
    text = json.dumps(data, indent=2, sort_keys=False, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_path(directory: str | Path, path: SolutionPath, problem: AllocationProblem) -> Path:
    """Write ``path.csv`` plus one solution JSON per tau; returns the CSV path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    labels = problem.groups.labels
    group_of = np.array([u.group for u in problem.units])
    csv_path = directory / "path.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "status", "objective", *(f"treated_{a}" for a in labels)])
        for k, (tau, sol) in enumerate(path.points):
            if sol.z is None:
                counts = [""] * len(labels)
            else:
                counts = np.bincount(group_of[sol.z == 1], minlength=len(labels)).tolist()
            obj = "" if sol.objective is None else repr(float(sol.objective))
            w.writerow([format_tau(tau) if math.isinf(tau) else repr(tau),
                        sol.status.value, obj, *counts])
            write_json(directory / f"point_{k:03d}.json", solution_to_json(sol, problem.with_tau(tau)))
    return csv_path


def dump_config(config: RunConfig, path: str | Path) -> None:
    write_json(path, config.to_dict())


__all__ = [
    "RunConfig", "SchemaError", "UnitsTable", "ModelPair", "load_config", "load_units",
    "write_units", "load_models", "models_to_json", "model_to_dict", "model_from_dict",
    "fit_to_json", "build_problem", "solution_to_json", "read_allocation",
    "summary_to_json", "write_json", "write_path", "dump_config", "parse_tau",
    "format_tau",
]
