import math

import numpy as np
import pytest

from fairalloc.graph import build_knn_graph
from fairalloc.model import (
    AllocationProblem,
    GroupDomain,
    LinearInterferenceModel,
    MaxInterferenceModel,
    SEMParams,
    Unit,
)

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_units(coords, groups, features=None, prec=None):
    n = len(coords)
    if features is None:
        features = np.zeros((n, 2))
    features = np.asarray(features, dtype=float)
    if prec is None:
        prec = np.ones(features.shape[1], dtype=bool)
    return [
        Unit(str(i), int(groups[i]), features[i], prec, tuple(map(float, coords[i])))
        for i in range(n)
    ]


def random_problem(seed, n=None, k=None, n_groups=None, budget=None, kind=None,
                   tau=math.inf):
    """Small random instance; ``kind`` is "max" or "linear"."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 9))
    k = k or int(rng.integers(1, min(3, n) + 1))
    G = n_groups or int(rng.integers(2, 4))
    budget = int(rng.integers(0, min(4, n) + 1)) if budget is None else budget
    kind = kind or ("max" if rng.random() < 0.5 else "linear")
    coords = rng.uniform(0, 10, size=(n, 2))
    groups = rng.integers(0, G, size=n)
    feats = np.column_stack([rng.uniform(0, 3, n), rng.integers(0, 2, n)])
    units = make_units(coords, groups, feats)
    graph = build_knn_graph(coords, k, True)
    if kind == "max":
        model = MaxInterferenceModel(SEMParams(
            rng.uniform(0, 2, G), rng.uniform(0, 1, G), rng.uniform(0, 1, G), rng.uniform(0, 1, G)
        ))
    else:
        model = LinearInterferenceModel(
            rng.uniform(-1, 1, 2), rng.uniform(0, 2, G), rng.uniform(0, 3, G),
            rng.uniform(-1, 1, (G, 2, G)),
        )
    return AllocationProblem(
        units, graph, model, model, GroupDomain([f"g{a}" for a in range(G)]), budget, tau
    )


def housing_problem(x1=60.0, x2=80.0, interference=False, tau=math.inf, budget=1):
    """Two households: unit 0 in group b, unit 1 in group w."""
    spill = np.zeros((2, 2, 2))
    if interference:
        spill[:, 0, 1] = -10.0
    model = LinearInterferenceModel([1.0], [0.0, 0.0], [100.0, 150.0], spill)
    units = [
        Unit("1", 0, [x1], [True], (0.0, 0.0)),
        Unit("2", 1, [x2], [True], (1.0, 0.0)),
    ]
    graph = build_knn_graph([(0.0, 0.0), (1.0, 0.0)], 2 if interference else 1, True)
    return AllocationProblem(units, graph, model, model, GroupDomain(["b", "w"]), budget, tau)


def additive_problem(n=4, tau=math.inf, budget=1):
    """Y = I(A = w) + Z with alternating groups."""
    model = LinearInterferenceModel([0.0], [0.0, 1.0], [1.0, 1.0])
    units = [Unit(str(i), i % 2, [0.0], [True], (float(i), 0.0)) for i in range(n)]
    graph = build_knn_graph([u.coords for u in units], 1, True)
    return AllocationProblem(units, graph, model, model, GroupDomain(["b", "w"]), budget, tau)


@pytest.fixture
def housing():
    return housing_problem()
