"""Mixed-integer encoding of the fair allocation program.

Variables are the allocation ``z`` (one per unit) followed by pattern
selectors ``h`` (one per unit and neighbor pattern).  Row layout:

* linking: ``h_ij - z_k <= 0`` where bit ``k`` of pattern ``j`` is 1,
  ``h_ij + z_k <= 1`` where it is 0;
* one-hot: ``sum_j h_ij = 1`` per unit;
* budget: ``sum_i z_i <= B``;
* privilege: ``sum_j h_ij * gap(i, a', e_j) <= tau`` per unit and
  alternative group (dropped when ``tau`` is infinite).

A unit with ``|N(i)| < K`` only gets ``2**|N(i)|`` pattern variables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .model import AllocationProblem, privilege_gap

MAX_K = 12
INT_TOL = 1e-6
ROW_TOL = 1e-9


def enumerate_patterns(k: int) -> np.ndarray:
    """All ``2**k`` binary rows of length ``k`` in lexicographic order."""
    if k <= 0:
        raise ValueError(f"k must be a positive integer, got {k}")
    return _patterns(k)


def _patterns(k: int) -> np.ndarray:
    if k > MAX_K:
        raise ValueError(f"k={k} exceeds the cap of {MAX_K}")
    j = np.arange(2**k)[:, None]
    shifts = np.arange(k - 1, -1, -1)[None, :]
    return ((j >> shifts) & 1).astype(np.int8)


@dataclass(frozen=True)
class MilpProgram:
    """Maximize ``c @ x`` subject to ``A x (<= or =) rhs``, ``x`` binary."""

    n_z: int
    n_h: int
    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray  # "<" or "="
    rhs: np.ndarray
    row_names: tuple[str, ...]
    row_kind: np.ndarray  # "link", "onehot", "budget", "privilege"
    unit_ids: tuple[str, ...]
    neighbors: tuple[np.ndarray, ...]
    h_offset: np.ndarray  # start of unit i's h block (absolute index)
    h_count: np.ndarray
    patterns: tuple[np.ndarray, ...]  # per unit, (h_count[i], |N(i)|)
    gap_coef: tuple[np.ndarray, ...]  # per unit, (h_count[i], n_groups)
    groups: tuple[str, ...]
    unit_group: np.ndarray
    budget: int
    tau: float

    @property
    def n_vars(self) -> int:
        return self.n_z + self.n_h

    @property
    def n_units(self) -> int:
        return self.n_z

    def var_name(self, idx: int) -> str:
        kind, unit, pattern = self.var_info(idx)
        if kind == "z":
            return f"z_{self.unit_ids[unit]}"
        return f"h_{self.unit_ids[unit]}_{pattern}"

    def var_info(self, idx: int) -> tuple[str, int, int | None]:
        if not 0 <= idx < self.n_vars:
            raise IndexError(idx)
        if idx < self.n_z:
            return ("z", idx, None)
        unit = int(np.searchsorted(self.h_offset, idx, side="right") - 1)
        return ("h", unit, int(idx - self.h_offset[unit]))

    def var_index(self, kind: str, unit: int, pattern: int | None = None) -> int:
        if kind == "z":
            return int(unit)
        if kind != "h" or not 0 <= pattern < self.h_count[unit]:
            raise KeyError((kind, unit, pattern))
        return int(self.h_offset[unit] + pattern)

    def pattern_index(self, z) -> np.ndarray:
        """Index of the active pattern of every unit under allocation ``z``."""
        z = np.asarray(z, dtype=np.int64)
        out = np.empty(self.n_z, dtype=np.int64)
        for i, nb in enumerate(self.neighbors):
            k = len(nb)
            out[i] = int(z[nb] @ (1 << np.arange(k - 1, -1, -1))) if k else 0
        return out

    def assignment(self, z) -> np.ndarray:
        """Full variable vector ``(z, H(z))``."""
        z = np.asarray(z)
        x = np.zeros(self.n_vars)
        x[: self.n_z] = z
        x[self.h_offset + self.pattern_index(z)] = 1.0
        return x

    def objective_at(self, z) -> float:
        sel = self.h_offset + self.pattern_index(z)
        return float(self.c[sel].sum())

    def gaps_at(self, z) -> np.ndarray:
        """Per-unit, per-group privilege gaps under ``z``, shape (n, G)."""
        idx = self.pattern_index(z)
        return np.array([self.gap_coef[i][idx[i]] for i in range(self.n_z)])

    def row_violation(self, x) -> np.ndarray:
        """Amount by which each row is violated at ``x`` (0 when satisfied)."""
        lhs = self.A @ np.asarray(x, dtype=float)
        viol = lhs - self.rhs
        eq = self.sense == "="
        viol[eq] = np.abs(viol[eq])
        return np.maximum(viol, 0.0)

    def to_text(self) -> str:
        """Plain-text export for cross-checking with other solvers."""
        fmt = lambda v: format(float(v), ".17g")  # noqa: E731
        lines = ["MAXIMIZE"]
        for j in np.flatnonzero(self.c):
            lines.append(f"{fmt(self.c[j])} {self.var_name(j)}")
        lines.append("SUBJECT TO")
        sense = {"<": "<=", "=": "="}
        A = self.A.tocsr()
        for r in range(A.shape[0]):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            terms = " ".join(
                f"{fmt(v)} {self.var_name(j)}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi])
            )
            lines.append(f"{self.row_names[r]}: {terms} {sense[self.sense[r]]} {fmt(self.rhs[r])}")
        lines.append("BINARY")
        lines.extend(self.var_name(j) for j in range(self.n_vars))
        lines.append("END")
        return "\n".join(lines) + "\n"


def encode(problem: AllocationProblem) -> MilpProgram:
    """Build the MILP for ``problem``.

    Objective coefficients come from the objective model under each
    unit's factual group; privilege coefficients from the privilege model.
    """
    n = problem.n
    graph = problem.graph
    g = len(problem.groups)
    ids = tuple(u.id for u in problem.units)
    neighbors = tuple(graph.neighbors)

    counts = np.array([2 ** graph.degree(i) for i in range(n)], dtype=np.int64)
    offsets = n + np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    n_h = int(counts.sum())

    c = np.zeros(n + n_h)
    patterns, gap_coef = [], []
    for i in range(n):
        k = graph.degree(i)
        E = _patterns(k) if k else np.zeros((1, 0), dtype=np.int8)
        gaps = np.zeros((len(E), g))
        for j, e in enumerate(E):
            c[offsets[i] + j] = problem.outcome(i, e)
            for a in range(g):
                if a != problem.units[i].group:
                    gaps[j, a] = privilege_gap(problem, i, a, e)
        E.setflags(write=False)
        gaps.setflags(write=False)
        patterns.append(E)
        gap_coef.append(gaps)

    rows, cols, vals = [], [], []
    rhs, sense, names, kinds = [], [], [], []

    def add_row(idx, coef, s, b, name, kind):
        r = len(rhs)
        rows.extend([r] * len(idx))
        cols.extend(idx)
        vals.extend(coef)
        rhs.append(b)
        sense.append(s)
        names.append(name)
        kinds.append(kind)

    for i in range(n):
        nb = neighbors[i]
        for j, e in enumerate(patterns[i]):
            h = int(offsets[i] + j)
            for slot, zk in enumerate(nb):
                if e[slot]:
                    add_row([h, int(zk)], [1.0, -1.0], "<", 0.0,
                            f"link_{ids[i]}_{j}_{slot}", "link")
                else:
                    add_row([h, int(zk)], [1.0, 1.0], "<", 1.0,
                            f"link_{ids[i]}_{j}_{slot}", "link")
    for i in range(n):
        hs = list(range(int(offsets[i]), int(offsets[i] + counts[i])))
        add_row(hs, [1.0] * len(hs), "=", 1.0, f"onehot_{ids[i]}", "onehot")
    add_row(list(range(n)), [1.0] * n, "<", float(problem.budget), "budget", "budget")
    if np.isfinite(problem.tau):
        for i in range(n):
            hs = list(range(int(offsets[i]), int(offsets[i] + counts[i])))
            for a in range(g):
                if a == problem.units[i].group:
                    continue
                add_row(hs, list(gap_coef[i][:, a]), "<", problem.tau,
                        f"priv_{ids[i]}_{problem.groups.labels[a]}", "privilege")

    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), n + n_h))
    return MilpProgram(
        n_z=n,
        n_h=n_h,
        c=c,
        A=A,
        sense=np.array(sense),
        rhs=np.array(rhs, dtype=float),
        row_names=tuple(names),
        row_kind=np.array(kinds),
        unit_ids=ids,
        neighbors=neighbors,
        h_offset=offsets,
        h_count=counts,
        patterns=tuple(patterns),
        gap_coef=tuple(gap_coef),
        groups=problem.groups.labels,
        unit_group=np.array([u.group for u in problem.units], dtype=np.int64),
        budget=problem.budget,
        tau=problem.tau,
    )


class DecodeError(ValueError):
    pass


def decode(program: MilpProgram, values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Round a solver point to ``(z, H)`` and check linking/one-hot rows.

    ``H`` has one row per unit, zero-padded to the largest pattern count.
    """
    x = np.asarray(values, dtype=float)
    if x.shape != (program.n_vars,):
        raise DecodeError(f"expected {program.n_vars} values, got shape {x.shape}")
    r = np.round(x)
    bad = np.flatnonzero((np.abs(x - r) > INT_TOL) | (r < 0) | (r > 1))
    if bad.size:
        j = int(bad[0])
        raise DecodeError(f"non-integral value {x[j]!r} for {program.var_name(j)}")
    viol = program.row_violation(r)
    structural = np.isin(program.row_kind, ("link", "onehot"))
    broken = np.flatnonzero(structural & (viol > ROW_TOL))
    if broken.size:
        raise DecodeError(f"inconsistent H: row {program.row_names[broken[0]]} violated")
    z = r[: program.n_z].astype(np.int64)
    H = np.zeros((program.n_z, int(program.h_count.max())), dtype=np.int64)
    for i in range(program.n_z):
        lo = program.h_offset[i]
        H[i, : program.h_count[i]] = r[lo : lo + program.h_count[i]]
    return z, H
