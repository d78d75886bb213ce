"""Exact branch-and-bound over the allocation variables.

Branching happens on ``z`` only.  Pattern selectors follow from fixed
``z`` values: a selector whose pattern contradicts a fixed bit is bounded
to 0, and once every neighbor of a unit is fixed its single consistent
selector is bounded to 1.

Two relaxations are available.  ``"literal"`` relaxes the encoded rows
as they are.  ``"hull"`` (the default) replaces each unit's linking rows
by the marginal equalities ``sum_{j: e_jk = 1} h_ij = z_{N(i)_k}``.
Together with the one-hot row these describe the convex hull of one
unit's feasible ``(z_{N(i)}, h_i)`` points and imply every linking row,
so the bound is never weaker and the LP is much smaller.  In the same
spirit the hull relaxation states privilege rows as upper bounds of 0
on selectors whose pattern has a gap above ``tau``: for a one-hot
binary ``h`` the two are equivalent, and the bound form is tighter.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .milp import INT_TOL, MilpProgram, encode
from .model import FEAS_TOL, AllocationProblem
from .simplex import LPResult, SimplexError, bounded_simplex

TIE_TOL = 1e-9


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    LIMIT_REACHED = "LimitReached"


@dataclass(frozen=True)
class SolverConfig:
    """Branch-and-bound settings.

    ``lp_backend="auto"`` uses the built-in simplex while the dense
    tableau stays under ``builtin_max_cells`` entries and HiGHS beyond.
    """

    abs_gap_tol: float = 1e-6
    node_limit: int = 10**7
    time_limit_seconds: float = math.inf
    branch_rule: str = "most-fractional"
    relaxation: str = "hull"
    lp_backend: str = "auto"
    builtin_max_cells: int = 50_000
    lex_tiebreak: bool = True
    rounding: bool = True

    def __post_init__(self):
        if not self.abs_gap_tol >= 0:
            raise ValueError("abs_gap_tol must be >= 0")
        if self.branch_rule != "most-fractional":
            raise ValueError(f"unknown branch rule {self.branch_rule!r}")
        if self.relaxation not in ("hull", "literal"):
            raise ValueError(f"unknown relaxation {self.relaxation!r}")
        if self.lp_backend not in ("auto", "builtin", "highs"):
            raise ValueError(f"unknown lp backend {self.lp_backend!r}")


@dataclass
class Solution:
    status: Status
    z: np.ndarray | None
    objective: float | None
    bound: float
    per_unit_gaps: np.ndarray | None
    nodes_explored: int
    tau: float
    budget: int
    elapsed_seconds: float = field(default=0.0, compare=False)

    @property
    def budget_used(self) -> int:
        return 0 if self.z is None else int(self.z.sum())


class Relaxation:
    """LP relaxation of a program with per-node variable bounds."""

    def __init__(self, program: MilpProgram, formulation: str = "hull"):
        self.program = program
        self.formulation = formulation
        n, nv = program.n_z, program.n_vars
        self.c = program.c.copy()

        A = program.A.tocsr()
        if formulation == "literal":
            keep_ub = program.sense == "<"
            keep_eq = program.sense == "="
            self.A_ub = A[keep_ub]
            self.b_ub = program.rhs[keep_ub]
            self.A_eq = A[keep_eq]
            self.b_eq = program.rhs[keep_eq]
        elif formulation == "hull":
            # privilege rows become upper bounds of 0 on forbidden patterns
            keep_ub = np.isin(program.row_kind, ("budget",))
            onehot = program.row_kind == "onehot"
            rows, cols, vals = [], [], []
            r = 0
            for i, nb in enumerate(program.neighbors):
                E = program.patterns[i]
                base = program.h_offset[i]
                for slot, zk in enumerate(nb):
                    hs = base + np.flatnonzero(E[:, slot])
                    rows.extend([r] * (len(hs) + 1))
                    cols.extend(hs.tolist() + [int(zk)])
                    vals.extend([1.0] * len(hs) + [-1.0])
                    r += 1
            marg = sp.csr_matrix((vals, (rows, cols)), shape=(r, nv))
            self.A_ub = A[keep_ub]
            self.b_ub = program.rhs[keep_ub]
            self.A_eq = sp.vstack([A[onehot], marg]).tocsr()
            self.b_eq = np.concatenate([program.rhs[onehot], np.zeros(r)])
        else:
            raise ValueError(f"unknown relaxation {formulation!r}")
        self._dense = None
        self.forbidden = np.zeros(program.n_h, dtype=bool)
        if formulation == "hull" and math.isfinite(program.tau):
            worst = np.concatenate([
                gc.max(axis=1) if gc.size else np.zeros(len(gc)) for gc in program.gap_coef
            ])
            self.forbidden = worst > program.tau + FEAS_TOL

        # bit requirements of every h variable, padded with -1
        kmax = max((len(nb) for nb in program.neighbors), default=0)
        self.req_z = np.full((program.n_h, max(kmax, 1)), -1, dtype=np.int64)
        self.req_bit = np.zeros((program.n_h, max(kmax, 1)), dtype=np.int8)
        for i, nb in enumerate(program.neighbors):
            lo = program.h_offset[i] - n
            hi = lo + program.h_count[i]
            if len(nb):
                self.req_z[lo:hi, : len(nb)] = nb[None, :]
                self.req_bit[lo:hi, : len(nb)] = program.patterns[i]

    @property
    def tableau_cells(self) -> int:
        m_ub, m_eq = self.A_ub.shape[0], self.A_eq.shape[0]
        m = m_ub + m_eq
        return m * (self.program.n_vars + m_ub + m)

    def dense(self):
        if self._dense is None:
            self._dense = (self.A_ub.toarray(), self.A_eq.toarray())
        return self._dense

    def bounds(self, fixed_z: np.ndarray, extra: Mapping[int, int] | None = None):
        """Variable bounds for a node with ``fixed_z`` (-1 marks free)."""
        n = self.program.n_z
        lo = np.zeros(self.program.n_vars)
        hi = np.ones(self.program.n_vars)
        fz = fixed_z >= 0
        lo[:n][fz] = fixed_z[fz]
        hi[:n][fz] = fixed_z[fz]
        has = self.req_z >= 0
        vals = np.where(has, fixed_z[np.where(has, self.req_z, 0)], -1)
        conflict = np.any((vals >= 0) & (vals != self.req_bit), axis=1)
        settled = np.all(~has | (vals >= 0), axis=1)
        hi[n:][conflict | self.forbidden] = 0.0
        lo[n:][settled & ~conflict] = 1.0
        if extra:
            for j, v in extra.items():
                lo[j] = max(lo[j], v)
                hi[j] = min(hi[j], v)
        return lo, hi

    def solve(self, lo, hi, backend: str = "auto") -> LPResult:
        if backend == "auto":
            backend = "builtin" if self.tableau_cells <= SolverConfig.builtin_max_cells else "highs"
        if backend == "builtin":
            A_ub, A_eq = self.dense()
            return bounded_simplex(self.c, A_ub, self.b_ub, A_eq, self.b_eq, lo, hi)
        return _highs(self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq, lo, hi)


def _highs(c, A_ub, b_ub, A_eq, b_eq, lo, hi) -> LPResult:
    if np.any(lo > hi):
        return LPResult("infeasible", None, float("nan"), 0)
    res = linprog(
        -c,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=A_eq if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=np.column_stack([lo, hi]),
        method="highs-ds",
    )
    iters = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        x = np.clip(res.x, lo, hi)
        return LPResult("optimal", x, float(c @ x), iters)
    if res.status == 2:
        return LPResult("infeasible", None, float("nan"), iters)
    if res.status == 3:
        return LPResult("unbounded", None, float("inf"), iters)
    raise SimplexError(f"HiGHS failed: {res.message}")


def solve_lp(
    program: MilpProgram,
    fixed: Mapping[int, int] | Iterable[tuple[int, int]] | None = None,
    formulation: str = "literal",
    backend: str = "builtin",
) -> LPResult:
    """Solve the LP relaxation with some variables fixed to 0 or 1.

    ``fixed`` maps flat variable indices to values.  Fixing a ``z``
    variable also applies the implied selector bounds.
    """
    pairs = list(fixed.items()) if isinstance(fixed, Mapping) else list(fixed or [])
    seen = {}
    for j, v in pairs:
        j = int(j)
        if j in seen:
            raise ValueError(f"variable {program.var_name(j)} fixed twice")
        if v not in (0, 1):
            raise ValueError(f"fixed values must be 0 or 1, got {v!r}")
        if not 0 <= j < program.n_vars:
            raise IndexError(j)
        seen[j] = int(v)
    relax = Relaxation(program, formulation)
    fixed_z = np.full(program.n_z, -1, dtype=np.int64)
    extra = {}
    for j, v in seen.items():
        if j < program.n_z:
            fixed_z[j] = v
        else:
            extra[j] = v
    lo, hi = relax.bounds(fixed_z, extra)
    return relax.solve(lo, hi, backend)


class _Greedy:
    """Feasibility-preserving greedy completion with incremental patterns.

    Adding ``z_k`` only changes the pattern of units listing ``k``, so
    gains and privilege checks touch those units alone.
    """

    def __init__(self, program: MilpProgram):
        self.program = program
        n = program.n_z
        self.limit = program.tau + FEAS_TOL
        self.worst = [
            gc.max(axis=1) if gc.size else np.zeros(len(gc)) for gc in program.gap_coef
        ]
        self.value = [
            program.c[program.h_offset[i]: program.h_offset[i] + program.h_count[i]]
            for i in range(n)
        ]
        ins: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for i, nb in enumerate(program.neighbors):
            k = len(nb)
            for slot, j in enumerate(nb):
                ins[int(j)].append((i, 1 << (k - 1 - slot)))
        self.ins = ins

    def gain(self, idx, k):
        """Objective change from adding ``k``, or None if a gap would break."""
        total = 0.0
        for i, w in self.ins[k]:
            new = idx[i] + w
            if self.worst[i][new] > self.limit:
                return None
            total += self.value[i][new] - self.value[i][idx[i]]
        return total

    def add(self, z, idx, k):
        z[k] = 1
        for i, w in self.ins[k]:
            idx[i] += w

    def complete(self, fixed, z_lp, fill: bool):
        """Start from the fixed ones, add LP-favored units, then best gains."""
        p = self.program
        z = np.where(fixed > 0, 1, 0).astype(np.int64)
        room = p.budget - int(z.sum())
        if room < 0:
            return None
        idx = p.pattern_index(z)
        if any(self.worst[i][idx[i]] > self.limit for i in range(p.n_z)):
            return None
        free = np.flatnonzero(fixed < 0)
        order = free[np.argsort(-z_lp[free], kind="stable")]
        for k in order:
            if room == 0 or z_lp[k] < 0.5:
                break
            g = self.gain(idx, int(k))
            if g is not None and g > TIE_TOL:
                self.add(z, idx, int(k))
                room -= 1
        while fill and room > 0:
            best, best_k = TIE_TOL, -1
            for k in free:
                if z[k]:
                    continue
                g = self.gain(idx, int(k))
                if g is not None and g > best + TIE_TOL:
                    best, best_k = g, int(k)
            if best_k < 0:
                break
            self.add(z, idx, best_k)
            room -= 1
        return z


@dataclass(order=True)
class _Node:
    key: tuple
    fixed: np.ndarray = field(compare=False)
    z_lp: np.ndarray = field(compare=False)
    depth: int = field(compare=False)
    bound: float = field(compare=False)


class _Search:
    def __init__(self, program, config, node_log):
        self.program = program
        self.config = config
        self.node_log = node_log
        self.relax = Relaxation(program, config.relaxation)
        self.backend = config.lp_backend
        if self.backend == "auto":
            cells = self.relax.tableau_cells
            self.backend = "builtin" if cells <= config.builtin_max_cells else "highs"
        self.inc_z = None
        self.inc_obj = -math.inf
        self.gap_bound = -math.inf
        self.nodes = 0
        self.created = 0
        self.heap: list[_Node] = []
        self.greedy = _Greedy(program)

    # -- incumbent handling -------------------------------------------------
    def feasible(self, z) -> bool:
        p = self.program
        if z.sum() > p.budget:
            return False
        if math.isinf(p.tau):
            return True
        return bool(p.gaps_at(z).max() <= p.tau + FEAS_TOL)

    def offer(self, z):
        z = np.asarray(z, dtype=np.int64)
        if not self.feasible(z):
            return False
        obj = self.program.objective_at(z)
        if obj > self.inc_obj + TIE_TOL or (
            obj >= self.inc_obj - TIE_TOL and tuple(z) < tuple(self.inc_z)
        ):
            self.inc_z, self.inc_obj = z, obj
        return True

    def rounded(self, z_lp, fixed, depth):
        # full greedy fill near the root, LP-guided completion elsewhere
        return self.greedy.complete(fixed, z_lp, fill=depth <= 2 or self.inc_z is None)

    # -- pruning ------------------------------------------------------------
    def lex_floor(self, fixed) -> tuple:
        return tuple(np.where(fixed >= 0, fixed, 0))

    def prunable(self, bound, fixed) -> bool:
        if self.inc_z is None:
            return False
        if bound < self.inc_obj - TIE_TOL:
            return True
        if bound <= self.inc_obj + self.config.abs_gap_tol:
            if not self.config.lex_tiebreak or self.lex_floor(fixed) >= tuple(self.inc_z):
                self.gap_bound = max(self.gap_bound, bound)
                return True
        return False

    # -- nodes --------------------------------------------------------------
    def evaluate(self, fixed, depth):
        lo, hi = self.relax.bounds(fixed)
        res = self.relax.solve(lo, hi, self.backend)
        self.nodes += 1
        if res.status == "unbounded":
            raise SimplexError("LP relaxation unbounded; program is malformed")
        bound = res.objective if res.status == "optimal" else -math.inf
        if self.node_log is not None:
            inc = self.inc_obj if self.inc_z is not None else float("nan")
            self.node_log(
                f"{self.nodes} {bound:.12g} {inc:.12g} {depth} {int((fixed >= 0).sum())}"
            )
        if res.status != "optimal":
            return
        z_lp = res.x[: self.program.n_z]
        if self.config.rounding:
            z = self.rounded(z_lp, fixed, depth)
            if z is not None:
                self.offer(z)
        if self.prunable(bound, fixed):
            return
        self.created += 1
        heapq.heappush(
            self.heap, _Node((-bound, -depth, self.created), fixed, z_lp, depth, bound)
        )

    def branch(self, node: _Node, k: int):
        for v in (0, 1):
            child = node.fixed.copy()
            child[k] = v
            self.evaluate(child, node.depth + 1)

    def expand(self, node: _Node):
        z_lp, fixed = node.z_lp, node.fixed
        free = fixed < 0
        frac = np.minimum(z_lp - np.floor(z_lp), np.ceil(z_lp) - z_lp)
        frac[~free] = 0.0
        if frac.max(initial=0.0) <= INT_TOL:
            z = np.where(free, np.round(z_lp), fixed).astype(np.int64)
            accepted = self.offer(z)
            ones = np.flatnonzero(free & (z == 1))
            if self.config.lex_tiebreak and ones.size:
                self.branch(node, int(ones[0]))
            elif not accepted and free.any():
                # LP point sits on a row within solver tolerance only
                self.branch(node, int(np.flatnonzero(free)[0]))
            return
        self.branch(node, int(np.argmax(frac)))


def branch_and_bound(
    program: MilpProgram,
    config: SolverConfig | None = None,
    node_log: Callable[[str], None] | None = None,
) -> Solution:
    """Solve ``program`` to optimality (within ``abs_gap_tol``).

    Nodes are explored best bound first, ties going to the deeper node
    and then to the earlier-created one.  Among allocations whose
    objectives agree to 1e-9 the lexicographically smallest ``z`` wins.
    ``node_log`` receives one line per LP solve:
    ``node_id bound incumbent depth fixed_count``.
    """
    config = config or SolverConfig()
    start = time.monotonic()
    s = _Search(program, config, node_log)
    s.evaluate(np.full(program.n_z, -1, dtype=np.int64), 0)

    status = Status.OPTIMAL
    while s.heap:
        if s.nodes >= config.node_limit or time.monotonic() - start > config.time_limit_seconds:
            status = Status.LIMIT_REACHED
            break
        node = heapq.heappop(s.heap)
        if s.prunable(node.bound, node.fixed):
            continue
        s.expand(node)

    if status is Status.OPTIMAL and s.inc_z is None:
        status = Status.INFEASIBLE
    open_bound = max((nd.bound for nd in s.heap), default=-math.inf)
    if status is Status.LIMIT_REACHED:
        bound = max(open_bound, s.gap_bound, s.inc_obj)
    else:
        bound = max(s.gap_bound, s.inc_obj)
    return Solution(
        status=status,
        z=s.inc_z,
        objective=None if s.inc_z is None else s.inc_obj,
        bound=bound,
        per_unit_gaps=None if s.inc_z is None else program.gaps_at(s.inc_z),
        nodes_explored=s.nodes,
        tau=program.tau,
        budget=program.budget,
        elapsed_seconds=time.monotonic() - start,
    )


def solve(
    problem: AllocationProblem,
    config: SolverConfig | None = None,
    node_log: Callable[[str], None] | None = None,
) -> Solution:
    """Encode ``problem`` and run branch-and-bound on it."""
    return branch_and_bound(encode(problem), config, node_log)
