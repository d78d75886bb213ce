"""Dense bounded-variable primal simplex.

Solves ``max c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq`` and
``lo <= x <= hi`` with finite ``lo``.  Two phases over a full tableau:
every row carries an artificial column so that the basis inverse can be
read back from the tableau for a final accuracy refresh.  Pricing is
Dantzig's rule, switching to Bland's rule after ``10 * (rows + cols)``
iterations to rule out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-9
COST_TOL = 1e-9


class SimplexError(RuntimeError):
    """Iteration guard exceeded or the tableau lost accuracy."""


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: np.ndarray | None
    objective: float
    iterations: int


class _Tableau:
    def __init__(self, A, b, lo, hi, n_struct):
        self.m, self.N = A.shape
        self.A = A
        self.b = b
        self.lo = lo
        self.hi = hi
        self.n_struct = n_struct
        self.iterations = 0

    def setup(self, art_sign, basis):
        m = self.m
        self.art0 = self.N - m
        self.art_sign = art_sign
        self.basis = basis
        self.x = self.lo.copy()
        self.at_upper = np.zeros(self.N, dtype=bool)
        # initial basis columns are +-unit vectors, so B^-1 is diagonal
        d = np.ones(m)
        is_art = basis >= self.art0
        d[is_art] = art_sign[is_art]
        self.T = self.A * d[:, None]
        self.refresh()

    def binv(self):
        return self.T[:, self.art0:] * self.art_sign[None, :]

    def refresh(self):
        nb = np.ones(self.N, dtype=bool)
        nb[self.basis] = False
        resid = self.b - self.A[:, nb] @ self.x[nb]
        self.x[self.basis] = self.binv() @ resid

    def run(self, cost, max_iter, bland_after):
        T = self.T
        lo, hi = self.lo, self.hi
        basic = np.zeros(self.N, dtype=bool)
        basic[self.basis] = True
        d = cost - cost[self.basis] @ T
        movable = hi > lo
        while True:
            if self.iterations >= max_iter:
                raise SimplexError(f"iteration guard of {max_iter} exceeded")
            bland = self.iterations >= bland_after
            up = ~self.at_upper & (d > COST_TOL)
            down = self.at_upper & (d < -COST_TOL)
            cand = np.flatnonzero((up | down) & movable & ~basic)
            if cand.size == 0:
                return "optimal"
            j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            sigma = -1.0 if self.at_upper[j] else 1.0
            delta = sigma * T[:, j]
            xb = self.x[self.basis]
            lob, hib = lo[self.basis], hi[self.basis]
            limit = np.full(self.m, np.inf)
            dec = delta > PIVOT_TOL
            inc = delta < -PIVOT_TOL
            limit[dec] = (xb[dec] - lob[dec]) / delta[dec]
            fin = inc & np.isfinite(hib)
            limit[fin] = (hib[fin] - xb[fin]) / -delta[fin]
            np.maximum(limit, 0.0, out=limit)
            flip = hi[j] - lo[j]
            r = -1
            theta = flip
            if self.m:
                best = limit.min()
                if best < flip:
                    ties = np.flatnonzero(limit <= best + 1e-12)
                    if bland:
                        r = int(ties[np.argmin(self.basis[ties])])
                    else:
                        r = int(ties[np.argmax(np.abs(delta[ties]))])
                    theta = limit[r]
            if not np.isfinite(theta):
                return "unbounded"
            self.x[self.basis] = xb - theta * delta
            self.iterations += 1
            if r < 0:
                self.x[j] = lo[j] if self.at_upper[j] else hi[j]
                self.at_upper[j] = not self.at_upper[j]
                continue
            leave = int(self.basis[r])
            to_upper = delta[r] < 0
            self.x[leave] = hi[leave] if to_upper else lo[leave]
            self.at_upper[leave] = to_upper
            self.x[j] = self.x[j] + sigma * theta
            self.at_upper[j] = False
            self._pivot(r, j)
            basic[leave] = False
            basic[j] = True
            d -= d[j] * T[r]

    def _pivot(self, r, j):
        T = self.T
        col = T[:, j].copy()
        col[r] = 0.0
        T[r] /= T[r, j]
        T -= np.outer(col, T[r])
        self.basis[r] = j

    def drive_out_artificials(self):
        for r in range(self.m):
            if self.basis[r] < self.art0:
                continue
            row = np.abs(self.T[r, : self.art0])
            row[self.lo[: self.art0] == self.hi[: self.art0]] = 0.0
            nb = np.ones(self.art0, dtype=bool)
            nb[self.basis[self.basis < self.art0]] = False
            row[~nb] = 0.0
            j = int(np.argmax(row)) if row.size else -1
            if j >= 0 and row[j] > 1e-7:
                leave = int(self.basis[r])
                self._pivot(r, j)
                self.x[leave] = 0.0
                self.at_upper[leave] = False


def bounded_simplex(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    lo=None,
    hi=None,
    max_iter: int | None = None,
) -> LPResult:
    """Maximize ``c @ x`` over a bounded polyhedron.

    Raises
    ------
    SimplexError
        If the iteration guard is exceeded.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    lo = np.zeros(n) if lo is None else np.asarray(lo, dtype=float).copy()
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, dtype=float).copy()
    if not np.all(np.isfinite(lo)):
        raise ValueError("lower bounds must be finite")
    if np.any(lo > hi):
        return LPResult("infeasible", None, float("nan"), 0)

    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq
    N = n + m_ub + m
    A = np.zeros((m, N))
    A[:m_ub, :n] = A_ub
    A[m_ub:, :n] = A_eq
    A[np.arange(m_ub), n + np.arange(m_ub)] = 1.0
    b = np.concatenate([b_ub, b_eq])
    resid = b - A[:, :n] @ lo
    art_sign = np.where(resid < 0, -1.0, 1.0)
    art0 = n + m_ub
    A[np.arange(m), art0 + np.arange(m)] = art_sign

    full_lo = np.concatenate([lo, np.zeros(m_ub + m)])
    full_hi = np.concatenate([hi, np.full(m_ub + m, np.inf)])
    basis = art0 + np.arange(m)
    slack_ok = np.flatnonzero(resid[:m_ub] >= 0)
    basis[slack_ok] = n + slack_ok
    art_sign[slack_ok] = 1.0
    A[slack_ok, art0 + slack_ok] = 1.0
    needs_art = np.ones(m, dtype=bool)
    needs_art[slack_ok] = False
    full_hi[art0 + slack_ok] = 0.0

    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    bland_after = 10 * (m + N)

    tab = _Tableau(A, b, full_lo, full_hi, n)
    tab.setup(art_sign, basis)

    if needs_art.any():
        cost1 = np.zeros(N)
        cost1[art0:][needs_art] = -1.0
        tab.run(cost1, max_iter, bland_after)
        tab.refresh()
        infeas = float(tab.x[art0:].sum())
        if infeas > 1e-8 * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LPResult("infeasible", None, float("nan"), tab.iterations)
        tab.x[art0:] = np.maximum(tab.x[art0:], 0.0)
        full_hi[art0:] = 0.0
        tab.drive_out_artificials()
        tab.refresh()

    cost2 = np.zeros(N)
    cost2[:n] = c
    status = tab.run(cost2, max_iter, bland_after)
    if status == "unbounded":
        return LPResult("unbounded", None, float("inf"), tab.iterations)
    tab.refresh()
    x = np.clip(tab.x[:n], lo, hi)
    return LPResult("optimal", x, float(c @ x), tab.iterations)
