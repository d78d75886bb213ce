"""Gaussian maximum-likelihood fit of the max-interference equation.

Under Gaussian noise the likelihood is maximized group by group by
ordinary least squares on the regressors

    [max_{j in N(i), c_j=1} s(i,j),  max_{j in N(i)} s(i,j) p_j,  f_i,  1]

built from the observed Calculus indicators ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import InterferenceGraph
from .model import GroupDomain, SEMParams

REGRESSORS = ("alpha", "beta", "gamma", "theta")
PIVOT_RTOL = 1e-10


class RankDeficiencyError(ValueError):
    def __init__(self, group: str, collinear: list[str], rank: int):
        self.group = group
        self.collinear = collinear
        self.rank = rank
        super().__init__(
            f"group {group!r}: design has rank {rank} of {len(REGRESSORS)}; "
            f"collinear regressors: {', '.join(collinear)}"
        )


@dataclass(frozen=True)
class FitDataset:
    groups: GroupDomain
    group: np.ndarray
    ap_ib: np.ndarray
    counselors: np.ndarray
    calculus: np.ndarray
    outcome: np.ndarray
    graph: InterferenceGraph

    def __post_init__(self):
        n = self.graph.n
        for name in ("group", "ap_ib", "counselors", "calculus", "outcome"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
            object.__setattr__(self, name, arr)
        for name in ("ap_ib", "calculus"):
            if not np.all(np.isin(getattr(self, name), (0, 1))):
                raise ValueError(f"{name} must be 0/1")
        if not np.all(np.isfinite(self.outcome)):
            raise ValueError("outcomes must be finite")
        if np.any(self.counselors < 0):
            raise ValueError("counselors must be >= 0")


@dataclass(frozen=True)
class FitResult:
    params: SEMParams
    residual_variance: np.ndarray
    n_per_group: np.ndarray
    standard_errors: np.ndarray  # (n_groups, 4), unbiased noise estimate


def design_matrix(graph: InterferenceGraph, calculus, ap_ib, counselors) -> np.ndarray:
    """Regressor rows for every unit, shape (n, 4)."""
    calculus = np.asarray(calculus)
    ap_ib = np.asarray(ap_ib, dtype=float)
    X = np.empty((graph.n, 4))
    for i in range(graph.n):
        nb, s = graph.neighbors[i], graph.similarities[i]
        on = calculus[nb] == 1
        X[i, 0] = s[on].max() if on.any() else 0.0
        X[i, 1] = (s * ap_ib[nb]).max() if len(nb) else 0.0
    X[:, 2] = counselors
    X[:, 3] = 1.0
    return X


def _pivoted_cholesky(M: np.ndarray, rtol: float):
    """Diagonal-pivoted Cholesky ``M[p][:, p] = L L^T``.

    Stops when the next pivot falls below ``rtol`` times the largest
    pivot; returns ``(L, perm, rank)``.
    """
    M = M.copy()
    n = len(M)
    perm = np.arange(n)
    L = np.zeros_like(M)
    top = 0.0
    for k in range(n):
        diag = np.diag(M)[k:] - np.sum(L[k:, :k] ** 2, axis=1)
        q = k + int(np.argmax(diag))
        piv = diag[q - k]
        top = max(top, piv)
        if piv <= rtol * top or piv <= 0:
            return L, perm, k
        if q != k:
            M[[k, q]] = M[[q, k]]
            M[:, [k, q]] = M[:, [q, k]]
            L[[k, q]] = L[[q, k]]
            perm[[k, q]] = perm[[q, k]]
        L[k, k] = np.sqrt(piv)
        L[k + 1 :, k] = (M[k + 1 :, k] - L[k + 1 :, :k] @ L[k, :k]) / L[k, k]
    return L, perm, n


def _cho_solve(L, perm, rhs):
    y = np.linalg.solve(L, rhs[perm])
    x = np.linalg.solve(L.T, y)
    out = np.empty_like(x)
    out[perm] = x
    return out


def _collinear(G: np.ndarray, rank: int) -> list[int]:
    """Columns carrying weight in the (near) null space of a scaled Gram matrix."""
    _, vecs = np.linalg.eigh(G)
    null = vecs[:, : G.shape[0] - rank]
    weight = np.sqrt(np.sum(null**2, axis=1))
    return np.flatnonzero(weight > 1e-6).tolist()


def least_squares(X: np.ndarray, y: np.ndarray, label: str = "") -> tuple[np.ndarray, np.ndarray]:
    """OLS via column-scaled normal equations and pivoted Cholesky.

    Returns ``(coef, inverse of X^T X)``.  One step of iterative
    refinement is applied to the coefficients.
    """
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    Xs = X / scale
    G = Xs.T @ Xs
    L, perm, rank = _pivoted_cholesky(G, PIVOT_RTOL)
    if rank < X.shape[1]:
        raise RankDeficiencyError(label, [REGRESSORS[j] for j in _collinear(G, rank)], rank)
    rhs = Xs.T @ y
    b = _cho_solve(L, perm, rhs)
    b += _cho_solve(L, perm, rhs - G @ b)
    Ginv = _cho_solve(L, perm, np.eye(len(G)))
    return b / scale, Ginv / np.outer(scale, scale)


def fit_max_interference(data: FitDataset) -> FitResult:
    """Fit (alpha, beta, gamma, theta) separately for every group."""
    X = design_matrix(data.graph, data.calculus, data.ap_ib, data.counselors)
    y = np.asarray(data.outcome, dtype=float)
    g = len(data.groups)
    coef = np.zeros((g, 4))
    var = np.zeros(g)
    se = np.zeros((g, 4))
    counts = np.zeros(g, dtype=np.int64)
    for a, label in enumerate(data.groups.labels):
        rows = np.flatnonzero(data.group == a)
        counts[a] = rows.size
        if rows.size < 4:
            raise ValueError(
                f"group {label!r} has {rows.size} units; at least 4 are needed"
            )
        b, cov = least_squares(X[rows], y[rows], label)
        resid = y[rows] - X[rows] @ b
        rss = float(resid @ resid)
        coef[a] = b
        var[a] = rss / rows.size
        dof = rows.size - 4
        sigma2 = rss / dof if dof > 0 else np.nan
        se[a] = np.sqrt(np.maximum(sigma2 * np.diag(cov), 0.0))
    params = SEMParams(*coef.T)
    return FitResult(params, var, counts, se)
