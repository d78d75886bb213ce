"""Neighbor structure for interference between units.

Each unit ``i`` has an ordered neighbor list ``N(i)`` and aligned
similarities ``s(i, j)``.  The k-nearest-neighbor builder uses Euclidean
distance in the raw coordinate space and inverse distance as similarity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_SELF_FACTOR = 2.0


@dataclass(frozen=True)
class InterferenceGraph:
    """Per-unit ordered neighbor lists with aligned similarities.

    Attributes:
        neighbors: one int array per unit, nearest first.
        similarities: one float array per unit, aligned with ``neighbors``.
        k: bound on the neighbor-list length.
        include_self: whether every unit was required to list itself.
    """

    neighbors: tuple[np.ndarray, ...]
    similarities: tuple[np.ndarray, ...]
    k: int
    include_self: bool = True

    def __post_init__(self):
        if len(self.neighbors) != len(self.similarities):
            raise ValueError("neighbors and similarities differ in length")
        n = len(self.neighbors)
        nbrs = tuple(np.asarray(a, dtype=np.int64) for a in self.neighbors)
        sims = tuple(np.asarray(a, dtype=float) for a in self.similarities)
        for i, (nb, s) in enumerate(zip(nbrs, sims)):
            if nb.shape != s.shape or nb.ndim != 1:
                raise ValueError(f"unit {i}: neighbor/similarity shape mismatch")
            if len(nb) > self.k:
                raise ValueError(f"unit {i}: {len(nb)} neighbors exceeds k={self.k}")
            if len(nb) and (nb.min() < 0 or nb.max() >= n):
                raise ValueError(f"unit {i}: neighbor index out of range")
            if len(np.unique(nb)) != len(nb):
                raise ValueError(f"unit {i}: duplicate neighbor")
            if not np.all(np.isfinite(s)) or np.any(s < 0):
                raise ValueError(f"unit {i}: similarities must be finite and >= 0")
            if self.include_self and i not in nb:
                raise ValueError(f"unit {i}: include_self set but i not in N(i)")
            nb.setflags(write=False)
            s.setflags(write=False)
        object.__setattr__(self, "neighbors", nbrs)
        object.__setattr__(self, "similarities", sims)

    @property
    def n(self) -> int:
        return len(self.neighbors)

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def in_degree(self) -> np.ndarray:
        """Number of lists each unit appears in, excluding its own."""
        counts = np.zeros(self.n, dtype=np.int64)
        for i, nb in enumerate(self.neighbors):
            others = nb[nb != i]
            np.add.at(counts, others, 1)
        return counts


def build_knn_graph(
    coords: Sequence[Sequence[float]] | np.ndarray,
    k: int,
    include_self: bool = True,
    self_factor: float = DEFAULT_SELF_FACTOR,
) -> InterferenceGraph:
    """Build a k-nearest-neighbor interference graph.

    Parameters
    ----------
    coords : array-like, shape (n, 2)
        Planar coordinates, one row per unit.  ``None`` rows are rejected.
    k : int
        Neighborhood size.  When ``include_self`` is true the unit itself
        counts toward ``k``.
    include_self : bool
        Put ``i`` first in its own list.
    self_factor : float
        Similarity assigned at distance zero (self and duplicate
        coordinates) is ``self_factor`` times the largest finite inverse
        distance between any two distinct positions.

    Returns
    -------
    InterferenceGraph
        Neighbors ordered nearest first; distance ties broken by the lower
        unit index.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if any(c is None for c in coords):
        raise ValueError("every unit needs coordinates to build a k-NN graph")
    xy = np.asarray(coords, dtype=float)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ValueError(f"coords must have shape (n, 2), got {xy.shape}")
    if not np.all(np.isfinite(xy)):
        raise ValueError("coordinates must be finite")
    n = len(xy)
    pool = n if include_self else n - 1
    if k > pool:
        raise ValueError(f"k={k} exceeds the {pool} available neighbors")

    diff = xy[:, None, :] - xy[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    positive = dist[dist > 0]
    base = 1.0 / positive.min() if positive.size else 1.0
    s_cap = self_factor * base

    idx = np.arange(n)
    neighbors, sims = [], []
    for i in range(n):
        # self sorts ahead of any duplicate position, then lower index wins
        order = np.lexsort((idx, idx != i, dist[i]))
        if not include_self:
            order = order[order != i]
        chosen = order[:k]
        d = dist[i, chosen]
        s = np.full(len(chosen), s_cap)
        nz = d > 0
        s[nz] = 1.0 / d[nz]
        neighbors.append(chosen)
        sims.append(s)
    return InterferenceGraph(tuple(neighbors), tuple(sims), k, include_self)


def neighbor_pattern(graph: InterferenceGraph, z, i: int) -> tuple[int, ...]:
    """Return ``z`` restricted to ``N(i)`` in stored neighbor order."""
    z = np.asarray(z)
    if z.shape != (graph.n,):
        raise ValueError(f"z must have length {graph.n}, got shape {z.shape}")
    return tuple(int(v) for v in z[graph.neighbors[i]])
