import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from fairalloc.graph import InterferenceGraph, build_knn_graph, neighbor_pattern


def test_collinear_example():
    g = build_knn_graph([(0, 0), (1, 0), (3, 0)], k=2, include_self=False)
    assert g.neighbors[0].tolist() == [1, 2]
    np.testing.assert_allclose(g.similarities[0], [1.0, 1 / 3])


def test_full_graph_is_permutation():
    coords = np.random.default_rng(0).uniform(size=(6, 2))
    g = build_knn_graph(coords, k=6, include_self=True)
    for i, nb in enumerate(g.neighbors):
        assert sorted(nb.tolist()) == list(range(6))
        assert nb[0] == i


def test_duplicate_coordinates_get_cap():
    g = build_knn_graph([(0, 0), (0, 0), (2, 0)], k=2, include_self=False, self_factor=2.0)
    # largest finite similarity over distinct positions is 1/2
    assert g.neighbors[0].tolist() == [1, 2]
    np.testing.assert_allclose(g.similarities[0], [1.0, 0.5])


def test_self_first_and_capped():
    g = build_knn_graph([(0, 0), (0, 1), (0, 4)], k=2, include_self=True, self_factor=3.0)
    assert [nb[0] for nb in g.neighbors] == [0, 1, 2]
    assert g.similarities[0][0] == pytest.approx(3.0)


def test_self_precedes_duplicate():
    g = build_knn_graph([(0, 0), (0, 0)], k=2, include_self=True)
    assert g.neighbors[1].tolist() == [1, 0]


def test_distance_tie_goes_to_lower_index():
    g = build_knn_graph([(0, 0), (1, 0), (-1, 0)], k=1, include_self=False)
    assert g.neighbors[0].tolist() == [1]


@pytest.mark.parametrize("k", [0, -1])
def test_nonpositive_k(k):
    with pytest.raises(ValueError):
        build_knn_graph([(0, 0), (1, 1)], k=k)


def test_k_too_large_and_missing_coords():
    with pytest.raises(ValueError):
        build_knn_graph([(0, 0), (1, 1)], k=2, include_self=False)
    with pytest.raises(ValueError, match="coordinates"):
        build_knn_graph([(0, 0), None], k=1)


def test_graph_validation():
    with pytest.raises(ValueError, match="duplicate"):
        InterferenceGraph(([0, 0],), ([1.0, 1.0],), k=2)
    with pytest.raises(ValueError, match="include_self"):
        InterferenceGraph(([1], [0]), ([1.0], [1.0]), k=1, include_self=True)
    with pytest.raises(ValueError):
        InterferenceGraph(([0],), ([-1.0],), k=1)


def test_neighbor_pattern_examples():
    g = InterferenceGraph(([0], [1], [2, 0]), ([1.0], [1.0], [1.0, 0.5]), k=2, include_self=True)
    assert neighbor_pattern(g, [1, 0, 0], 2) == (0, 1)
    assert neighbor_pattern(g, [0, 0, 0], 2) == (0, 0)
    assert neighbor_pattern(g, [1, 1, 1], 2) == (1, 1)
    with pytest.raises(ValueError):
        neighbor_pattern(g, [1, 0], 2)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 30), st.integers(1, 4), st.booleans())
def test_matches_kdtree_oracle(seed, n, k, include_self):
    coords = np.random.default_rng(seed).uniform(size=(n, 2))
    g = build_knn_graph(coords, k, include_self)
    tree = cKDTree(coords)
    d, idx = tree.query(coords, k=k + (0 if include_self else 1))
    idx = idx.reshape(n, -1)
    d = d.reshape(n, -1)
    for i in range(n):
        want = idx[i] if include_self else idx[i][idx[i] != i][:k]
        assert g.neighbors[i].tolist() == list(want)
        dist = d[i] if include_self else d[i][idx[i] != i][:k]
        nz = dist > 0
        np.testing.assert_allclose(g.similarities[i][nz], 1 / dist[nz], rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_similarity_symmetric(seed):
    coords = np.random.default_rng(seed).uniform(size=(12, 2))
    g = build_knn_graph(coords, 4, True)
    edges = {(i, int(j)): s for i in range(12) for j, s in zip(g.neighbors[i], g.similarities[i])}
    for (i, j), s in edges.items():
        if (j, i) in edges:
            assert edges[(j, i)] == pytest.approx(s)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_pattern_ignores_outside_z(seed):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(size=(10, 2))
    g = build_knn_graph(coords, 3, True)
    z = rng.integers(0, 2, 10)
    i = int(rng.integers(10))
    outside = np.setdiff1d(np.arange(10), g.neighbors[i])
    z2 = z.copy()
    z2[outside] = rng.permutation(z[outside])
    assert neighbor_pattern(g, z, i) == neighbor_pattern(g, z2, i)


def test_arrays_read_only():
    g = build_knn_graph([(0, 0), (1, 0)], 2)
    with pytest.raises(ValueError):
        g.neighbors[0][0] = 1


def test_in_degree():
    g = build_knn_graph([(0, 0), (1, 0), (3, 0)], k=2, include_self=True)
    # lists: [0,1], [1,0], [2,1]
    assert g.in_degree().tolist() == [1, 2, 0]
