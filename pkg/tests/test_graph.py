import numpy as np
import pytest

from amlp.errors import ValidationError
from amlp.graph import (
    SparseGraph,
    aggregate,
    build_graph,
    dirichlet_energy,
    homophily_ratio,
    normalize_no_self_loops,
    normalize_with_self_loops,
    propagate,
    row_normalize,
    spmm,
)


def random_graph(n, p, seed):
    rng = np.random.default_rng(seed)
    dense = rng.random((n, n)) < p
    dense = np.triu(dense, k=1)
    u, v = np.nonzero(dense)
    return build_graph(np.column_stack([u, v]), n)


def dense_adj(g):
    return g.to_scipy().toarray()


# ---------------------------------------------------------------------------
# build_graph
# ---------------------------------------------------------------------------


def test_build_graph_single_edge():
    g = build_graph([(0, 1)], 2)
    assert g.n_nodes == 2
    assert list(g.neighbors(0)) == [1]
    assert list(g.neighbors(1)) == [0]


def test_build_graph_dedup_and_self_loop():
    g = build_graph([(0, 1), (1, 0), (2, 2)], 3)
    assert list(g.neighbors(0)) == [1]
    assert list(g.neighbors(1)) == [0]
    assert list(g.neighbors(2)) == []
    g.validate()


def test_build_graph_matches_dense_oracle():
    rng = np.random.default_rng(7)
    n = 50
    edges = rng.integers(0, n, size=(200, 2))
    g = build_graph(edges, n)
    g.validate()
    # dense oracle: symmetrize then zero the diagonal
    dense = np.zeros((n, n), dtype=bool)
    for u, v in edges:
        dense[u, v] = True
        dense[v, u] = True
    np.fill_diagonal(dense, False)
    assert np.array_equal(dense_adj(g) > 0, dense)


def test_build_graph_rejects_out_of_range_with_position():
    with pytest.raises(ValidationError, match="edge 2"):
        build_graph([(0, 1), (0, 5)], 3)


# ---------------------------------------------------------------------------
# normalizations
# ---------------------------------------------------------------------------


def test_normalize_with_self_loops_single_edge():
    at = normalize_with_self_loops(build_graph([(0, 1)], 2))
    assert np.allclose(at.to_dense(), [[0.5, 0.5], [0.5, 0.5]])
    assert at.self_loops
    at.validate()


def test_normalize_with_self_loops_empty_graph_is_identity():
    at = normalize_with_self_loops(build_graph([], 3))
    assert np.array_equal(at.to_dense(), np.eye(3))


def test_normalize_with_self_loops_triangle():
    at = normalize_with_self_loops(build_graph([(0, 1), (1, 2), (0, 2)], 3))
    assert np.allclose(at.to_dense(), np.full((3, 3), 1.0 / 3.0))


def test_normalize_no_self_loops_single_edge():
    st = normalize_no_self_loops(build_graph([(0, 1)], 2))
    assert np.array_equal(st.to_dense(), [[0.0, 1.0], [1.0, 0.0]])
    assert not st.self_loops
    st.validate()


def test_normalize_no_self_loops_triangle():
    st = normalize_no_self_loops(build_graph([(0, 1), (1, 2), (0, 2)], 3))
    expected = np.full((3, 3), 0.5)
    np.fill_diagonal(expected, 0.0)
    assert np.allclose(st.to_dense(), expected)


def test_normalize_no_self_loops_isolated_node_zero_row():
    st = normalize_no_self_loops(build_graph([(0, 1)], 3))
    dense = st.to_dense()
    assert np.all(dense[2] == 0.0)
    assert np.all(dense[:, 2] == 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_normalized_values_exactly_symmetric(seed):
    g = random_graph(40, 0.1, seed)
    for adj in (normalize_with_self_loops(g), normalize_no_self_loops(g)):
        dense = adj.to_dense()
        assert np.array_equal(dense, dense.T)


def test_normalize_weighted_graph():
    from amlp.graph import WeightedGraph

    # weighted triangle: weights 0.5, 0.25, 1.0 on edges (0,1), (1,2), (0,2)
    g = build_graph([(0, 1), (1, 2), (0, 2)], 3)
    w = {(0, 1): 0.5, (1, 2): 0.25, (0, 2): 1.0}
    rows = np.repeat(np.arange(3), g.degrees())
    vals = np.array([w[tuple(sorted((int(r), int(c))))] for r, c in zip(rows, g.indices)])
    wg = WeightedGraph(n_nodes=3, indptr=g.indptr, indices=g.indices, values=vals)
    assert np.allclose(wg.degrees(), [1.5, 0.75, 1.25])
    st = normalize_no_self_loops(wg)
    dense = st.to_dense()
    assert np.array_equal(dense, dense.T)
    assert np.isclose(dense[0, 1], 0.5 / np.sqrt(1.5 * 0.75))
    eig = np.linalg.eigvalsh(dense)
    assert np.abs(eig).max() <= 1.0 + 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_spectral_bound_weighted_random(seed):
    """Soft reconstruction output also keeps the normalized spectrum in [-1, 1]."""
    from amlp.reconstruct import ReconstructionConfig, reconstruct_soft

    rng = np.random.default_rng(seed + 400)
    g = random_graph(40, 0.15, seed + 400)
    x = rng.standard_normal((40, 5))
    wg, _ = reconstruct_soft(
        g, x, ReconstructionConfig(mode="soft", steepness=20.0, epsilon=0.01)
    )
    st = normalize_no_self_loops(wg)
    eig = np.linalg.eigvalsh(st.to_dense())
    assert np.abs(eig).max() <= 1.0 + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_spectral_bound_random_graphs(seed):
    g = random_graph(60, 0.08, seed)
    st = normalize_no_self_loops(g)
    eig = np.linalg.eigvalsh(st.to_dense())
    assert np.abs(eig).max() <= 1.0 + 1e-9
    at = normalize_with_self_loops(g)
    eig = np.linalg.eigvalsh(at.to_dense())
    assert np.abs(eig).max() <= 1.0 + 1e-9


# ---------------------------------------------------------------------------
# spmm / propagate
# ---------------------------------------------------------------------------


def test_spmm_swap():
    st = normalize_no_self_loops(build_graph([(0, 1)], 2))
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(spmm(st, x), [[3.0, 4.0], [1.0, 2.0]])


def test_spmm_identity():
    at = normalize_with_self_loops(build_graph([], 3))
    x = np.arange(6, dtype=float).reshape(3, 2)
    assert np.array_equal(spmm(at, x), x)


def test_spmm_matches_dense_oracle():
    g = random_graph(30, 0.15, 3)
    st = normalize_no_self_loops(g)
    x = np.random.default_rng(4).standard_normal((30, 7))
    assert np.max(np.abs(spmm(st, x) - st.to_dense() @ x)) <= 1e-12


def test_spmm_dimension_mismatch():
    st = normalize_no_self_loops(build_graph([(0, 1)], 2))
    with pytest.raises(ValidationError):
        spmm(st, np.zeros((3, 2)))


def test_propagate_involution():
    st = normalize_no_self_loops(build_graph([(0, 1)], 2))
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(propagate(st, x, 2), x)


def test_propagate_k1_equals_spmm():
    g = random_graph(20, 0.2, 5)
    st = normalize_no_self_loops(g)
    x = np.random.default_rng(6).standard_normal((20, 4))
    assert np.array_equal(propagate(st, x, 1), spmm(st, x))


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_propagate_matches_dense_power_oracle(k):
    g = random_graph(20, 0.2, 11)
    st = normalize_no_self_loops(g)
    x = np.random.default_rng(12).standard_normal((20, 5))
    expected = np.linalg.matrix_power(st.to_dense(), k) @ x
    got = propagate(st, x, k)
    denom = max(np.abs(expected).max(), 1e-30)
    assert np.abs(got - expected).max() / denom <= 1e-10


def test_propagate_rejects_k0():
    st = normalize_no_self_loops(build_graph([(0, 1)], 2))
    with pytest.raises(ValidationError):
        propagate(st, np.zeros((2, 1)), 0)


# ---------------------------------------------------------------------------
# aggregate
# ---------------------------------------------------------------------------


def test_aggregate_two_neighbor_reductions():
    # node 0 has neighbors 1 and 2 with rows [1,2] and [3,4]
    g = build_graph([(0, 1), (0, 2)], 3)
    x = np.array([[9.0, 9.0], [1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(aggregate("mean", g, x)[0], [2.0, 3.0])
    assert np.array_equal(aggregate("max", g, x)[0], [3.0, 4.0])
    assert np.array_equal(aggregate("sum", g, x)[0], [4.0, 6.0])


def test_aggregate_weighted_sum_single_edge():
    g = build_graph([(0, 1)], 2)
    at = normalize_with_self_loops(g)
    x = np.eye(2)
    assert np.allclose(aggregate("weighted_sum", g, x, at), [[0.5, 0.5], [0.5, 0.5]])


def test_aggregate_isolated_node_zero_row():
    g = build_graph([(0, 1)], 3)
    x = np.ones((3, 2))
    for kind in ("mean", "max", "sum"):
        assert np.array_equal(aggregate(kind, g, x)[2], [0.0, 0.0])


def test_aggregate_sum_equals_mean_scaled_by_degree():
    g = random_graph(40, 0.1, 21)
    x = np.random.default_rng(22).standard_normal((40, 6))
    s = aggregate("sum", g, x)
    m = aggregate("mean", g, x)
    deg = g.degrees()
    nz = deg > 0
    assert np.array_equal(m[nz], s[nz] / deg[nz, None])


def test_aggregate_requires_a_tilde_for_weighted_sum():
    g = build_graph([(0, 1)], 2)
    with pytest.raises(ValidationError):
        aggregate("weighted_sum", g, np.zeros((2, 1)))


# ---------------------------------------------------------------------------
# row_normalize
# ---------------------------------------------------------------------------


def test_row_normalize_345():
    assert np.allclose(row_normalize(np.array([[3.0, 4.0]])), [[0.6, 0.8]])


def test_row_normalize_zero_row():
    out = row_normalize(np.array([[0.0, 0.0], [1.0, 0.0]]))
    assert np.array_equal(out[0], [0.0, 0.0])
    assert np.array_equal(out[1], [1.0, 0.0])


def test_row_normalize_norms_are_unit_or_zero():
    rng = np.random.default_rng(31)
    for _ in range(10):
        m = rng.standard_normal((20, 5))
        m[rng.integers(0, 20)] = 0.0
        norms = np.linalg.norm(row_normalize(m), axis=1)
        assert np.all((np.abs(norms - 1.0) <= 1e-12) | (norms == 0.0))


# ---------------------------------------------------------------------------
# dirichlet_energy
# ---------------------------------------------------------------------------


def brute_force_dirichlet(at, y):
    dense = at.to_dense()
    total = 0.0
    for i in range(dense.shape[0]):
        for j in range(dense.shape[1]):
            total += dense[i, j] * np.sum((y[i] - y[j]) ** 2)
    return total


def test_dirichlet_identical_rows_zero():
    at = normalize_with_self_loops(build_graph([(0, 1), (1, 2)], 3))
    y = np.tile([0.6, 0.8], (3, 1))
    assert dirichlet_energy(at, y) == 0.0


def test_dirichlet_single_edge_value():
    at = normalize_with_self_loops(build_graph([(0, 1)], 2))
    y = np.eye(2)
    assert np.isclose(dirichlet_energy(at, y), 2.0, rtol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_dirichlet_matches_brute_force(seed):
    g = random_graph(25, 0.2, seed + 100)
    at = normalize_with_self_loops(g)
    y = row_normalize(np.random.default_rng(seed).standard_normal((25, 4)))
    got = dirichlet_energy(at, y)
    expected = brute_force_dirichlet(at, y)
    assert np.isclose(got, expected, rtol=1e-12)


def test_dirichlet_permutation_invariant():
    g = random_graph(30, 0.15, 200)
    at = normalize_with_self_loops(g)
    rng = np.random.default_rng(201)
    y = row_normalize(rng.standard_normal((30, 3)))
    perm = rng.permutation(30)
    # permute the underlying graph and embedding together
    edges = g.edge_array()
    g2 = build_graph(np.column_stack([perm[edges[:, 0]], perm[edges[:, 1]]]), 30)
    at2 = normalize_with_self_loops(g2)
    y2 = np.empty_like(y)
    y2[perm] = y
    assert np.isclose(dirichlet_energy(at, y), dirichlet_energy(at2, y2), rtol=1e-12)


def test_dirichlet_requires_self_loop_normalization():
    st = normalize_no_self_loops(build_graph([(0, 1)], 2))
    with pytest.raises(ValidationError):
        dirichlet_energy(st, np.eye(2))


# ---------------------------------------------------------------------------
# homophily_ratio
# ---------------------------------------------------------------------------


def test_homophily_all_same_label():
    g = build_graph([(0, 1), (1, 2)], 3)
    assert homophily_ratio(g, np.zeros(3, dtype=np.int64)) == 1.0


def test_homophily_complete_bipartite():
    edges = [(u, v) for u in range(3) for v in range(3, 6)]
    g = build_graph(edges, 6)
    labels = np.array([0, 0, 0, 1, 1, 1])
    assert homophily_ratio(g, labels) == 0.0


def test_homophily_excludes_unlabeled_and_isolated():
    g = build_graph([(0, 1)], 3)
    labels = np.array([0, 0, -1])  # node 2 isolated and unlabeled
    assert homophily_ratio(g, labels) == 1.0


def test_homophily_no_eligible_node():
    g = build_graph([], 3)
    with pytest.raises(ValidationError):
        homophily_ratio(g, np.array([0, 1, 0]))
