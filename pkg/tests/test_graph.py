import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from gcgp.errors import ValidationError
from gcgp.graph import (PropagationConfig, edge_list, from_edges, induced_subgraph, make_graph,
                        normalize_adjacency, propagate, row_normalize_rows)


def dense_oracle(A):
    """Symmetric normalization written out entry by entry."""
    n = len(A)
    At = [[A[i][j] + (1.0 if i == j else 0.0) for j in range(n)] for i in range(n)]
    deg = [sum(row) for row in At]
    return np.array([[At[i][j] / np.sqrt(deg[i] * deg[j]) for j in range(n)] for i in range(n)])


def random_adjacency(seed, n, p):
    rng = np.random.default_rng(seed)
    U = np.triu((rng.random((n, n)) < p).astype(float), 1)
    return U + U.T


def test_isolated_node():
    np.testing.assert_allclose(normalize_adjacency(np.zeros((1, 1))), [[1.0]])


def test_single_edge():
    np.testing.assert_allclose(normalize_adjacency(np.array([[0.0, 1], [1, 0]])), [[0.5, 0.5], [0.5, 0.5]])


def test_path_graph_matches_dense_oracle():
    A = [[0, 1, 0], [1, 0, 1], [0, 1, 0]]
    expected = dense_oracle(A)
    # degrees 2, 3, 2 after self loops
    assert expected[0, 1] == pytest.approx(1 / np.sqrt(6))
    np.testing.assert_allclose(normalize_adjacency(np.array(A, float)), expected, atol=1e-15)
    np.testing.assert_allclose(normalize_adjacency(sp.csr_matrix(np.array(A, float))).toarray(), expected,
                               atol=1e-15)


def test_sparse_in_sparse_out():
    A = sp.csr_matrix(random_adjacency(0, 10, 0.3))
    assert sp.issparse(normalize_adjacency(A))
    assert isinstance(normalize_adjacency(A.toarray()), np.ndarray)


def test_rejects_asymmetric_and_negative():
    with pytest.raises(ValidationError):
        normalize_adjacency(np.array([[0.0, 1], [0, 0]]))
    with pytest.raises(ValidationError):
        normalize_adjacency(np.array([[0.0, -1], [-1, 0]]))


def test_propagate_identities():
    X = np.random.default_rng(0).normal(size=(5, 3))
    A_hat = normalize_adjacency(random_adjacency(1, 5, 0.5))
    np.testing.assert_array_equal(propagate(A_hat, X, 0), X)
    one = np.array([[2.0, -1.0]])
    np.testing.assert_allclose(propagate(normalize_adjacency(np.zeros((1, 1))), one, 7), one)


def test_two_node_two_hops():
    A_hat = np.array([[0.5, 0.5], [0.5, 0.5]])
    oracle = A_hat @ A_hat @ np.eye(2)
    np.testing.assert_allclose(propagate(A_hat, np.eye(2), 2), oracle)
    np.testing.assert_allclose(oracle, 0.5)


def test_propagate_dimension_mismatch():
    with pytest.raises(ValidationError):
        propagate(np.eye(3), np.ones((4, 2)), 1)


def test_propagation_config_bounds():
    PropagationConfig(k=0)
    PropagationConfig(k=16)
    for bad in (-1, 17):
        with pytest.raises(ValidationError):
            PropagationConfig(k=bad)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 25), p=st.floats(0.0, 1.0))
def test_normalized_adjacency_symmetric_with_unit_spectral_radius(seed, n, p):
    A_hat = normalize_adjacency(random_adjacency(seed, n, p))
    assert np.abs(A_hat - A_hat.T).max() <= 1e-12
    # power iteration against the dense eigenvalue oracle
    v = np.random.default_rng(seed).normal(size=n)
    for _ in range(200):
        w = A_hat @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            break
        v = w / nrm
    rho_power = float(abs(v @ A_hat @ v))
    rho_eig = float(np.abs(np.linalg.eigvalsh(A_hat)).max())
    assert rho_power <= 1 + 1e-9
    assert rho_eig <= 1 + 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.integers(0, 4), b=st.integers(0, 4))
def test_propagation_composes(seed, a, b):
    A_hat = normalize_adjacency(sp.csr_matrix(random_adjacency(seed, 12, 0.3)))
    X = np.random.default_rng(seed).normal(size=(12, 3))
    np.testing.assert_allclose(propagate(A_hat, X, a + b), propagate(A_hat, propagate(A_hat, X, a), b),
                               atol=1e-10)


def test_row_normalize_rows_unit_l1_and_zero_rows():
    X = np.array([[1.0, 3.0], [0.0, 0.0], [-2.0, 2.0]])
    R = row_normalize_rows(X)
    np.testing.assert_allclose(np.abs(R[[0, 2]]).sum(axis=1), 1.0)
    np.testing.assert_array_equal(R[1], 0.0)


def test_edges_round_trip_and_induced_subgraph():
    edges = np.array([[0, 1], [1, 2], [2, 3]])
    A = from_edges(edges, 4)
    assert (A != A.T).nnz == 0
    np.testing.assert_array_equal(edge_list(A), edges)
    np.testing.assert_array_equal(induced_subgraph(A, np.array([1, 2, 0])),
                                  [[0, 1, 1], [1, 0, 0], [1, 0, 0]])


def test_graph_validation(toy):
    assert toy.num_nodes == 8 and toy.num_edges == 12
    n = toy.num_nodes
    with pytest.raises(ValidationError):
        make_graph(toy.features, edge_list(toy.adjacency), np.full(n, 5), toy.train, toy.val, toy.test, 2)
    with pytest.raises(ValidationError):
        make_graph(toy.features, edge_list(toy.adjacency), toy.labels, [n + 1], toy.val, toy.test, 2)
    with pytest.raises(ValidationError):
        make_graph(toy.features[:3], edge_list(toy.adjacency), toy.labels, toy.train, toy.val, toy.test, 2)


def test_split_all_labeled(toy):
    g = make_graph(toy.features, edge_list(toy.adjacency), toy.labels, [0, 4], [1, 5], [2, 3, 6, 7], 2)
    np.testing.assert_array_equal(np.sort(g.split("all-labeled")), [0, 1, 4, 5])
    with pytest.raises(ValidationError):
        g.split("bogus")


def test_cora_shape(cora):
    assert (cora.num_nodes, cora.num_features, cora.num_classes) == (2708, 1433, 7)
    assert cora.train.size == 140
    assert np.bincount(cora.labels[cora.train]).tolist() == [20] * 7


def test_citeseer_shape(citeseer):
    assert citeseer.num_nodes == 3327 and citeseer.num_classes == 6 and citeseer.train.size == 120
