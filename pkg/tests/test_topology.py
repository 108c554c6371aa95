import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from penaldiff import CombinationMatrix, Graph, metropolis_weights, validate_combination
from penaldiff.exceptions import DimensionMismatch, DisconnectedGraph, EmptyGraph
from penaldiff.topology import (
    complete_graph,
    path_graph,
    random_connected_graph,
    ring_graph,
    validate_composite,
)


def test_metropolis_three_node_path():
    A = metropolis_weights(path_graph(3))
    expected = np.array([[2 / 3, 1 / 3, 0], [1 / 3, 1 / 3, 1 / 3], [0, 1 / 3, 2 / 3]])
    np.testing.assert_allclose(A.weights, expected, atol=1e-15)
    report = validate_combination(A)
    assert report.passed
    assert all(report.flags().values())


def test_metropolis_single_node():
    A = metropolis_weights(Graph.from_edges(1, []))
    np.testing.assert_array_equal(A.weights, [[1.0]])
    assert validate_combination(A).passed


def test_metropolis_complete_four():
    A = metropolis_weights(complete_graph(4))
    np.testing.assert_allclose(A.weights, np.full((4, 4), 0.25), atol=1e-15)


def test_identity_is_not_primitive():
    g = path_graph(3)
    report = validate_combination(CombinationMatrix(np.eye(3), g), "A")
    assert report.supported and report.left_stochastic and report.doubly_stochastic
    assert not report.primitive
    assert not report.passed


def test_negative_entry_reported_not_raised():
    g = complete_graph(3)
    w = np.full((3, 3), 1 / 3)
    w[0, 1] = -0.1
    w[1, 1] += 0.1  # column still sums to one
    report = validate_combination(CombinationMatrix(w, g))
    assert not report.left_stochastic
    assert not report.passed
    assert report.to_dict()["pass"] is False


def test_unsupported_weight_flagged():
    g = path_graph(3)
    w = np.full((3, 3), 1 / 3)  # a_13 nonzero but 1 and 3 are not neighbours
    report = validate_combination(CombinationMatrix(w, g))
    assert not report.supported


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        CombinationMatrix(np.eye(2), path_graph(3))


def test_disconnected_and_empty():
    with pytest.raises(DisconnectedGraph):
        metropolis_weights(Graph.from_edges(4, [(0, 1), (2, 3)]))
    with pytest.raises(EmptyGraph):
        Graph.from_edges(0, [])


def test_metropolis_self_loops_added():
    g = Graph.from_edges(3, [(0, 1), (1, 2)], self_loops=False)
    A = metropolis_weights(g)
    assert A.graph.self_loops.all()
    assert (np.diag(A.weights) > 0).all()
    assert validate_combination(A).passed


def test_graph_serialization_round_trip():
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)], self_loops=[0, 2])
    h = Graph.from_dict(g.to_dict())
    np.testing.assert_array_equal(g.adjacency, h.adjacency)


def test_ring_primitive_even_cycle():
    # even cycles without self-loops are periodic; Metropolis adds self-loops
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)], self_loops=False)
    bare = CombinationMatrix(np.array([[0, .5, 0, .5], [.5, 0, .5, 0], [0, .5, 0, .5], [.5, 0, .5, 0]]), g)
    assert not validate_combination(bare).primitive
    assert validate_combination(metropolis_weights(g)).primitive


def test_composite_atc_cta_pairs():
    A = metropolis_weights(ring_graph(5))
    ident = CombinationMatrix.identity(A.graph)
    assert validate_composite(ident, A).passed
    assert validate_composite(A, ident).passed
    assert not validate_composite(ident, ident).passed


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_metropolis_properties(n, seed, p):
    g = random_connected_graph(n, np.random.default_rng(seed), p=p)
    A = metropolis_weights(g)
    w = A.weights
    assert np.abs(w.sum(axis=0) - 1).max() <= 1e-12
    assert np.abs(w.sum(axis=1) - 1).max() <= 1e-12
    np.testing.assert_array_equal(w, w.T)
    assert (w >= 0).all()
    # zero pattern equals the complement of the (self-looped) adjacency
    np.testing.assert_array_equal(w > 0, A.graph.adjacency)
    assert validate_combination(A).passed


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2**32 - 1))
def test_metropolis_permutation_equivariant(n, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, rng)
    perm = rng.permutation(n)
    A = metropolis_weights(g).weights
    B = metropolis_weights(g.permuted(perm)).weights
    np.testing.assert_allclose(B, A[np.ix_(perm, perm)], atol=0)
