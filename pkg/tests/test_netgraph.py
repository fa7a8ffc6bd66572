from collections import deque

import numpy as np
import pytest

from app.exceptions import ConfigurationError, GraphError, ParseError
from optim.netgraph import (
    Graph,
    closed_neighborhood,
    complete_graph,
    erdos_renyi,
    metropolis_weights,
    mixing_matrix,
    path_graph,
    read_graph_file,
    sqrt_operators,
    star_graph,
    write_graph_file,
)


def _bfs_reaches_all(g):
    adj = {i: set() for i in range(g.m)}
    for i, j in g.edges:
        adj[i].add(j)
        adj[j].add(i)
    seen = {0}
    q = deque([0])
    while q:
        u = q.popleft()
        for v in adj[u] - seen:
            seen.add(v)
            q.append(v)
    return len(seen) == g.m


def test_erdos_renyi_p_one_is_complete():
    assert erdos_renyi(2, 1.0, 0).edges == {(0, 1)}
    assert len(erdos_renyi(4, 1.0, 7).edges) == 6


def test_erdos_renyi_connected_and_deterministic():
    g = erdos_renyi(20, 0.1, 3)
    assert _bfs_reaches_all(g)
    assert erdos_renyi(20, 0.1, 3).edges == g.edges
    for i, j in g.edges:
        assert i < j


def test_erdos_renyi_rejects_bad_arguments():
    with pytest.raises(ConfigurationError):
        erdos_renyi(1, 0.5, 0)
    with pytest.raises(ConfigurationError):
        erdos_renyi(5, 0.0, 0)


def test_graph_rejects_self_loops_and_disconnection():
    with pytest.raises(GraphError):
        Graph.from_edges(3, [(0, 0), (0, 1), (1, 2)])
    with pytest.raises(GraphError):
        Graph.from_edges(4, [(0, 1), (2, 3)])


def test_metropolis_path_three():
    W = metropolis_weights(path_graph(3))
    np.testing.assert_allclose(W[0, 1], 1 / 3, atol=1e-15)
    np.testing.assert_allclose(W[1, 2], 1 / 3, atol=1e-15)
    assert W[0, 2] == 0.0
    np.testing.assert_allclose(np.diag(W), [2 / 3, 1 / 3, 2 / 3], atol=1e-15)
    # independent doubly-stochastic check
    for i in range(3):
        assert abs(sum(W[i, j] for j in range(3)) - 1.0) <= 1e-12
        assert abs(sum(W[j, i] for j in range(3)) - 1.0) <= 1e-12


def test_metropolis_small_cases():
    np.testing.assert_allclose(metropolis_weights(complete_graph(2)), [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_array_equal(metropolis_weights(Graph.from_edges(1, ())), [[1.0]])


def test_metropolis_independent_of_edge_order():
    edges = [(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)]
    a = metropolis_weights(Graph.from_edges(4, edges))
    b = metropolis_weights(Graph.from_edges(4, [(j, i) for i, j in reversed(edges)]))
    assert np.array_equal(a, b)


def test_mixing_matrix_examples():
    np.testing.assert_allclose(mixing_matrix(np.ones((1, 1)), 1 / 3).W, [[1.0]], atol=1e-15)
    mix = mixing_matrix(np.full((2, 2), 0.5), 1 / 3)
    np.testing.assert_allclose(mix.W, [[5 / 6, 1 / 6], [1 / 6, 5 / 6]], atol=1e-15)

    mix = mixing_matrix(metropolis_weights(path_graph(3)), 1 / 3)
    np.testing.assert_allclose(np.diag(mix.W), [8 / 9, 7 / 9, 8 / 9], atol=1e-14)
    np.testing.assert_allclose([mix.W[0, 1], mix.W[1, 2]], [1 / 9, 1 / 9], atol=1e-14)
    assert mix.min_eigenvalue() >= 1 / 3 - 1e-10


@pytest.mark.parametrize("c", [0.0, 0.5, -0.1, 0.7])
def test_mixing_matrix_rejects_c(c):
    with pytest.raises(ConfigurationError):
        mixing_matrix(np.full((2, 2), 0.5), c)


@pytest.mark.parametrize("p,seed", [(0.1, 0), (0.5, 1), (0.9, 2)])
def test_mixing_matrix_invariants(p, seed):
    c = 1 / 3
    mix = mixing_matrix(metropolis_weights(erdos_renyi(20, p, seed)), c)
    W = mix.W
    assert np.max(np.abs(W @ np.ones(20) - 1.0)) <= 1e-12
    assert np.max(np.abs(W - W.T)) <= 1e-14
    assert mix.min_eigenvalue() >= 1 - 2 * c - 1e-10
    lap = np.eye(20) - W
    assert np.max(np.abs(lap.sum(axis=0))) <= 1e-12
    assert np.linalg.eigvalsh(lap)[0] >= -1e-12


def test_gossip_matches_dense_product(er_mix):
    X = np.random.default_rng(4).standard_normal((5, 7))
    np.testing.assert_allclose(er_mix.gossip(X), er_mix.W @ X, atol=1e-14)
    np.testing.assert_allclose(er_mix.laplacian(X), X - er_mix.W @ X, atol=1e-14)


def test_sqrt_operators(er_mix):
    L, M = sqrt_operators(er_mix)
    np.testing.assert_allclose(M @ M, er_mix.W, atol=1e-12)
    np.testing.assert_allclose(L @ L, np.eye(5) - er_mix.W, atol=1e-12)
    np.testing.assert_allclose(L, L.T, atol=1e-15)


def test_sqrt_operators_single_agent():
    L, M = sqrt_operators(mixing_matrix(np.ones((1, 1)), 1 / 3))
    assert abs(L[0, 0]) <= 1e-7
    assert abs(M[0, 0] - 1.0) <= 1e-15


def test_closed_neighborhood():
    assert closed_neighborhood(path_graph(3), 1) == {0, 1, 2}
    assert closed_neighborhood(path_graph(3), 0) == {0, 1}
    assert closed_neighborhood(complete_graph(4), 2) == {0, 1, 2, 3}
    with pytest.raises(IndexError):
        closed_neighborhood(path_graph(3), 3)


def test_diameter():
    assert path_graph(4).diameter() == 3
    assert star_graph(5).diameter() == 2


def test_graph_file_round_trip(tmp_path):
    g = erdos_renyi(8, 0.4, 2)
    path = tmp_path / "g.txt"
    write_graph_file(g, path)
    assert path.read_text().splitlines()[0] == "m 8"
    assert read_graph_file(path) == g


def test_graph_file_errors_name_the_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("m 3\n0 1\n1 x\n")
    with pytest.raises(ParseError, match="line 3"):
        read_graph_file(path)


def test_graph_file_with_invalid_utf8_is_a_parse_error(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_bytes(b"m 3\n0 1\n1 \xff\n")
    with pytest.raises(ParseError, match="line 3"):
        read_graph_file(path)
