import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import rotavg.graph as graph_mod
from rotavg.errors import DuplicateEdgeError, InvalidArgumentError
from rotavg.graph import (
    MeasurementGraph,
    build_pairwise_matrix,
    degree_matrix,
    fiedler_value,
    is_connected,
    lambda_noise_free,
    matvec,
)
from rotavg.so3 import random_rotations

from conftest import MATRIX_CASES, cycle_edges, dataset_path, noise_free_graph, rot_z

seeds = st.integers(0, 2**32 - 1)


def random_graph(seed, n_max=30):
    """Random (possibly disconnected) graph with Haar-random measurements."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < rng.uniform(0.1, 0.8)
    meas = random_rotations(rng, int(keep.sum()))
    return MeasurementGraph(n, iu[keep], ju[keep], meas), rng


def dense_oracle(g, dual=None):
    """Pairwise matrix assembled entry by entry, no vectorization."""
    n = g.n
    out = np.zeros((3 * n, 3 * n))
    for a in range(n):
        out[3 * a : 3 * a + 3, 3 * a : 3 * a + 3] = np.eye(3)
    for a, b, r in zip(g.i, g.j, g.measurements):
        out[3 * a : 3 * a + 3, 3 * b : 3 * b + 3] = r
        out[3 * b : 3 * b + 3, 3 * a : 3 * a + 3] = r.T
    if dual is not None:
        lam = np.zeros_like(out)
        for a in range(n):
            lam[3 * a : 3 * a + 3, 3 * a : 3 * a + 3] = dual[a]
        out = lam - out
    return out


class TestMeasurementGraph:
    def test_reverse_edges_are_transposed(self):
        r = rot_z(0.4)
        g = MeasurementGraph.from_edges(3, [(2, 0, r), (0, 1, np.eye(3))])
        k = int(np.flatnonzero((g.i == 0) & (g.j == 2))[0])
        assert np.allclose(g.measurements[k], r.T, atol=1e-15)

    def test_rejects_self_loop_and_bad_ids(self):
        with pytest.raises(InvalidArgumentError):
            MeasurementGraph.from_edges(3, [(1, 1, np.eye(3))])
        with pytest.raises(InvalidArgumentError):
            MeasurementGraph.from_edges(3, [(0, 3, np.eye(3))])

    def test_duplicate_edge(self):
        with pytest.raises(DuplicateEdgeError):
            MeasurementGraph.from_edges(3, [(0, 1, np.eye(3)), (1, 0, np.eye(3))])

    def test_near_rotation_is_reprojected(self):
        m = rot_z(0.2) + 1e-8 * np.ones((3, 3))
        g = MeasurementGraph.from_edges(2, [(0, 1, m)])
        r = g.measurements[0]
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-14)

    def test_far_from_rotation_rejected(self):
        with pytest.raises(InvalidArgumentError):
            MeasurementGraph.from_edges(2, [(0, 1, rot_z(0.2) + 1e-3)])
        with pytest.raises(InvalidArgumentError):
            MeasurementGraph.from_edges(2, [(0, 1, np.diag([1.0, 1.0, -1.0]))])


class TestPairwiseMatrix:
    def test_no_edges_is_identity(self):
        g = MeasurementGraph.from_edges(2, [])
        assert np.array_equal(build_pairwise_matrix(g).to_dense(), np.eye(6))

    def test_identity_triangle(self):
        g = MeasurementGraph.from_edges(3, [(0, 1, np.eye(3)), (1, 2, np.eye(3)), (0, 2, np.eye(3))])
        assert np.array_equal(build_pairwise_matrix(g).to_dense(), np.kron(np.ones((3, 3)), np.eye(3)))

    def test_duplicate_rejected(self):
        g = MeasurementGraph(3, np.array([0, 0]), np.array([1, 1]), np.stack([np.eye(3)] * 2))
        with pytest.raises(DuplicateEdgeError):
            build_pairwise_matrix(g)

    def test_block_lookup(self):
        r = rot_z(0.3)
        m = build_pairwise_matrix(MeasurementGraph.from_edges(4, [(1, 3, r)]))
        assert np.array_equal(m.block(1, 3), r)
        assert np.array_equal(m.block(3, 1), r.T)
        assert m.block(0, 2) is None
        assert np.array_equal(m.block(2, 2), np.eye(3))

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_structure(self, seed):
        g, _ = random_graph(seed)
        m = build_pairwise_matrix(g)
        d = m.to_dense()
        assert m.stored_blocks == g.m
        assert np.array_equal(d, d.T)
        assert np.array_equal(d, dense_oracle(g))
        assert np.array_equal(m.to_sparse().toarray(), d)

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_sparse_dual_form(self, seed):
        g, rng = random_graph(seed)
        dual = rng.normal(size=(g.n, 3, 3))
        dual = dual + np.transpose(dual, (0, 2, 1))
        m = build_pairwise_matrix(g)
        assert np.allclose(m.to_sparse(dual).toarray(), dense_oracle(g, dual), atol=1e-15)


class TestDegreesAndMultiplier:
    def test_cycle_degrees(self):
        g = MeasurementGraph.from_edges(5, [(a, b, np.eye(3)) for a, b in cycle_edges(5)])
        assert np.array_equal(degree_matrix(g), [2] * 5)
        assert np.array_equal(lambda_noise_free(g), np.broadcast_to(3 * np.eye(3), (5, 3, 3)))

    def test_star(self):
        g = MeasurementGraph.from_edges(5, [(0, k, np.eye(3)) for k in range(1, 5)])
        assert np.array_equal(degree_matrix(g), [4, 1, 1, 1, 1])
        assert np.array_equal(lambda_noise_free(g)[0], 5 * np.eye(3))

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_noise_free_kernel(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 25))
        truth = random_rotations(rng, n)
        edges = cycle_edges(n) + [(a, b) for a, b in zip(*np.triu_indices(n, 2)) if rng.random() < 0.2 and b - a != n - 1]
        g = noise_free_graph(truth, edges)
        big = dense_oracle(g, lambda_noise_free(g))
        assert np.abs(big @ truth.reshape(-1, 3)).max() <= 1e-12


class TestMatvec:
    def test_empty_graph_is_identity(self):
        m = build_pairwise_matrix(MeasurementGraph.from_edges(4, []))
        v = np.arange(12.0)
        assert np.array_equal(matvec(m, v), v)

    def test_dimension_mismatch(self):
        m = build_pairwise_matrix(MeasurementGraph.from_edges(4, []))
        with pytest.raises(InvalidArgumentError):
            matvec(m, np.ones(11))

    def test_noise_free_cycle_annihilates_truth(self):
        truth = np.stack([rot_z(0.5 * k) for k in range(4)])
        g = noise_free_graph(truth, cycle_edges(4))
        m = build_pairwise_matrix(g)
        assert np.abs(matvec(m, truth.reshape(-1, 3), lambda_noise_free(g))).max() <= 1e-14

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_matches_dense(self, seed):
        g, rng = random_graph(seed, n_max=50)
        m = build_pairwise_matrix(g)
        d = dense_oracle(g)
        v = rng.normal(size=3 * g.n)
        block = rng.normal(size=(3 * g.n, 3))
        scale = 1.0 + np.abs(d @ v).max()
        assert np.abs(matvec(m, v) - d @ v).max() <= 1e-12 * scale
        assert np.allclose(matvec(m, block), d @ block, rtol=1e-12, atol=1e-12)
        dual = rng.normal(size=(g.n, 3, 3))
        dual = dual + np.transpose(dual, (0, 2, 1))
        assert np.allclose(matvec(m, block, dual), dense_oracle(g, dual) @ block, rtol=1e-12, atol=1e-12)


class TestConnectivity:
    def test_small_cases(self):
        assert is_connected(MeasurementGraph.from_edges(1, []))
        assert not is_connected(MeasurementGraph.from_edges(2, []))
        assert is_connected(MeasurementGraph.from_edges(4, [(a, b, np.eye(3)) for a, b in cycle_edges(4)]))

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_agrees_with_networkx(self, seed):
        g, _ = random_graph(seed)
        ref = nx.Graph()
        ref.add_nodes_from(range(g.n))
        ref.add_edges_from(zip(g.i.tolist(), g.j.tolist()))
        assert is_connected(g) == nx.is_connected(ref)


class TestFiedler:
    def test_complete_graph(self):
        g = MeasurementGraph.from_edges(4, [(a, b, np.eye(3)) for a in range(4) for b in range(a + 1, 4)])
        assert abs(fiedler_value(g) - 4.0) < 1e-12

    def test_single_edge(self):
        assert abs(fiedler_value(MeasurementGraph.from_edges(2, [(0, 1, np.eye(3))])) - 2.0) < 1e-12

    @pytest.mark.parametrize("n", [3, 7, 50])
    def test_cycle_formula(self, n):
        g = MeasurementGraph.from_edges(n, [(a, b, np.eye(3)) for a, b in cycle_edges(n)])
        assert abs(fiedler_value(g) - (2 - 2 * np.cos(2 * np.pi / n))) < 1e-12

    def test_sparse_path(self, monkeypatch):
        monkeypatch.setattr(graph_mod, "DENSE_FIEDLER_LIMIT", 10)
        n = 50
        g = MeasurementGraph.from_edges(n, [(a, b, np.eye(3)) for a, b in cycle_edges(n)])
        assert abs(fiedler_value(g) - (2 - 2 * np.cos(2 * np.pi / n))) < 1e-10

    def test_disconnected_is_zero(self):
        assert fiedler_value(MeasurementGraph.from_edges(4, [(0, 1, np.eye(3)), (2, 3, np.eye(3))])) == 0.0

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_agrees_with_networkx(self, seed):
        g, _ = random_graph(seed)
        ref = nx.Graph()
        ref.add_nodes_from(range(g.n))
        ref.add_edges_from(zip(g.i.tolist(), g.j.tolist()))
        want = nx.algebraic_connectivity(ref, method="tracemin_lu", tol=1e-12) if nx.is_connected(ref) else 0.0
        assert abs(fiedler_value(g) - want) < 1e-7


def test_smallgrid_degree_sum():
    path = dataset_path("smallGrid3D.g2o", "SmallGrid.g2o", "smallgrid.g2o")
    if path is None:
        pytest.skip("SmallGrid dataset not available (set ROTAVG_DATA_DIR)")
    from rotavg.g2o import parse_g2o

    g = parse_g2o(path).graph
    assert int(degree_matrix(g).sum()) == 2 * g.m
