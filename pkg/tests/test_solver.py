import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rotavg.cycle import solve_cycle
from rotavg.errors import InvalidArgumentError
from rotavg.graph import MeasurementGraph, build_pairwise_matrix, lambda_noise_free
from rotavg.so3 import geodesic_distance, is_rotation, random_rotations
from rotavg.solver import (
    SolverConfig,
    _gauge_and_project,
    certify,
    certify_solution,
    cost,
    dual_update,
    kkt_multiplier,
    primal_update,
    principal_angle_cosine,
    solve,
)
from rotavg.synth import GraphSpec, generate_graph

from conftest import MATRIX_CASES, cycle_edges, noise_free_graph, random_cycle, rot_x, rot_z

seeds = st.integers(0, 2**32 - 1)


def dense_cost(g, r):
    """Cost from the dense matrix.

    Tr(R^T R~ R) = 3n + 2 * sum_e tr(R~_ij R_j R_i^T), so the cost is -Tr(R^T R~ R).
    """
    flat = r.reshape(-1, 3)
    return float(-np.trace(flat.T @ build_pairwise_matrix(g).to_dense() @ flat))


def random_noisy_graph(seed, n_max=40):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, n_max + 1))
    sigma = float(rng.uniform(0.0, 0.3))
    g, truth, _ = generate_graph(GraphSpec(n, float(rng.uniform(0.2, 0.8)), int(rng.integers(2**31)), sigma))
    return g, truth, rng


class TestCost:
    def test_noise_free_cycle(self):
        truth = np.stack([rot_z(0.2 * k) for k in range(10)])
        g = noise_free_graph(truth, cycle_edges(10))
        assert abs(cost(g, truth) - (-90.0)) < 1e-12

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_matches_dense_trace(self, seed):
        g, _, rng = random_noisy_graph(seed)
        r = random_rotations(rng, g.n)
        assert abs(cost(g, r) - dense_cost(g, r)) <= 1e-10 * (1 + abs(cost(g, r)))

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_lower_bound_and_gauge_invariance(self, seed):
        g, _, rng = random_noisy_graph(seed)
        r = random_rotations(rng, g.n)
        f = cost(g, r)
        assert f >= -3 * g.n - 6 * g.m - 1e-9
        q = random_rotations(rng, 1)[0]
        assert abs(cost(g, r @ q) - f) <= 1e-10 * (1 + abs(f))


class TestDualUpdate:
    def test_noise_free_gives_degree_multiplier(self):
        truth = random_rotations(np.random.default_rng(1), 6)
        g = noise_free_graph(truth, cycle_edges(6) + [(0, 3), (1, 4)])
        assert np.allclose(dual_update(g, truth), lambda_noise_free(g), atol=1e-13)

    def test_single_edge(self):
        m = rot_x(0.4)
        g = MeasurementGraph.from_edges(2, [(0, 1, m)])
        lam = dual_update(g, np.stack([np.eye(3), np.eye(3)]))
        want = np.eye(3) + 0.5 * (m + m.T)
        assert np.allclose(lam[0], want, atol=1e-15)
        assert np.allclose(lam[1], want, atol=1e-15)

    def test_kkt_multiplier_is_dual_update(self):
        g, truth, _ = random_noisy_graph(3)
        assert np.array_equal(kkt_multiplier(g, truth), dual_update(g, truth))

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_symmetric_blocks(self, seed):
        g, _, rng = random_noisy_graph(seed)
        lam = dual_update(g, random_rotations(rng, g.n))
        assert np.allclose(lam, np.transpose(lam, (0, 2, 1)), atol=0)


class TestPrimalUpdate:
    def test_noise_free_recovers_truth(self):
        truth = random_rotations(np.random.default_rng(2), 8)
        truth = truth @ truth[0].T
        g = noise_free_graph(truth, cycle_edges(8))
        r = primal_update(build_pairwise_matrix(g), lambda_noise_free(g))
        assert np.array_equal(r[0], np.eye(3))
        assert max(geodesic_distance(a, b) for a, b in zip(r, truth)) < 1e-8

    def test_single_node(self):
        g = MeasurementGraph.from_edges(1, [])
        r = primal_update(build_pairwise_matrix(g), lambda_noise_free(g))
        assert np.array_equal(r, np.eye(3)[None])

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_outputs_rotations(self, seed):
        g, _, rng = random_noisy_graph(seed)
        lam = lambda_noise_free(g) + rng.uniform(-0.5, 0.5) * np.eye(3)
        r = primal_update(build_pairwise_matrix(g), lam)
        assert np.array_equal(r[0], np.eye(3))
        assert all(is_rotation(x, 1e-10) for x in r)

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_iterates_stay_feasible(self, seed):
        # Anchor, feasibility and dual symmetry after every step of the loop.
        g, _, _ = random_noisy_graph(seed, n_max=25)
        m = build_pairwise_matrix(g)
        lam = lambda_noise_free(g)
        for _ in range(4):
            r = primal_update(m, lam)
            assert np.array_equal(r[0], np.eye(3))
            assert all(is_rotation(x, 1e-10) for x in r)
            lam = dual_update(g, r)
            assert np.abs(lam - np.transpose(lam, (0, 2, 1))).max() <= 1e-14

    def test_gauge_fallback_on_singular_first_block(self):
        rng = np.random.default_rng(4)
        x = random_rotations(rng, 5)
        x[0] = x[0] @ np.diag([1.0, 1.0, 1e-12])
        rots, fallback = _gauge_and_project(x.reshape(-1, 3), 5)
        assert fallback
        assert np.array_equal(rots[0], np.eye(3))
        assert all(is_rotation(r, 1e-10) for r in rots)


class TestCertify:
    def test_noise_free(self):
        truth = random_rotations(np.random.default_rng(5), 7)
        g = noise_free_graph(truth, cycle_edges(7) + [(0, 2)])
        cert = certify_solution(g, truth)
        assert cert.certified
        assert abs(cert.min_eig) < 1e-10
        assert cert.stationarity_residual < 1e-12

    def test_suboptimal_stationary_point_fails(self):
        from rotavg.cycle import stationary_point

        p = random_cycle(12, 0.3, 1)
        s = stationary_point(p, 1)
        cert = certify_solution(p.to_graph(), s.rotations)
        # Stationary, yet not a global optimum: the multiplier is indefinite.
        assert cert.stationarity_residual < 1e-10
        assert cert.min_eig < -1e-6
        assert not cert.certified

    def test_perturbed_solution_fails(self):
        p = random_cycle(15, 0.2, 3)
        r = solve_cycle(p).rotations.copy()
        r[4] = random_rotations(np.random.default_rng(0), 1)[0]
        assert not certify_solution(p.to_graph(), r).certified

    def test_shape_check(self):
        g, truth, _ = random_noisy_graph(0)
        with pytest.raises(InvalidArgumentError):
            certify(build_pairwise_matrix(g), truth, np.zeros((1, 3, 3)), 1e-8)


class TestSolve:
    def test_noise_free_cycle_one_iteration(self):
        truth = random_rotations(np.random.default_rng(6), 10)
        truth = truth @ truth[0].T
        g = noise_free_graph(truth, cycle_edges(10))
        rep = solve(g, SolverConfig(relative_epsilon=True))
        assert rep.iterations == 1
        assert rep.certified
        assert abs(rep.final_cost - (-90.0)) < 1e-9
        assert max(geodesic_distance(a, b) for a, b in zip(rep.rotations, truth)) < 1e-8

    def test_matches_closed_form_on_cycle(self):
        p = random_cycle(20, 0.2, 11)
        rep = solve(p.to_graph())
        assert rep.certified
        assert abs(rep.final_cost - solve_cycle(p).cost) < 1e-6

    def test_rejects_disconnected_and_tiny(self):
        with pytest.raises(InvalidArgumentError):
            solve(MeasurementGraph.from_edges(4, [(0, 1, np.eye(3)), (2, 3, np.eye(3))]))
        with pytest.raises(InvalidArgumentError):
            solve(MeasurementGraph.from_edges(1, []))

    def test_iteration_cap_reports_uncertified(self):
        g, _, _ = generate_graph(GraphSpec(40, 0.2, 8, 0.3))
        rep = solve(g, SolverConfig(max_iterations=1))
        assert rep.iterations == 1
        assert not rep.converged
        assert not rep.certified

    def test_trace_format(self):
        g, _, _ = generate_graph(GraphSpec(20, 0.4, 2, 0.1))
        rep = solve(g)
        buf = io.StringIO()
        rep.write_trace(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "iteration,min_abs_lambda,cost,wall_ms"
        assert len(lines) == rep.iterations + 1
        assert [int(x.split(",")[0]) for x in lines[1:]] == list(range(1, rep.iterations + 1))

    @settings(max_examples=MATRIX_CASES)
    @given(seeds)
    def test_certificate_soundness(self, seed):
        g, _, _ = random_noisy_graph(seed, n_max=30)
        rep = solve(g)
        assert np.array_equal(rep.rotations[0], np.eye(3))
        assert all(is_rotation(x, 1e-10) for x in rep.rotations)
        if rep.certified:
            # Independent check from the returned rotations alone.
            cert = certify_solution(g, rep.rotations, method="dense")
            assert cert.certified
            assert cert.min_eig >= -1e-8
            # A certified point is at least as good as any random candidate.
            rng = np.random.default_rng(seed)
            assert rep.final_cost <= cost(g, random_rotations(rng, g.n)) + 1e-9
        assert rep.cost_history[-1] <= rep.cost_history[0] + 1e-9
        assert rep.min_eigenvalue_history[-1] <= rep.min_eigenvalue_history[0]


class TestPrincipalAngle:
    def test_identical_and_orthogonal(self):
        u = np.eye(9)[:, :3]
        w = np.eye(9)[:, 3:6]
        assert principal_angle_cosine(u, u) == 1.0
        assert principal_angle_cosine(u, w) == 0.0

    def test_basis_rotation_invariance(self):
        u = np.linalg.qr(np.random.default_rng(0).normal(size=(12, 3)))[0]
        q = random_rotations(np.random.default_rng(1), 1)[0]
        assert abs(principal_angle_cosine(u @ q, u) - 1.0) < 1e-12

    def test_rejects_non_orthonormal(self):
        with pytest.raises(InvalidArgumentError):
            principal_angle_cosine(2 * np.eye(6)[:, :3], np.eye(6)[:, :3])
