import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from bilinq.config import example_registry
from bilinq.core import CostSpec, PlantOracle, ltv_matrix, spectral_radius
from bilinq.errors import InvalidArgumentError, NotStabilizableError, SecondOrderConditionError
from bilinq.policy import (
    CostateMatrix,
    IterationConfig,
    discounted_stable,
    evaluate_step,
    frozen_closed_loop,
    hamiltonian_value,
    improve_gain,
    model_based_provider,
    model_free_provider,
    multistart_spread,
    oracle_riccati,
    solve_frozen,
    transversality_check,
)
from bilinq.runtime import explore

# Positive root of 0.9 X^2 - 0.8 X - 1 = 0 and the gain it implies for a = b = 1, Lambda = I.
SCALAR_X = (0.8 + math.sqrt(0.8**2 + 4 * 0.9)) / (2 * 0.9)
SCALAR_K = -0.9 * SCALAR_X / (1 + 0.9 * SCALAR_X)


def random_instance(rng, n, m, gamma=0.9):
    """Frozen pair with (sqrt(g) A, sqrt(g) B) stabilizable and a random PD penalty."""
    while True:
        A = rng.uniform(-1.5, 1.5, (n, n))
        B = rng.uniform(-1, 1, (n, m))
        M = rng.standard_normal((n + m, n + m))
        Lam = M @ M.T + 0.5 * np.eye(n + m)
        cost = CostSpec(Lam, gamma, n)
        try:
            oracle_riccati(A, B, cost)
        except NotStabilizableError:
            continue
        return A, B, cost


def scipy_gain(A, B, cost):
    """Discounted cross-weighted DARE through scipy, with sqrt(gamma) folded into A and B."""
    g = math.sqrt(cost.gamma)
    M = sla.solve_discrete_are(g * A, g * B, cost.nn, cost.mm, s=cost.nm)
    return -np.linalg.solve(cost.mm + cost.gamma * B.T @ M @ B, cost.nm.T + cost.gamma * B.T @ M @ A), M


class TestTypes:
    def test_costate_blocks(self):
        P = CostateMatrix(np.arange(9.0).reshape(3, 3), 2)
        np.testing.assert_array_equal(P.P, P.P.T)
        assert P.nn.shape == (2, 2) and P.nm.shape == (2, 1) and P.mm.shape == (1, 1)

    @pytest.mark.parametrize("kw", [dict(epsilon=0.0), dict(max_iterations=0), dict(stall_window=-1)])
    def test_iteration_config(self, kw):
        with pytest.raises(InvalidArgumentError):
            IterationConfig(**kw)


class TestImproveGain:
    def test_identity(self):
        np.testing.assert_array_equal(improve_gain(CostateMatrix(np.eye(3), 2)), np.zeros((1, 2)))

    def test_scalar(self):
        assert improve_gain(CostateMatrix([[5.0, 3.0], [3.0, 4.0]], 1))[0, 0] == pytest.approx(-0.75)

    @pytest.mark.parametrize("r", [0.0, -1.0])
    def test_second_order_violation(self, r):
        with pytest.raises(SecondOrderConditionError):
            improve_gain(CostateMatrix([[1.0, 0.5], [0.5, r]], 1))

    @given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3))
    def test_is_argmin(self, seed, n, m):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((n + m, n + m))
        P = CostateMatrix(M @ M.T + 0.1 * np.eye(n + m), n)
        K = improve_gain(P)
        x = rng.standard_normal(n)
        best = np.concatenate([x, K @ x])
        for _ in range(20):
            z = np.concatenate([x, rng.standard_normal(m) * 3])
            assert best @ P.P @ best <= z @ P.P @ z + 1e-9 * (1 + abs(z @ P.P @ z))


class TestEvaluate:
    def test_zero_map(self):
        cost = CostSpec(np.diag([1.0, 2.0, 3.0]), 0.9, 2)
        out = evaluate_step(CostateMatrix(np.eye(3) * 7, 2), np.zeros((3, 3)), cost)
        np.testing.assert_array_equal(out.P, cost.Lambda)

    def test_tiny_discount(self, rng):
        cost = CostSpec(np.eye(3), 1e-12, 2)
        out = evaluate_step(CostateMatrix(np.eye(3), 2), rng.standard_normal((3, 3)), cost)
        np.testing.assert_allclose(out.P, np.eye(3), atol=1e-10)

    def test_shape_check(self):
        with pytest.raises(InvalidArgumentError):
            evaluate_step(CostateMatrix(np.eye(3), 2), np.zeros((2, 2)), CostSpec(np.eye(3), 0.9, 2))

    def test_fixed_point_at_oracle(self, rng):
        for _ in range(20):
            n, m = rng.integers(1, 4), rng.integers(1, 3)
            A, B, cost = random_instance(rng, n, m)
            K, M = oracle_riccati(A, B, cost)
            G = np.hstack([A, B])
            # Q-matrix implied by the value matrix.
            P_star = CostateMatrix(cost.Lambda + cost.gamma * G.T @ M @ G, n)
            np.testing.assert_allclose(improve_gain(P_star), K, atol=1e-8)
            U = model_based_provider(G)(K)
            np.testing.assert_allclose(evaluate_step(P_star, U, cost).P, P_star.P,
                                       atol=1e-8 * (1 + np.abs(P_star.P).max()))


class TestSolveFrozen:
    def test_scalar_closed_form(self):
        cost = CostSpec(np.eye(2), 0.9, 1)
        rep = solve_frozen(model_based_provider([[1.0, 1.0]]), cost)
        assert rep.converged and rep.final_residual <= 1e-10
        assert rep.K[0, 0] == pytest.approx(SCALAR_K, abs=1e-9)
        assert rep.K[0, 0] == pytest.approx(-0.58836, abs=1e-4)
        # Value matrix from the Q-matrix by minimizing out u.
        P = rep.P_star
        value = P.nn - P.nm @ np.linalg.solve(P.mm, P.nm.T)
        assert value[0, 0] == pytest.approx(1 + 0.9 * SCALAR_X - (0.9 * SCALAR_X) ** 2 / (1 + 0.9 * SCALAR_X))
        assert SCALAR_X == pytest.approx(1.58840, abs=1e-5)

    def test_lyapunov_case(self, rng):
        A = rng.uniform(-1, 1, (3, 3))
        A *= 0.9 / spectral_radius(A)
        Lam = np.diag([1.0, 2.0, 0.5, 1.0])
        cost = CostSpec(Lam, 0.9, 3)
        rep = solve_frozen(model_based_provider(np.hstack([A, np.zeros((3, 1))])), cost)
        assert rep.converged
        np.testing.assert_array_equal(rep.K, 0.0)
        expected = sla.solve_discrete_lyapunov(math.sqrt(0.9) * A.T, Lam[:3, :3])
        np.testing.assert_allclose(rep.P_star.nn, expected, atol=1e-9)

    def test_agrees_with_oracles(self, rng):
        for _ in range(100):
            n, m = rng.integers(1, 4), rng.integers(1, 3)
            A, B, cost = random_instance(rng, n, m)
            rep = solve_frozen(model_based_provider(np.hstack([A, B])), cost)
            K_val, _ = oracle_riccati(A, B, cost)
            K_are, _ = scipy_gain(A, B, cost)
            assert rep.converged
            assert np.linalg.norm(rep.K - K_val) <= 1e-6 * (1 + np.linalg.norm(K_val))
            assert np.linalg.norm(K_val - K_are) <= 1e-6 * (1 + np.linalg.norm(K_are))
            assert discounted_stable(np.hstack([A, B]), rep.K, cost.gamma)

    def test_residuals_eventually_monotone(self, rng):
        A, B, cost = random_instance(rng, 3, 2)
        provider = model_based_provider(np.hstack([A, B]))
        full = solve_frozen(provider, cost)
        res = [solve_frozen(provider, cost, IterationConfig(max_iterations=k)).final_residual
               for k in range(1, full.iterations + 1)]
        tail = res[len(res) // 2 :]
        assert all(b <= a for a, b in zip(tail, tail[1:]))
        assert res[-1] <= 1e-10

    def test_iteration_cap(self):
        rep = solve_frozen(model_based_provider([[1.0, 1.0]]), CostSpec(np.eye(2), 0.9, 1),
                           IterationConfig(max_iterations=2))
        assert not rep.converged and rep.iterations == 2 and rep.final_residual > 1e-10

    def test_unstabilizable_reports_failure(self):
        rep = solve_frozen(model_based_provider([[2.0, 0.0]]), CostSpec(np.eye(2), 0.9, 1))
        assert not rep.converged and rep.iterations < 10000

    def test_converged_implies_small_residual(self, rng):
        for _ in range(10):
            A, B, cost = random_instance(rng, 2, 1)
            rep = solve_frozen(model_based_provider(np.hstack([A, B])), cost)
            assert rep.converged == (rep.final_residual <= 1e-10)

    def test_unique_fixed_point(self, rng):
        A, B, cost = random_instance(rng, 3, 2)
        assert multistart_spread(model_based_provider(np.hstack([A, B])), cost, starts=5, scale=3.0) <= 1e-8

    def test_hydraulic_at_end_of_exploration(self):
        sys, cfg = example_registry("hydraulic")
        _, dm, x, _ = explore(PlantOracle(sys), cfg)
        dm.freeze()
        rep = solve_frozen(model_free_provider(dm, x), cfg.cost, IterationConfig(1e-10, 10000))
        assert rep.converged


class TestOracle:
    def test_scalar(self):
        K, M = oracle_riccati([[1.0]], [[1.0]], CostSpec(np.eye(2), 0.9, 1))
        assert K[0, 0] == pytest.approx(SCALAR_K, abs=1e-10)
        assert M[0, 0] == pytest.approx(1 + 0.9 * SCALAR_X - (0.9 * SCALAR_X) ** 2 / (1 + 0.9 * SCALAR_X))

    def test_no_input_no_coupling(self):
        K, _ = oracle_riccati(np.diag([0.5, -0.8]), np.zeros((2, 1)), CostSpec(np.eye(3), 0.9, 2))
        np.testing.assert_array_equal(K, 0.0)

    def test_divergence(self):
        with pytest.raises(NotStabilizableError):
            oracle_riccati([[2.0]], [[0.0]], CostSpec(np.eye(2), 0.9, 1))


class TestDiagnostics:
    def test_hamiltonian_zero(self):
        cost = CostSpec(np.eye(3), 0.9, 2)
        assert hamiltonian_value(CostateMatrix(np.eye(3), 2), np.eye(3), np.zeros((3, 3)), cost) == 0.0

    def test_hamiltonian_rank_one(self, rng):
        A, B, cost = random_instance(rng, 2, 1)
        G = np.hstack([A, B])
        rep = solve_frozen(model_based_provider(G), cost)
        U = model_based_provider(G)(rep.K)
        z = rng.standard_normal(3)
        z_next = U @ z
        expected = z_next @ cost.Lambda @ z_next + cost.gamma * z_next @ rep.P_star.P @ z_next
        assert hamiltonian_value(rep.P_star, np.outer(z, z), U, cost) == pytest.approx(expected, rel=1e-12)

    def test_hamiltonian_minimal_at_fixed_point(self, rng):
        for _ in range(10):
            n, m = rng.integers(1, 4), rng.integers(1, 3)
            A, B, cost = random_instance(rng, n, m)
            G = np.hstack([A, B])
            provider = model_based_provider(G)
            rep = solve_frozen(provider, cost)
            z = rng.standard_normal(n + m)
            S_prev = np.outer(z, z) + 0.1 * np.eye(n + m)
            S = provider(rep.K) @ S_prev @ provider(rep.K).T
            h_star = hamiltonian_value(rep.P_star, S_prev, provider(rep.K), cost, S=S)
            for _ in range(100):
                dK = rng.standard_normal((m, n)) * rng.choice([1e-4, 1e-2, 1.0])
                h = hamiltonian_value(rep.P_star, S_prev, provider(rep.K + dK), cost, S=S)
                assert h_star <= h + 1e-9 * abs(h)

    def test_transversality(self, rng):
        P = CostateMatrix(np.diag([1.0, 2.0, 3.0]), 2)
        assert transversality_check(P, np.zeros((3, 3)))
        assert transversality_check(P, np.diag([4.0, 0.0, 1.0]))
        assert not transversality_check(CostateMatrix(np.diag([-1.0, 1.0]), 1), np.diag([1.0, 0.0]))

    def test_frozen_closed_loop(self):
        G = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
        K = np.array([[1.0, 1.0]])
        np.testing.assert_array_equal(frozen_closed_loop(G, K), [[1.0, 2.0], [1.0, 2.0]])

    def test_model_free_equals_model_based_on_hydraulic(self):
        sys, cfg = example_registry("hydraulic")
        _, dm, x, _ = explore(PlantOracle(sys), cfg)
        dm.freeze()
        for state in (x, np.array([1.0, 1.0, 1.0]), np.array([-3.0, 0.2, 10.0])):
            free = solve_frozen(model_free_provider(dm, state), cfg.cost).K
            based = solve_frozen(model_based_provider(ltv_matrix(sys, state)), cfg.cost).K
            assert np.linalg.norm(free - based) <= 1e-6 * np.linalg.norm(based)
