import math

import numpy as np
import pytest
from scipy.linalg import expm

from nashseek import digraph as dg
from nashseek import dynamics as dy
from nashseek import game as gm
from nashseek.errors import AssumptionViolation, DegenerateEstimate, NonFiniteState, ValidationError
from nashseek.integrator import IntegrationConfig, consensus_error, integrate, rk4_step


class TestRK4Step:
    def test_scalar_decay(self):
        h = 0.1
        x1 = rk4_step(lambda x: -x, np.array([1.0]), h)[0]
        taylor = 1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24
        assert x1 == pytest.approx(taylor, abs=1e-15)
        assert x1 == pytest.approx(0.9048375, abs=1e-7)
        assert abs(x1 - math.exp(-h)) <= h**5 / 120

    def test_zero_field(self, rng):
        x = rng.normal(size=7)
        np.testing.assert_array_equal(rk4_step(lambda v: np.zeros_like(v), x, 0.3), x)

    def test_linear_is_taylor_polynomial(self, rng):
        A = rng.normal(size=(4, 4))
        x = rng.normal(size=4)
        h = 0.05
        hA = h * A
        P = np.eye(4) + hA + hA @ hA / 2 + hA @ hA @ hA / 6 + hA @ hA @ hA @ hA / 24
        np.testing.assert_allclose(rk4_step(lambda v: A @ v, x, h), P @ x, atol=1e-14)

    def test_non_finite(self):
        with pytest.raises(NonFiniteState):
            rk4_step(lambda v: v * 1e308, np.array([1e10]), 1.0)


class TestIntegrationConfig:
    def test_validation(self):
        with pytest.raises(ValidationError):
            IntegrationConfig(step=0.0)
        with pytest.raises(ValidationError):
            IntegrationConfig(step=1.0, horizon=0.5)
        with pytest.raises(ValidationError):
            IntegrationConfig(record_every=0)
        with pytest.raises(ValidationError):
            IntegrationConfig(stop_tol=-1)
        with pytest.raises(ValidationError):
            IntegrationConfig(step=0.3, horizon=1.0).n_steps


class TestIntegrate:
    def test_snapshot_count(self, pair_undirected, g2):
        spec = dy.AlgorithmSpec("balanced", 7.0)
        traj = integrate(spec, pair_undirected, g2, dy.initial_state(2, adaptive=False),
                         IntegrationConfig(step=0.5, horizon=1.0))
        np.testing.assert_array_equal(traj.times, [0.0, 0.5, 1.0])
        assert traj.stop_reason == "horizon"

    def test_record_every_keeps_final(self, pair_undirected, g2):
        spec = dy.AlgorithmSpec("balanced", 7.0)
        traj = integrate(spec, pair_undirected, g2, dy.initial_state(2, adaptive=False),
                         IntegrationConfig(step=0.1, horizon=1.0, record_every=3))
        np.testing.assert_allclose(traj.times, [0, 0.3, 0.6, 0.9, 1.0])

    def test_time_grid_is_exact(self, pair_undirected, g2):
        h = 1e-3
        spec = dy.AlgorithmSpec("balanced", 7.0)
        traj = integrate(spec, pair_undirected, g2, dy.initial_state(2, adaptive=False),
                         IntegrationConfig(step=h, horizon=2.0, record_every=7))
        k = np.arange(len(traj.times) - 1) * 7
        np.testing.assert_array_equal(traj.times[:-1], k * h)
        assert np.all(np.diff(traj.times) > 0)

    def test_pure_consensus(self):
        g = dg.complete(4)
        rng = np.random.default_rng(3)
        Z0 = rng.normal(size=(4, 4))
        traj = integrate(dy.AlgorithmSpec("balanced", 1.0), g, gm.zero_game(4),
                         dy.initial_state(4, Z0, adaptive=False), IntegrationConfig(1e-3, 20.0, 1000))
        Zt = traj.final.Z
        assert consensus_error(Zt) <= 1e-8
        # Balanced graph: every column converges to its initial average.
        np.testing.assert_allclose(Zt, np.outer(np.ones(4), Z0.mean(axis=0)), atol=1e-8)

    def test_matches_matrix_exponential(self, pair_undirected, g2):
        # The balanced dynamics are affine for quadratic games; compare with
        # the exact flow of the assembled system.
        from test_dynamics import assembled_system

        alpha, T = 7.0, 2.0
        M, c = assembled_system(dg.laplacian(pair_undirected), g2, alpha)
        x0 = dy.default_initial_z(2).ravel()
        xs = np.tile(gm.nash_equilibrium(g2), 2)
        exact = xs + expm(M * T) @ (x0 - xs)
        traj = integrate(dy.AlgorithmSpec("balanced", alpha), pair_undirected, g2,
                         dy.initial_state(2, adaptive=False), IntegrationConfig(1e-3, T, 2000))
        np.testing.assert_allclose(traj.final.Z.ravel(), exact, atol=1e-11)

    def test_converges_with_large_gain(self, pair_undirected, g2):
        # Slowest mode tends to lambda_min(G)/n = 0.5 as alpha grows; at
        # alpha = 7 the error at T = 30 is still about 2e-6 from the default start.
        traj = integrate(dy.AlgorithmSpec("balanced", 20.0), pair_undirected, g2,
                         dy.initial_state(2, adaptive=False), IntegrationConfig(1e-3, 30.0, 1000))
        err = np.linalg.norm(traj.final.Z - np.array([0.0, 2.0]), axis=1).max()
        assert err <= 1e-6

    def test_early_stop(self, pair_undirected, g2):
        traj = integrate(dy.AlgorithmSpec("balanced", 7.0), pair_undirected, g2,
                         dy.initial_state(2, adaptive=False),
                         IntegrationConfig(1e-3, 100.0, 1000, stop_tol=1e-4))
        assert traj.stop_reason == "tolerance"
        assert traj.times[-1] < 100.0
        Z = traj.final.Z
        assert consensus_error(Z) < 1e-4
        assert np.max(np.abs(gm.extended_pseudogradient(g2, Z))) < 1e-4

    def test_deterministic(self, pair_unbalanced, g2):
        args = (dy.AlgorithmSpec("adaptive", 10.0), pair_unbalanced, g2, dy.initial_state(2),
                IntegrationConfig(1e-3, 2.0, 10))
        a, b = integrate(*args), integrate(*args)
        np.testing.assert_array_equal(a.Z, b.Z)
        np.testing.assert_array_equal(a.Xi, b.Xi)

    def test_balanced_variant_needs_balance(self, pair_unbalanced, g2):
        with pytest.raises(AssumptionViolation) as exc:
            integrate(dy.AlgorithmSpec("balanced", 7.0), pair_unbalanced, g2,
                      dy.initial_state(2, adaptive=False), IntegrationConfig(1e-3, 1.0))
        assert exc.value.assumption == 5

    def test_dimension_mismatch(self, ring3, g2):
        with pytest.raises(ValidationError):
            integrate(dy.AlgorithmSpec("balanced", 7.0), ring3, g2,
                      dy.initial_state(2, adaptive=False), IntegrationConfig(1e-3, 1.0))

    def test_adaptive_needs_estimator(self, pair_unbalanced, g2):
        with pytest.raises(ValidationError):
            integrate(dy.AlgorithmSpec("adaptive", 7.0), pair_unbalanced, g2,
                      dy.initial_state(2, adaptive=False), IntegrationConfig(1e-3, 1.0))

    def test_degenerate_estimate_returns_partial(self, pair_unbalanced, g2):
        # A step far beyond the stability limit drives Xi_ii negative.
        traj = integrate(dy.AlgorithmSpec("adaptive", 1.0), pair_unbalanced, g2,
                         dy.initial_state(2), IntegrationConfig(step=2.0, horizon=20.0))
        assert traj.stop_reason == "error"
        assert isinstance(traj.error, DegenerateEstimate)
        assert all(np.all(np.diagonal(s.Xi) > 0) for s in traj.states)

    def test_non_finite_returns_partial(self, pair_undirected, g2):
        traj = integrate(dy.AlgorithmSpec("balanced", 1e3), pair_undirected, g2,
                         dy.initial_state(2, adaptive=False), IntegrationConfig(step=1.0, horizon=400.0))
        assert traj.stop_reason == "error"
        assert isinstance(traj.error, NonFiniteState)
        assert np.all(np.isfinite(traj.final.Z))


def final_state(h, T, alpha=7.0):
    traj = integrate(dy.AlgorithmSpec("balanced", alpha), dg.complete(2), gm.g2(),
                     dy.initial_state(2, adaptive=False), IntegrationConfig(h, T, round(T / h)))
    return traj.final.Z


def test_fourth_order_on_short_horizon():
    # Differences between successive halvings shrink by 2**4 while the
    # discretization error is still well above rounding.
    a, b, c = (final_state(h, 1.0) for h in (4e-3, 2e-3, 1e-3))
    ratio = np.max(np.abs(a - b)) / np.max(np.abs(b - c))
    assert 12 <= ratio <= 20
