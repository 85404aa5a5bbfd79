import math

import numpy as np
import pytest

from nashseek import game as gm
from nashseek.errors import AssumptionViolation, ValidationError


class Cubic(gm.Game):
    """Non-quadratic game used to exercise the generic code paths."""

    n = 2

    def cost(self, i, z):
        z = np.asarray(z)
        return z[i] ** 4 / 4 + z[i] ** 2 + z[i] * z[1 - i] - (i + 1) * z[i]

    def partial_gradient(self, i, z):
        z = np.asarray(z)
        return z[i] ** 3 + 2 * z[i] + z[1 - i] - (i + 1)


class TestQuadraticGame:
    def test_g2_pseudogradient_matrix(self, g2):
        np.testing.assert_array_equal(g2.jacobian, [[2, 1], [1, 2]])
        np.testing.assert_array_equal(g2.offset, [-2, -4])

    def test_rejects_asymmetric_q(self):
        with pytest.raises(ValidationError):
            gm.QuadraticGame([[[1, 1], [0, 1]], [[1, 0], [0, 1]]], np.zeros((2, 2)))

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValidationError):
            gm.QuadraticGame(np.zeros((2, 2, 2)), np.zeros(2))

    def test_from_pseudogradient_rows(self):
        G = np.array([[2.0, 0.5, -0.3], [0.4, 2.5, 0.6], [-0.2, 0.5, 3.0]])
        game = gm.QuadraticGame.from_pseudogradient(G, [1, 2, 3])
        np.testing.assert_array_equal(game.jacobian, G)
        for i in range(3):
            np.testing.assert_array_equal(game.Q[i], game.Q[i].T)

    def test_validate_own_convexity(self):
        game = gm.QuadraticGame.from_pseudogradient([[0.0, 1.0], [-1.0, 1.0]], [0, 0])
        with pytest.raises(AssumptionViolation) as exc:
            game.validate()
        assert exc.value.assumption == 1


class TestPseudogradient:
    @pytest.mark.parametrize(
        "z, expected", [((0, 2), (0, 0)), ((0, 0), (-2, -4)), ((1, 1), (1, -1))]
    )
    def test_g2(self, g2, z, expected):
        np.testing.assert_allclose(gm.pseudogradient(g2, z), expected, atol=0)

    def test_rejects_non_finite(self, g2):
        with pytest.raises(ValidationError):
            gm.pseudogradient(g2, [np.nan, 0.0])
        with pytest.raises(ValidationError):
            gm.extended_pseudogradient(g2, [[np.inf, 0.0], [0.0, 0.0]])

    def test_generic_path_matches_partial_gradients(self):
        z = np.array([0.3, -1.2])
        np.testing.assert_allclose(
            gm.pseudogradient(Cubic(), z), [Cubic().partial_gradient(i, z) for i in range(2)]
        )


class TestExtendedPseudogradient:
    def test_consensus_at_ne(self, g2):
        np.testing.assert_array_equal(gm.extended_pseudogradient(g2, [[0, 2], [0, 2]]), [0, 0])

    def test_rowwise(self, g2):
        np.testing.assert_array_equal(gm.extended_pseudogradient(g2, [[1, 1], [0, 0]]), [1, -4])

    def test_zero(self, g2):
        np.testing.assert_array_equal(gm.extended_pseudogradient(g2, np.zeros((2, 2))), [-2, -4])

    @pytest.mark.parametrize("game", [gm.g2(), gm.three_player(), Cubic()])
    def test_consensus_equals_pseudogradient(self, game, rng):
        for _ in range(50):
            y = rng.normal(size=game.n)
            np.testing.assert_array_equal(
                gm.extended_pseudogradient(game, np.outer(np.ones(game.n), y)),
                gm.pseudogradient(game, y),
            )


class TestConstants:
    def test_g2(self, g2):
        c = gm.constants(g2)
        assert c.mono_lower == pytest.approx(1.0, abs=1e-14)
        assert c.lip_F == pytest.approx(3.0, abs=1e-14)
        assert c.lip_extF == pytest.approx(math.sqrt(5), abs=1e-14)
        assert c.l == pytest.approx(3.0, abs=1e-14)

    def test_decoupled(self):
        c = gm.constants(gm.decoupled([1.0, -2.0, 0.5]))
        assert (c.mono_lower, c.lip_F, c.lip_extF, c.l) == pytest.approx((2, 2, 2, 2))

    def test_rejects_non_monotone(self):
        game = gm.QuadraticGame.from_pseudogradient([[1.0, 2.0], [0.0, 1.0]], [0, 0])
        with pytest.raises(AssumptionViolation) as exc:
            gm.constants(game)
        assert exc.value.assumption == 2

    def test_ordering(self):
        c = gm.constants(gm.three_player())
        assert 0 < c.mono_lower <= c.lip_F
        assert c.l == max(c.lip_F, c.lip_extF)


class TestNashEquilibrium:
    def test_g2(self, g2):
        np.testing.assert_allclose(gm.nash_equilibrium(g2), [0, 2], atol=1e-15)

    def test_decoupled(self):
        c = np.array([1.5, -0.25, 3.0])
        np.testing.assert_allclose(gm.nash_equilibrium(gm.decoupled(c)), c, atol=1e-15)

    def test_homogeneous(self, g2):
        np.testing.assert_array_equal(gm.nash_equilibrium(gm.QuadraticGame(g2.Q, 0 * g2.b)), [0, 0])

    @pytest.mark.parametrize("game", [gm.g2(), gm.three_player()])
    def test_residual(self, game):
        z = gm.nash_equilibrium(game)
        assert np.max(np.abs(gm.pseudogradient(game, z))) <= 1e-10

    def test_unilateral_deviation_does_not_help(self):
        # Definition check by brute force on a grid of deviations.
        game = gm.three_player()
        z = gm.nash_equilibrium(game)
        for i in range(game.n):
            base = game.cost(i, z)
            for d in np.linspace(-1, 1, 41):
                dev = z.copy()
                dev[i] += d
                assert game.cost(i, dev) >= base - 1e-12

    def test_singular(self):
        game = gm.QuadraticGame(np.zeros((2, 2, 2)), np.zeros((2, 2)))
        with pytest.raises(AssumptionViolation):
            gm.nash_equilibrium(game)


class TestFiniteDifference:
    def test_g2(self, g2):
        assert gm.finite_difference_check(g2, [0.3, -1.2]) <= 1e-6

    def test_at_equilibrium(self, g2):
        assert gm.finite_difference_check(g2, [0.0, 2.0]) <= 1e-8

    def test_decoupled(self, rng):
        game = gm.decoupled([1.0, 2.0, 3.0])
        for _ in range(20):
            assert gm.finite_difference_check(game, rng.normal(size=3)) <= 1e-8

    def test_catches_wrong_gradient(self, g2):
        class Broken(gm.QuadraticGame):
            def partial_gradient(self, i, z):
                return super().partial_gradient(i, z) + 0.1

        assert gm.finite_difference_check(Broken(g2.Q, g2.b), [0.3, 0.7]) > 1e-2

    def test_non_quadratic(self):
        assert gm.finite_difference_check(Cubic(), [0.4, -0.9], h=1e-5) <= 1e-6


class TestGameFile:
    def test_round_trip(self):
        game = gm.three_player()
        back = gm.parse_game(gm.format_game(game))
        np.testing.assert_array_equal(back.Q, game.Q)
        np.testing.assert_array_equal(back.b, game.b)

    def test_load_validates(self, tmp_path):
        bad = gm.QuadraticGame.from_pseudogradient([[1.0, 2.0], [0.0, 1.0]], [0, 0])
        path = tmp_path / "bad.game"
        path.write_text(gm.format_game(bad))
        with pytest.raises(AssumptionViolation):
            gm.load_game(path)

    @pytest.mark.parametrize(
        "text",
        [
            "Q 1\n1 0\n0 1\n",
            "players 2\nQ 1\n1 0\n0 1\nb 1\n0 0\n",
            "players 2\nQ 1\n1 0\n",
            "players 2\nQ 1\n1 0 3\n0 1\nb 1\n0 0\nQ 2\n1 0\n0 1\nb 2\n0 0\n",
            "players 2\nQ 1\n1 x\n0 1\n",
            "players 2\nQ 3\n1 0\n0 1\n",
        ],
    )
    def test_rejects_malformed(self, text):
        with pytest.raises(ValidationError):
            gm.parse_game(text)
