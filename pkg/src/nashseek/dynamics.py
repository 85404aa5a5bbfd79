"""Seeking dynamics as vector fields on the stacked agent state.

State layout: ``Z[i]`` is agent ``i``'s estimate of the whole strategy profile
(``Z[i, i]`` is its own decision) and ``Xi[i]`` is agent ``i``'s estimate of the
left Laplacian eigenvector, used only by the adaptive variant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .digraph import DiGraph, ScalingMode, laplacian, scaled_laplacian
from .errors import DegenerateEstimate, ValidationError
from .game import Game, GameConstants, QuadraticGame, extended_pseudogradient

XI_FLOOR = 1e-12


class Variant(enum.Enum):
    BALANCED = "balanced"
    NOMINAL = "nominal"
    ADAPTIVE = "adaptive"

    @classmethod
    def parse(cls, text: str | Variant) -> Variant:
        if isinstance(text, cls):
            return text
        aliases = {"nominal_unbalanced": "nominal", "nominalunbalanced": "nominal"}
        key = str(text).strip().lower().replace("-", "_")
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValidationError(
                f"unknown variant {text!r}; expected balanced, nominal or adaptive"
            ) from None


@dataclass(frozen=True)
class SeekerState:
    Z: np.ndarray
    Xi: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def flatten(self) -> np.ndarray:
        if self.Xi is None:
            return self.Z.ravel().copy()
        return np.concatenate([self.Z.ravel(), self.Xi.ravel()])

    @classmethod
    def unflatten(cls, x: np.ndarray, n: int) -> SeekerState:
        m = n * n
        Z = x[:m].reshape(n, n)
        Xi = x[m:].reshape(n, n) if x.size > m else None
        return cls(Z, Xi)


@dataclass(frozen=True)
class AlgorithmSpec:
    variant: Variant
    alpha: float
    scaling_mode: ScalingMode = ScalingMode.BALANCE_CORRECTED
    xi: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        object.__setattr__(self, "scaling_mode", ScalingMode.parse(self.scaling_mode))
        if not self.alpha > 0:
            raise ValidationError(f"alpha must be positive, got {self.alpha}")
        if self.xi is not None:
            xi = np.asarray(self.xi, dtype=float)
            if np.any(xi <= 0) or abs(xi.sum() - 1.0) > 1e-9:
                raise ValidationError("xi must be positive and sum to one")
            object.__setattr__(self, "xi", xi)
        elif self.variant is Variant.NOMINAL:
            raise ValidationError("the nominal variant needs the eigenvector xi")


def _seeking_rhs(Ls: np.ndarray, game: Game, alpha: float, Z: np.ndarray) -> np.ndarray:
    out = -alpha * (Ls @ Z)
    out[np.diag_indices_from(out)] -= extended_pseudogradient(game, Z)
    return out


def field_balanced(g: DiGraph, game: Game, alpha: float, Z) -> np.ndarray:
    """``dZ/dt = -alpha L Z - diag(F(Z))``; ``alpha = 1`` is the baseline rule."""
    return _seeking_rhs(laplacian(g), game, alpha, np.asarray(Z, dtype=float))


def field_nominal(
    g: DiGraph,
    game: Game,
    alpha: float,
    xi,
    mode: ScalingMode,
    Z,
) -> np.ndarray:
    Ls = scaled_laplacian(laplacian(g), xi, mode)
    return _seeking_rhs(Ls, game, alpha, np.asarray(Z, dtype=float))


def estimator_field(g: DiGraph, Xi) -> np.ndarray:
    """Row ``i`` is ``-sum_j a_ij (Xi[i] - Xi[j])``, i.e. ``-L @ Xi``."""
    return -(laplacian(g) @ np.asarray(Xi, dtype=float))


def _adaptive_gains(Xi: np.ndarray, mode: ScalingMode) -> np.ndarray:
    own = np.diagonal(Xi)
    bad = np.flatnonzero(own < XI_FLOOR)
    if bad.size:
        i = bad[0]
        raise DegenerateEstimate(
            f"agent {i + 1} eigenvector estimate {own[i]:.3e} fell below {XI_FLOOR:g}; "
            "reduce the step size"
        )
    return own.copy() if mode is ScalingMode.BALANCE_CORRECTED else 1.0 / own


def field_adaptive(
    g: DiGraph, game: Game, alpha: float, mode: ScalingMode, state: SeekerState
) -> SeekerState:
    mode = ScalingMode.parse(mode)
    L = laplacian(g)
    gains = _adaptive_gains(state.Xi, mode)
    dZ = _seeking_rhs(gains[:, None] * L, game, alpha, state.Z)
    return SeekerState(dZ, -(L @ state.Xi))


def _fast_rhs(game: Game, n: int) -> Callable[[np.ndarray, np.ndarray, float], np.ndarray]:
    """``(Ls, Z, alpha) -> dZ`` with per-call validation and index setup hoisted out."""
    diag = np.arange(n) * (n + 1)
    if isinstance(game, QuadraticGame):
        G, g0 = game.jacobian, game.offset

        def grad(Z):
            return (G * Z).sum(axis=1) + g0

    else:

        def grad(Z):
            return np.array([game.partial_gradient(i, Z[i]) for i in range(n)])

    def rhs(Ls, Z, alpha):
        out = (-alpha) * (Ls @ Z)
        out.ravel()[diag] -= grad(Z)
        return out

    return rhs


def vector_field(
    spec: AlgorithmSpec, g: DiGraph, game: Game
) -> Callable[[np.ndarray], np.ndarray]:
    """Flat-vector field for the integrator, with the Laplacian precomputed."""
    n = g.n
    m = n * n
    L = laplacian(g)
    alpha = spec.alpha
    rhs = _fast_rhs(game, n)

    if spec.variant is Variant.ADAPTIVE:
        mode = spec.scaling_mode

        def f(x):
            Z = x[:m].reshape(n, n)
            Xi = x[m:].reshape(n, n)
            gains = _adaptive_gains(Xi, mode)
            dZ = rhs(gains[:, None] * L, Z, alpha)
            return np.concatenate([dZ.ravel(), -(L @ Xi).ravel()])

        return f

    if spec.variant is Variant.NOMINAL:
        Ls = scaled_laplacian(L, spec.xi, spec.scaling_mode)
    else:
        Ls = L

    def f(x):
        return rhs(Ls, x.reshape(n, n), alpha).ravel()

    return f


def min_gain(consts: GameConstants, lam: float) -> float:
    """Gain threshold ``(l**2 / mono + l) / lam``; choose alpha strictly above it."""
    if not lam > 0:
        raise ValidationError(f"connectivity eigenvalue must be positive, got {lam}")
    l = consts.l
    return (l * l / consts.mono_lower + l) / lam


def decay_matrix(consts: GameConstants, alpha: float, lambda2: float, n: int) -> np.ndarray:
    l = consts.l
    return np.array(
        [
            [consts.mono_lower / n, -l / np.sqrt(n)],
            [-l / np.sqrt(n), alpha * lambda2 - l],
        ]
    )


def lyapunov_decay_rate(consts: GameConstants, alpha: float, lambda2: float, n: int) -> float:
    """Certified rate ``nu`` in ``dV/dt <= -nu V``; equals twice the smallest
    eigenvalue of the 2x2 comparison matrix."""
    lam_min = np.linalg.eigvalsh(decay_matrix(consts, alpha, lambda2, n))[0]
    # At alpha == min_gain lam_min is zero only up to rounding.
    if lam_min <= 0 or alpha <= min_gain(consts, lambda2):
        raise ValidationError(
            f"alpha={alpha} does not exceed the gain threshold "
            f"{min_gain(consts, lambda2):.6g}; comparison matrix is not positive definite"
        )
    return float(2.0 * lam_min)


def default_initial_z(n: int) -> np.ndarray:
    return np.outer(np.arange(1, n + 1) / n, np.ones(n))


def seeded_initial_z(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n, n))


def initial_state(n: int, z0=None, adaptive: bool = True) -> SeekerState:
    """Estimator starts at the identity; ``Z`` defaults to row ``i = (i+1)/n``."""
    Z = default_initial_z(n) if z0 is None else np.array(z0, dtype=float)
    if Z.shape != (n, n):
        raise ValidationError(f"initial Z must be {n}x{n}, got {Z.shape}")
    return SeekerState(Z, np.eye(n) if adaptive else None)
