"""Fixed-step RK4 integration with trajectory recording."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .digraph import DiGraph, is_weight_balanced
from .dynamics import XI_FLOOR, AlgorithmSpec, SeekerState, Variant, vector_field
from .errors import (
    AssumptionViolation,
    DegenerateEstimate,
    NonFiniteState,
    NumericalError,
    ValidationError,
)
from .game import Game, extended_pseudogradient

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntegrationConfig:
    step: float = 1e-3
    horizon: float = 30.0
    record_every: int = 1
    stop_tol: float = 0.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValidationError("step must be positive")
        if not self.horizon >= self.step:
            raise ValidationError("horizon must be at least one step")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValidationError("record_every must be a positive integer")
        if self.stop_tol < 0:
            raise ValidationError("stop_tol must be nonnegative")

    @property
    def n_steps(self) -> int:
        k = round(self.horizon / self.step)
        if abs(k * self.step - self.horizon) > 1e-9 * self.horizon:
            raise ValidationError(
                f"horizon {self.horizon} is not a whole number of steps of {self.step}"
            )
        return k


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[SeekerState]
    stop_reason: str = "horizon"
    error: NumericalError | None = None
    metrics: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    @property
    def final(self) -> SeekerState:
        return self.states[-1]

    @property
    def Z(self) -> np.ndarray:
        """Stacked ``(snapshots, n, n)`` array of strategy estimates."""
        return np.stack([s.Z for s in self.states])

    @property
    def Xi(self) -> np.ndarray | None:
        if self.states[0].Xi is None:
            return None
        return np.stack([s.Xi for s in self.states])


def rk4_step(f: Callable, x, h: float):
    # Overflow is reported through NonFiniteState below, not as a warning.
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("RK4 step produced non-finite values")
    return out


def consensus_error(Z: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(Z - Z.mean(axis=0), axis=1)))


def _check_setup(spec: AlgorithmSpec, g: DiGraph, game: Game, state0: SeekerState):
    n = g.n
    if game.n != n:
        raise ValidationError(f"game has {game.n} players but the graph has {n} nodes")
    if state0.Z.shape != (n, n):
        raise ValidationError(f"initial Z must be {n}x{n}")
    if spec.variant is Variant.BALANCED and not is_weight_balanced(g):
        raise AssumptionViolation(5, "the balanced variant needs a weight-balanced digraph")
    if spec.variant is Variant.ADAPTIVE:
        if state0.Xi is None or state0.Xi.shape != (n, n):
            raise ValidationError("the adaptive variant needs an n x n estimator state")
    if spec.variant is Variant.NOMINAL and spec.xi.shape != (n,):
        raise ValidationError("xi has the wrong length")


def integrate(
    spec: AlgorithmSpec,
    g: DiGraph,
    game: Game,
    state0: SeekerState,
    cfg: IntegrationConfig,
) -> Trajectory:
    """Integrate from ``t = 0`` to the horizon or until ``stop_tol`` is met.

    Numerical failures do not raise: the trajectory up to the last good step
    comes back with ``stop_reason == "error"`` and the exception in ``error``.
    """
    _check_setup(spec, g, game, state0)
    n = g.n
    adaptive = spec.variant is Variant.ADAPTIVE
    if not adaptive and state0.Xi is not None:
        state0 = SeekerState(state0.Z)
    f = vector_field(spec, g, game)
    h = cfg.step
    n_steps = cfg.n_steps
    m = n * n
    own = m + np.arange(n) * (n + 1)  # flat positions of Xi_ii

    x = state0.flatten()
    steps = [0]
    states = [SeekerState.unflatten(x.copy(), n)]
    reason = "horizon"
    err = None
    k = 0
    while k < n_steps:
        try:
            x_next = rk4_step(f, x, h)
            if adaptive and np.min(x_next[own]) < XI_FLOOR:
                raise DegenerateEstimate(
                    f"own eigenvector estimate fell below {XI_FLOOR:g} at t={(k + 1) * h:g}; "
                    "reduce the step size"
                )
        except NumericalError as exc:
            log.warning("integration stopped at t=%g: %s", k * h, exc)
            reason, err = "error", exc
            break
        x = x_next
        k += 1
        done = False
        if cfg.stop_tol > 0:
            Z = x[:m].reshape(n, n)
            resid = np.max(np.abs(extended_pseudogradient(game, Z)))
            done = max(resid, consensus_error(Z)) < cfg.stop_tol
        if done or k % cfg.record_every == 0 or k == n_steps:
            steps.append(k)
            states.append(SeekerState.unflatten(x.copy(), n))
        if done:
            reason = "tolerance"
            break
    if reason == "error" and steps[-1] != k:
        steps.append(k)
        states.append(SeekerState.unflatten(x.copy(), n))
    # Times are step counts times h, so the grid does not drift.
    times = np.array(steps, dtype=float) * h
    return Trajectory(times=times, states=states, stop_reason=reason, error=err)
