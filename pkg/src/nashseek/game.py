"""N-player games with scalar decisions.

A game only has to expose ``cost(i, z)`` and ``partial_gradient(i, z)``; the
quadratic family additionally provides exact regularity constants and a
closed-form Nash equilibrium, which is what the verification code relies on.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AssumptionViolation, ValidationError


class Game(abc.ABC):
    n: int

    @abc.abstractmethod
    def cost(self, i: int, z: np.ndarray) -> float: ...

    @abc.abstractmethod
    def partial_gradient(self, i: int, z: np.ndarray) -> float:
        """Derivative of player ``i``'s cost with respect to ``z[i]``."""


@dataclass(frozen=True)
class GameConstants:
    mono_lower: float
    lip_F: float
    lip_extF: float

    @property
    def l(self) -> float:
        return max(self.lip_F, self.lip_extF)


class QuadraticGame(Game):
    """``J_i(z) = 0.5 * z @ Q[i] @ z + b[i] @ z``.

    Construction only checks shapes and symmetry so that degenerate
    instances (e.g. the zero game) can still drive the dynamics; call
    :meth:`validate` or :func:`constants` to enforce the assumptions.
    """

    def __init__(self, Q, b):
        Q = np.array(Q, dtype=float)
        b = np.array(b, dtype=float)
        if Q.ndim != 3 or Q.shape[1:] != (Q.shape[0], Q.shape[0]):
            raise ValidationError(f"Q must have shape (n, n, n), got {Q.shape}")
        n = Q.shape[0]
        if b.shape != (n, n):
            raise ValidationError(f"b must have shape ({n}, {n}), got {b.shape}")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(b))):
            raise ValidationError("game data must be finite")
        for i in range(n):
            if np.max(np.abs(Q[i] - Q[i].T)) > 1e-12:
                raise ValidationError(f"Q[{i + 1}] is not symmetric")
        Q.setflags(write=False)
        b.setflags(write=False)
        self.n = n
        self.Q = Q
        self.b = b
        idx = np.arange(n)
        # Row i of the pseudogradient Jacobian is row i of Q[i].
        self.jacobian = Q[idx, idx, :].copy()
        self.offset = b[idx, idx].copy()

    @classmethod
    def from_pseudogradient(cls, jacobian, offset) -> QuadraticGame:
        """Smallest symmetric ``Q[i]`` whose ``i``-th row matches ``jacobian[i]``."""
        G = np.asarray(jacobian, dtype=float)
        g = np.asarray(offset, dtype=float)
        n = G.shape[0]
        Q = np.zeros((n, n, n))
        b = np.zeros((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            Q[i] = np.outer(e, G[i]) + np.outer(G[i], e) - G[i, i] * np.outer(e, e)
            b[i, i] = g[i]
        return cls(Q, b)

    def cost(self, i, z):
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.Q[i] @ z + self.b[i] @ z)

    def partial_gradient(self, i, z):
        return float(self.jacobian[i] @ np.asarray(z, dtype=float) + self.offset[i])

    def validate(self) -> None:
        own = np.diagonal(self.jacobian)
        bad = np.flatnonzero(own <= 0)
        if bad.size:
            raise AssumptionViolation(1, f"(Q_{bad[0] + 1})_{bad[0] + 1},{bad[0] + 1} <= 0")
        mono = np.linalg.eigvalsh(0.5 * (self.jacobian + self.jacobian.T))[0]
        if mono <= 0:
            raise AssumptionViolation(2, f"lambda_min(Sym(G)) = {mono:.3e} <= 0")

    def __repr__(self):
        return f"QuadraticGame(n={self.n})"


def _check_finite(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("input contains non-finite entries")
    return x


def pseudogradient(game: Game, z) -> np.ndarray:
    z = _check_finite(z)
    if isinstance(game, QuadraticGame):
        # Same reduction as the extended map, so consensus inputs agree bit for bit.
        return (game.jacobian * z).sum(axis=1) + game.offset
    return np.array([game.partial_gradient(i, z) for i in range(game.n)])


def extended_pseudogradient(game: Game, Z) -> np.ndarray:
    """Component ``i`` is player ``i``'s partial gradient at row ``i`` of ``Z``."""
    Z = _check_finite(Z)
    if isinstance(game, QuadraticGame):
        return (game.jacobian * Z).sum(axis=1) + game.offset
    return np.array([game.partial_gradient(i, Z[i]) for i in range(game.n)])


def constants(game: QuadraticGame) -> GameConstants:
    game.validate()
    G = game.jacobian
    mono = float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])
    lip = float(np.linalg.norm(G, 2))
    # Component i of the extended map reads only row i of Z, so its
    # Lipschitz constant is the largest row norm.
    lip_ext = float(np.max(np.linalg.norm(G, axis=1)))
    return GameConstants(mono_lower=mono, lip_F=lip, lip_extF=lip_ext)


def nash_equilibrium(game: QuadraticGame) -> np.ndarray:
    try:
        return np.linalg.solve(game.jacobian, -game.offset)
    except np.linalg.LinAlgError:
        raise AssumptionViolation(2, "pseudogradient Jacobian is singular") from None


def finite_difference_check(game: Game, z, h: float = 1e-6) -> float:
    """Worst error between ``partial_gradient`` and a central difference.

    Relative error where the gradient is of order one, absolute error where
    it is small (e.g. at the equilibrium).
    """
    if h <= 0:
        raise ValidationError("h must be positive")
    z = np.asarray(z, dtype=float)
    worst = 0.0
    for i in range(game.n):
        step = np.zeros_like(z)
        step[i] = h
        fd = (game.cost(i, z + step) - game.cost(i, z - step)) / (2 * h)
        an = game.partial_gradient(i, z)
        worst = max(worst, abs(fd - an) / max(1.0, abs(an)))
    return worst


# -- packaged games -------------------------------------------------------------


def g2() -> QuadraticGame:
    """Two-player game with pseudogradient ``[[2,1],[1,2]] z + (-2,-4)``; NE (0, 2)."""
    Q = [[[2, 1], [1, 0]], [[0, 1], [1, 2]]]
    b = [[-2, 0], [0, -4]]
    return QuadraticGame(Q, b)


def decoupled(c) -> QuadraticGame:
    """``J_i = (z_i - c_i)^2`` up to a constant; NE is ``c``."""
    c = np.asarray(c, dtype=float)
    n = c.size
    Q = np.zeros((n, n, n))
    b = np.zeros((n, n))
    for i in range(n):
        Q[i, i, i] = 2.0
        b[i, i] = -2.0 * c[i]
    return QuadraticGame(Q, b)


def three_player() -> QuadraticGame:
    """Non-symmetric coupling, strongly monotone with modulus about 1.55."""
    G = [[2.0, 0.5, -0.3], [0.4, 2.5, 0.6], [-0.2, 0.5, 3.0]]
    return QuadraticGame.from_pseudogradient(G, [-1.0, 2.0, -3.0])


def zero_game(n: int) -> QuadraticGame:
    """All costs identically zero; not a valid instance, useful for pure consensus."""
    return QuadraticGame(np.zeros((n, n, n)), np.zeros((n, n)))


PACKAGED_GAMES = {"g2": g2, "three_player": three_player}


# -- text format ----------------------------------------------------------------


def parse_game(text: str) -> QuadraticGame:
    """Parse ``players <n>`` then ``Q <i>`` (n rows) and ``b <i>`` (1 row) blocks."""
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line))

    def numbers(lineno, line, n):
        try:
            vals = [float(t) for t in line.split()]
        except ValueError:
            raise ValidationError(f"line {lineno}: expected numbers, got {line!r}") from None
        if len(vals) != n:
            raise ValidationError(f"line {lineno}: expected {n} numbers, got {len(vals)}")
        return vals

    if not lines or lines[0][1].split()[0] != "players":
        raise ValidationError("missing 'players <n>' header")
    try:
        n = int(lines[0][1].split()[1])
    except (IndexError, ValueError):
        raise ValidationError(f"line {lines[0][0]}: bad header") from None
    Q = [None] * n
    b = [None] * n
    pos = 1
    while pos < len(lines):
        lineno, line = lines[pos]
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ("Q", "b"):
            raise ValidationError(f"line {lineno}: expected 'Q <i>' or 'b <i>', got {line!r}")
        try:
            i = int(parts[1]) - 1
        except ValueError:
            raise ValidationError(f"line {lineno}: bad player index") from None
        if not 0 <= i < n:
            raise ValidationError(f"line {lineno}: player index out of range")
        rows = n if parts[0] == "Q" else 1
        block = lines[pos + 1 : pos + 1 + rows]
        if len(block) != rows:
            raise ValidationError(f"line {lineno}: truncated block")
        data = [numbers(ln, txt, n) for ln, txt in block]
        if parts[0] == "Q":
            Q[i] = data
        else:
            b[i] = data[0]
        pos += 1 + rows
    missing = [i + 1 for i in range(n) if Q[i] is None or b[i] is None]
    if missing:
        raise ValidationError(f"missing Q/b blocks for players {missing}")
    return QuadraticGame(Q, b)


def format_game(game: QuadraticGame) -> str:
    out = [f"players {game.n}"]
    for i in range(game.n):
        out.append(f"Q {i + 1}")
        out += [" ".join(repr(float(v)) for v in row) for row in game.Q[i]]
        out.append(f"b {i + 1}")
        out.append(" ".join(repr(float(v)) for v in game.b[i]))
    return "\n".join(out) + "\n"


def load_game(path: str | Path) -> QuadraticGame:
    game = parse_game(Path(path).read_text())
    game.validate()
    return game
