"""Weighted digraphs and the spectral quantities the gain conditions use.

Convention: ``weights[i, j] = a_ij > 0`` means node ``i`` receives information
from node ``j`` (an edge ``j -> i``).  The Laplacian uses in-degrees,
``L = D_in - A``, so ``L @ 1 == 0`` for every digraph and ``1 @ L == 0`` only
when the graph is weight-balanced.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy.linalg import null_space
from scipy.sparse.csgraph import connected_components

from .errors import AssumptionViolation, ValidationError

DEFAULT_TOL = 1e-9


class ScalingMode(enum.Enum):
    """How the eigenvector ``xi`` rescales the Laplacian rows.

    BALANCE_CORRECTED multiplies row ``i`` by ``xi_i``; the result has zero
    column sums, i.e. it is the Laplacian of a weight-balanced digraph.
    PAPER_LITERAL divides row ``i`` by ``xi_i``.  That scaling keeps the
    correct equilibrium but the rescaled digraph is not balanced in general,
    so the Lyapunov threshold built on ``lambda2_scaled`` does not apply to it.
    """

    BALANCE_CORRECTED = "balance_corrected"
    PAPER_LITERAL = "paper_literal"

    @classmethod
    def parse(cls, text: str | ScalingMode) -> ScalingMode:
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).strip().lower().replace("-", "_"))
        except ValueError:
            raise ValidationError(
                f"unknown scaling mode {text!r}; expected one of "
                + ", ".join(m.value for m in cls)
            ) from None


@dataclass(frozen=True)
class DiGraph:
    weights: np.ndarray

    def __post_init__(self):
        a = np.array(self.weights, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError(f"weight matrix must be square, got shape {a.shape}")
        if a.shape[0] < 2:
            raise ValidationError("a graph needs at least 2 nodes")
        if not np.all(np.isfinite(a)):
            raise ValidationError("weights must be finite")
        if np.any(a < 0):
            raise ValidationError("weights must be nonnegative")
        if np.any(np.diag(a) != 0):
            raise ValidationError("self-loops are not allowed (a_ii must be 0)")
        a.setflags(write=False)
        object.__setattr__(self, "weights", a)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def in_neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.weights[i])

    def edges(self) -> Iterator[tuple[int, int, float]]:
        """Yield ``(source, target, weight)`` with 0-based indices."""
        for i, j in zip(*np.nonzero(self.weights)):
            yield int(j), int(i), float(self.weights[i, j])

    @classmethod
    def from_edges(cls, n: int, edges) -> DiGraph:
        """Build from ``(source, target, weight)`` triples, 0-based."""
        a = np.zeros((n, n))
        for src, dst, w in edges:
            if not (0 <= src < n and 0 <= dst < n):
                raise ValidationError(f"edge {src}->{dst} out of range for n={n}")
            if src == dst:
                raise ValidationError(f"self-loop at node {src + 1}")
            a[dst, src] = w
        return cls(a)


@dataclass(frozen=True)
class OrthogonalSplit:
    m1: np.ndarray
    m2: np.ndarray


@dataclass(frozen=True)
class SpectralData:
    laplacian: np.ndarray
    xi: np.ndarray
    lambda2_scaled: float
    balanced: bool
    # Only defined for weight-balanced graphs.
    lambda2: float | None = None
    lambdaN: float | None = None
    scaled_lambdaN: float | None = field(default=None)


def laplacian(g: DiGraph) -> np.ndarray:
    a = g.weights
    return np.diag(a.sum(axis=1)) - a


def is_strongly_connected(g: DiGraph) -> bool:
    ncomp, _ = connected_components(g.weights > 0, directed=True, connection="strong")
    return ncomp == 1


def is_weight_balanced(g: DiGraph, tol: float = DEFAULT_TOL) -> bool:
    a = g.weights
    return bool(np.all(np.abs(a.sum(axis=1) - a.sum(axis=0)) <= tol))


def orthogonal_split(n: int) -> OrthogonalSplit:
    """Orthonormal basis ``m2`` of the complement of the all-ones direction.

    Uses the Householder reflector that maps ``e_1`` onto ``1/sqrt(n)``; its
    remaining columns are orthonormal and orthogonal to the ones vector.
    """
    if n < 2:
        raise ValidationError("orthogonal_split needs n >= 2")
    m1 = np.full(n, 1.0 / np.sqrt(n))
    v = -m1.copy()
    v[0] += 1.0
    h = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return OrthogonalSplit(m1=m1, m2=h[:, 1:].copy())


def connectivity_eigenvalues(L: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """Smallest nonzero and largest eigenvalue of ``Sym(L)``.

    ``L`` must be the Laplacian of a weight-balanced, strongly connected
    digraph.  The zero mode is removed by projecting onto ``m2`` rather than
    by thresholding small eigenvalues.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if np.max(np.abs(L.sum(axis=0))) > tol * max(1.0, np.abs(L).max()):
        raise AssumptionViolation(5, "column sums of the Laplacian are not zero")
    sym = 0.5 * (L + L.T)
    if np.linalg.eigvalsh(sym)[0] < -tol:
        raise AssumptionViolation(5, "Sym(L) has a negative eigenvalue")
    m2 = orthogonal_split(n).m2
    ev = np.linalg.eigvalsh(m2.T @ sym @ m2)
    if ev[0] <= tol:
        raise AssumptionViolation(4, f"lambda2 = {ev[0]:.3e} is not positive")
    return float(ev[0]), float(ev[-1])


def left_eigenvector(L: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Positive ``xi`` with ``xi @ L == 0`` and ``sum(xi) == 1``.

    Centralized reference computation (SVD null space of ``L.T``).
    """
    L = np.asarray(L, dtype=float)
    basis = null_space(L.T, rcond=tol)
    if basis.shape[1] != 1:
        raise AssumptionViolation(
            4, f"zero eigenvalue of L has multiplicity {basis.shape[1]}, expected 1"
        )
    xi = basis[:, 0]
    xi = xi / xi.sum()
    if np.min(xi) <= 0:
        raise AssumptionViolation(4, "left null vector is not componentwise positive")
    # Renormalize once more so the sum is exact to rounding.
    return xi / xi.sum()


def scaled_laplacian(
    L: np.ndarray, xi: np.ndarray, mode: ScalingMode = ScalingMode.BALANCE_CORRECTED
) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0):
        raise ValidationError("xi must be componentwise positive")
    mode = ScalingMode.parse(mode)
    if mode is ScalingMode.BALANCE_CORRECTED:
        return xi[:, None] * L
    return L / xi[:, None]


def spectral_data(g: DiGraph, tol: float = DEFAULT_TOL) -> SpectralData:
    """Every spectral quantity used by the gain thresholds, in one place."""
    if not is_strongly_connected(g):
        raise AssumptionViolation(4)
    L = laplacian(g)
    xi = left_eigenvector(L, tol)
    l2s, lns = connectivity_eigenvalues(scaled_laplacian(L, xi), tol)
    balanced = is_weight_balanced(g, tol)
    l2 = lN = None
    if balanced:
        l2, lN = connectivity_eigenvalues(L, tol)
    return SpectralData(
        laplacian=L,
        xi=xi,
        lambda2_scaled=l2s,
        balanced=balanced,
        lambda2=l2,
        lambdaN=lN,
        scaled_lambdaN=lns,
    )


# -- named families -----------------------------------------------------------


def ring(n: int, weight: float = 1.0) -> DiGraph:
    """Directed ring 1 -> 2 -> ... -> n -> 1."""
    return DiGraph.from_edges(n, [(k, (k + 1) % n, weight) for k in range(n)])


def undirected_ring(n: int, weight: float = 1.0) -> DiGraph:
    if n == 2:
        return complete(2, weight)
    edges = [(k, (k + 1) % n, weight) for k in range(n)]
    edges += [((k + 1) % n, k, weight) for k in range(n)]
    return DiGraph.from_edges(n, edges)


def complete(n: int, weight: float = 1.0) -> DiGraph:
    a = np.full((n, n), float(weight))
    np.fill_diagonal(a, 0.0)
    return DiGraph(a)


def star_with_return(n: int, out_weight: float = 1.0, return_weight: float = 2.0) -> DiGraph:
    """Hub node 1 broadcasts to every leaf; every leaf reports back to the hub.

    Unbalanced whenever the two weights differ.
    """
    edges = [(0, k, out_weight) for k in range(1, n)]
    edges += [(k, 0, return_weight) for k in range(1, n)]
    return DiGraph.from_edges(n, edges)


def random_strongly_connected(
    n: int,
    rng: np.random.Generator | int | None = None,
    edge_prob: float = 0.4,
    weight_range: tuple[float, float] = (0.5, 2.0),
) -> DiGraph:
    """Random Hamiltonian cycle plus independent extra edges, random weights.

    The cycle guarantees strong connectivity; extra edges and weights make
    the graph unbalanced almost surely.
    """
    rng = np.random.default_rng(rng)
    lo, hi = weight_range
    a = np.zeros((n, n))
    order = rng.permutation(n)
    for k in range(n):
        a[order[(k + 1) % n], order[k]] = rng.uniform(lo, hi)
    extra = (rng.random((n, n)) < edge_prob) & (a == 0)
    np.fill_diagonal(extra, False)
    a[extra] = rng.uniform(lo, hi, size=int(extra.sum()))
    return DiGraph(a)


# -- text format ----------------------------------------------------------------


def parse_graph(text: str) -> DiGraph:
    """Parse ``nodes <n>`` / ``edge <from> <to> <weight>`` records (1-based)."""
    n = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "nodes" and len(parts) == 2:
                n = int(parts[1])
            elif parts[0] == "edge" and len(parts) == 4:
                src, dst, w = int(parts[1]), int(parts[2]), float(parts[3])
                edges.append((src - 1, dst - 1, w))
            else:
                raise ValueError
        except ValueError:
            raise ValidationError(f"line {lineno}: cannot parse {raw.strip()!r}") from None
    if n is None:
        raise ValidationError("missing 'nodes <n>' header")
    seen = set()
    for src, dst, _ in edges:
        if (src, dst) in seen:
            raise ValidationError(f"duplicate edge {src + 1} -> {dst + 1}")
        seen.add((src, dst))
    return DiGraph.from_edges(n, edges)


def format_graph(g: DiGraph) -> str:
    lines = [f"nodes {g.n}"]
    lines += [f"edge {s + 1} {t + 1} {w!r}" for s, t, w in g.edges()]
    return "\n".join(lines) + "\n"


def load_graph(path: str | Path) -> DiGraph:
    return parse_graph(Path(path).read_text())
