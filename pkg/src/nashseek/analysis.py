"""Convergence metrics and the Lyapunov-envelope certificate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .digraph import OrthogonalSplit, orthogonal_split
from .dynamics import lyapunov_decay_rate
from .errors import CertificateViolated, InsufficientData, ValidationError
from .game import GameConstants
from .integrator import Trajectory, consensus_error

FIT_FLOOR = 1e-14
ENVELOPE_SLACK = 1e-6


@dataclass
class ConvergenceReport:
    final_ne_error: float
    final_consensus_error: float
    fitted_rate: float
    fit_quality: float
    certified_rate: float = math.nan
    lyapunov_monotone: bool = False
    estimator_error_final: float = math.nan
    certificate_passed: bool | None = None
    first_violation_time: float = math.nan

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def csv_header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> list[str]:
        return [_fmt(v) for v in asdict(self).values()]


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def ne_error(traj: Trajectory, z_star) -> np.ndarray:
    """Per snapshot, the worst agent's distance to the equilibrium."""
    dev = traj.Z - np.asarray(z_star, dtype=float)[None, None, :]
    return np.linalg.norm(dev, axis=2).max(axis=1)


def consensus_errors(traj: Trajectory) -> np.ndarray:
    return np.array([consensus_error(s.Z) for s in traj.states])


def estimator_errors(traj: Trajectory, xi) -> np.ndarray:
    Xi = traj.Xi
    if Xi is None:
        raise ValidationError("trajectory carries no estimator state")
    own = np.diagonal(Xi, axis1=1, axis2=2)
    return np.max(np.abs(own - np.asarray(xi)[None, :]), axis=1)


def lyapunov_values(traj: Trajectory, z_star, split: OrthogonalSplit | None = None) -> np.ndarray:
    """``V = 0.5 * (|zbar1|^2 + |zbar2|^2)`` in the consensus/disagreement split.

    With ``Zt = Z - 1 z*^T``, the stacked coordinates are ``zbar1 = Zt^T m1``
    and ``zbar2 = vec(m2^T Zt)``.
    """
    n = traj.states[0].n
    split = split or orthogonal_split(n)
    Zt = traj.Z - np.asarray(z_star, dtype=float)[None, None, :]
    zb1 = np.einsum("i,kij->kj", split.m1, Zt)
    zb2 = np.einsum("ip,kij->kpj", split.m2, Zt)
    return 0.5 * (np.sum(zb1**2, axis=1) + np.sum(zb2**2, axis=(1, 2)))


def is_nonincreasing(values, rel_tol: float = 1e-12, abs_tol: float = 1e-20) -> bool:
    v = np.asarray(values)
    return bool(np.all(v[1:] <= v[:-1] * (1 + rel_tol) + abs_tol))


def fit_exponential_rate(times, values, tail_fraction: float = 0.5) -> tuple[float, float]:
    """Least-squares fit of ``log(values)`` against time over the trailing window.

    Returns ``(rate, r_squared)`` with ``rate = -slope``.  Samples at or below
    ``FIT_FLOOR`` are dropped because the rounding plateau is not exponential.
    """
    if not 0 < tail_fraction <= 1:
        raise ValidationError("tail_fraction must lie in (0, 1]")
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    start = int(math.floor(len(t) * (1 - tail_fraction)))
    t, v = t[start:], v[start:]
    keep = v > FIT_FLOOR
    t, v = t[keep], v[keep]
    if len(t) < 5:
        raise InsufficientData(f"need at least 5 samples above {FIT_FLOOR:g}, have {len(t)}")
    y = np.log(v)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum(resid**2) / ss_tot
    return float(-slope), float(r2)


def convergence_report(
    traj: Trajectory,
    z_star,
    consts: GameConstants | None = None,
    alpha: float | None = None,
    lambda2: float | None = None,
    xi=None,
    split: OrthogonalSplit | None = None,
    tail_fraction: float = 0.5,
    slack: float = ENVELOPE_SLACK,
) -> ConvergenceReport:
    """Fill a report without raising on a failed certificate.

    The certificate fields stay ``None``/NaN unless ``consts``, ``alpha`` and
    ``lambda2`` are given and ``alpha`` clears the gain threshold.
    """
    if len(traj) < 2:
        raise InsufficientData("trajectory has a single snapshot")
    n = traj.states[0].n
    err = ne_error(traj, z_star)
    V = lyapunov_values(traj, z_star, split)
    try:
        rate, r2 = fit_exponential_rate(traj.times, err, tail_fraction)
    except InsufficientData:
        rate, r2 = math.nan, math.nan
    report = ConvergenceReport(
        final_ne_error=float(err[-1]),
        final_consensus_error=float(consensus_error(traj.final.Z)),
        fitted_rate=rate,
        fit_quality=r2,
        lyapunov_monotone=is_nonincreasing(V),
    )
    if xi is not None and traj.Xi is not None:
        report.estimator_error_final = float(estimator_errors(traj, xi)[-1])
    if consts is not None and alpha is not None and lambda2 is not None:
        try:
            nu = lyapunov_decay_rate(consts, alpha, lambda2, n)
        except ValidationError:
            return report
        report.certified_rate = nu / 2.0
        bound = V[0] * np.exp(-nu * traj.times) * (1.0 + slack)
        bad = np.flatnonzero(V > bound)
        report.certificate_passed = bad.size == 0
        if bad.size:
            report.first_violation_time = float(traj.times[bad[0]])
    return report


def check_certificate(
    traj: Trajectory,
    consts: GameConstants,
    alpha: float,
    lambda2: float,
    n: int,
    z_star,
    split: OrthogonalSplit | None = None,
    xi=None,
    slack: float = ENVELOPE_SLACK,
    integration_allowance: float = 0.0,
) -> ConvergenceReport:
    """Check ``V(t_k) <= V(0) exp(-nu t_k) (1 + slack)`` at every snapshot.

    ``nu`` comes from :func:`lyapunov_decay_rate`, which rejects gains at or
    below the threshold.  Raises :class:`CertificateViolated` at the first
    offending snapshot.
    """
    if len(traj) < 2:
        raise InsufficientData("trajectory has a single snapshot")
    if traj.states[0].n != n:
        raise ValidationError("n does not match the trajectory")
    nu = lyapunov_decay_rate(consts, alpha, lambda2, n)
    tol = slack + integration_allowance
    report = convergence_report(traj, z_star, consts, alpha, lambda2, xi, split, slack=tol)
    if not report.certificate_passed:
        V = lyapunov_values(traj, z_star, split)
        k = int(np.flatnonzero(traj.times == report.first_violation_time)[0])
        raise CertificateViolated(
            report.first_violation_time, float(V[k]), float(V[0] * np.exp(-nu * traj.times[k]))
        )
    return report
