"""Experiment configuration, single runs and gain sweeps.

Config files are INI-style (``[section]`` markers, ``key = value`` lines)::

    [problem]
    graph = ring3.graph
    game = three_player.game
    variant = balanced            # balanced | nominal | adaptive
    scaling_mode = balance_corrected
    alpha = auto:1.1              # a number, or auto:<margin> for margin * threshold

    [integration]
    step = 1e-3
    horizon = 50
    record_every = 10
    stop_tol = 0

    [initial]
    z = default                   # default | seeded:<int> | "1 2; 3 4"

    [output]
    directory = out

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import configparser
import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import analysis, digraph, dynamics, game as gamemod
from .digraph import DiGraph, ScalingMode
from .dynamics import AlgorithmSpec, Variant
from .errors import AssumptionViolation, NashSeekError, NumericalError, ValidationError
from .game import QuadraticGame
from .integrator import IntegrationConfig, Trajectory, integrate

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


@dataclass(frozen=True)
class ExperimentConfig:
    graph_path: Path
    game_path: Path
    variant: Variant = Variant.BALANCED
    scaling_mode: ScalingMode = ScalingMode.BALANCE_CORRECTED
    alpha: str = "auto:1.1"
    integration: IntegrationConfig = IntegrationConfig()
    initial_z: str = "default"
    output_dir: Path = Path("out")

    def with_alpha(self, alpha) -> ExperimentConfig:
        return replace(self, alpha=str(alpha))

    def to_ini(self, include_output: bool = True) -> str:
        cp = configparser.ConfigParser()
        cp["problem"] = {
            "graph": str(self.graph_path),
            "game": str(self.game_path),
            "variant": self.variant.value,
            "scaling_mode": self.scaling_mode.value,
            "alpha": self.alpha,
        }
        ic = self.integration
        cp["integration"] = {
            "step": repr(ic.step),
            "horizon": repr(ic.horizon),
            "record_every": str(ic.record_every),
            "stop_tol": repr(ic.stop_tol),
        }
        cp["initial"] = {"z": self.initial_z}
        if include_output:
            cp["output"] = {"directory": str(self.output_dir)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _parse_real(section, key, text) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"[{section}] {key}: expected a number, got {text!r}") from None


def parse_config(text: str, base_dir: Path = Path(".")) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from None
    if "problem" not in cp:
        raise ValidationError("config needs a [problem] section")
    prob = cp["problem"]
    for key in ("graph", "game"):
        if key not in prob:
            raise ValidationError(f"[problem] {key} is required")
    integ = cp["integration"] if "integration" in cp else {}
    defaults = IntegrationConfig()
    ic = IntegrationConfig(
        step=_parse_real("integration", "step", integ.get("step", repr(defaults.step))),
        horizon=_parse_real("integration", "horizon", integ.get("horizon", repr(defaults.horizon))),
        record_every=int(_parse_real("integration", "record_every", integ.get("record_every", "1"))),
        stop_tol=_parse_real("integration", "stop_tol", integ.get("stop_tol", "0")),
    )
    init = cp["initial"].get("z", "default") if "initial" in cp else "default"
    out = cp["output"].get("directory", "out") if "output" in cp else "out"
    base = Path(base_dir).resolve()
    return ExperimentConfig(
        graph_path=base / prob["graph"],
        game_path=base / prob["game"],
        variant=Variant.parse(prob.get("variant", "balanced")),
        scaling_mode=ScalingMode.parse(prob.get("scaling_mode", "balance_corrected")),
        alpha=prob.get("alpha", "auto:1.1").strip(),
        integration=ic,
        initial_z=init.strip(),
        output_dir=base / out,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent)


def resolve_initial_z(spec: str, n: int) -> np.ndarray:
    spec = spec.strip().strip("'\"")
    if spec == "default":
        return dynamics.default_initial_z(n)
    if spec.startswith("seeded:"):
        try:
            seed = int(spec.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"bad seed in {spec!r}") from None
        return dynamics.seeded_initial_z(n, seed)
    try:
        rows = [[float(v) for v in row.replace(",", " ").split()] for row in spec.split(";")]
        Z = np.array(rows, dtype=float)
    except ValueError:
        raise ValidationError(f"cannot parse initial z {spec!r}") from None
    if Z.shape != (n, n):
        raise ValidationError(f"initial z must be {n}x{n}, got shape {Z.shape}")
    return Z


@dataclass
class Problem:
    """Validated inputs plus every derived quantity a run reports."""

    graph: DiGraph
    game: QuadraticGame
    spectral: digraph.SpectralData
    consts: gamemod.GameConstants
    z_star: np.ndarray

    @classmethod
    def load(cls, graph_path, game_path) -> Problem:
        return cls.build(digraph.load_graph(graph_path), gamemod.load_game(game_path))

    @classmethod
    def build(cls, g: DiGraph, game: QuadraticGame) -> Problem:
        if game.n != g.n:
            raise ValidationError(f"game has {game.n} players, graph has {g.n} nodes")
        if not digraph.is_strongly_connected(g):
            raise AssumptionViolation(4)
        consts = gamemod.constants(game)
        return cls(g, game, digraph.spectral_data(g), consts, gamemod.nash_equilibrium(game))

    def threshold_eigenvalue(self, variant: Variant) -> float:
        if variant is Variant.BALANCED:
            if not self.spectral.balanced:
                raise AssumptionViolation(5, "the balanced variant needs a weight-balanced digraph")
            return self.spectral.lambda2
        return self.spectral.lambda2_scaled

    def threshold(self, variant: Variant) -> float:
        return dynamics.min_gain(self.consts, self.threshold_eigenvalue(variant))

    def resolve_alpha(self, alpha: str, variant: Variant) -> float:
        text = str(alpha).strip()
        if text.startswith("auto:"):
            margin = _parse_real("problem", "alpha", text[5:])
            if not margin > 1:
                raise ValidationError(f"auto margin must exceed 1, got {margin}")
            return margin * self.threshold(variant)
        value = _parse_real("problem", "alpha", text)
        if not value > 0:
            raise ValidationError(f"alpha must be positive, got {value}")
        return value


@dataclass
class RunResult:
    alpha: float
    trajectory: Trajectory
    report: analysis.ConvergenceReport
    provenance: dict[str, str]
    exit_code: int
    error_category: str = ""


def _vec(v) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(v))


def provenance(problem: Problem, alpha: float) -> dict[str, str]:
    sd = problem.spectral
    return {
        "resolved_alpha": repr(alpha),
        "threshold_balanced": repr(dynamics.min_gain(problem.consts, sd.lambda2)) if sd.balanced else "n/a",
        "threshold_scaled": repr(dynamics.min_gain(problem.consts, sd.lambda2_scaled)),
        "lambda2": repr(sd.lambda2) if sd.balanced else "n/a",
        "lambdaN": repr(sd.lambdaN) if sd.balanced else "n/a",
        "lambda2_scaled": repr(sd.lambda2_scaled),
        "weight_balanced": str(sd.balanced).lower(),
        "xi": _vec(sd.xi),
        "mono_lower": repr(problem.consts.mono_lower),
        "lip_F": repr(problem.consts.lip_F),
        "lip_extF": repr(problem.consts.lip_extF),
        "l": repr(problem.consts.l),
        "nash_equilibrium": _vec(problem.z_star),
    }


def _header_lines(cfg: ExperimentConfig, prov: dict[str, str]) -> list[str]:
    # The output directory is left out so that a sweep row and a plain run
    # with the same gain produce byte-identical files.
    lines = ["# config"]
    lines += [f"# {ln}" if ln.strip() else "#" for ln in cfg.to_ini(include_output=False).splitlines()]
    lines += ["# provenance"]
    lines += [f"# {k} = {v}" for k, v in prov.items()]
    return lines


def execute(problem: Problem, cfg: ExperimentConfig, alpha: float) -> RunResult:
    """Integrate and analyze; numerical failures are captured in the result."""
    variant = cfg.variant
    g, n = problem.graph, problem.graph.n
    z0 = resolve_initial_z(cfg.initial_z, n)
    spec = AlgorithmSpec(
        variant,
        alpha,
        cfg.scaling_mode,
        xi=problem.spectral.xi if variant is Variant.NOMINAL else None,
    )
    state0 = dynamics.initial_state(n, z0, adaptive=variant is Variant.ADAPTIVE)
    traj = integrate(spec, g, problem.game, state0, cfg.integration)

    # The Lyapunov certificate covers the fixed-gain variants whose consensus
    # matrix is weight-balanced.
    lam = None
    if variant is Variant.BALANCED:
        lam = problem.spectral.lambda2
    elif variant is Variant.NOMINAL and cfg.scaling_mode is ScalingMode.BALANCE_CORRECTED:
        lam = problem.spectral.lambda2_scaled
    xi = problem.spectral.xi
    # A diverged partial trajectory may hold huge values; its metrics overflow quietly.
    with np.errstate(over="ignore", invalid="ignore"):
        report, metrics = _analyze(problem, traj, alpha, lam, xi)
    traj.metrics.update(metrics)

    code, category = EXIT_OK, ""
    if traj.stop_reason == "error":
        code, category = EXIT_NUMERICAL, traj.error.category
    elif cfg.integration.stop_tol > 0 and traj.stop_reason != "tolerance":
        code, category = EXIT_NUMERICAL, "tolerance_not_met"
    return RunResult(alpha, traj, report, provenance(problem, alpha), code, category)


def _analyze(problem, traj, alpha, lam, xi):
    if len(traj) >= 2:
        report = analysis.convergence_report(
            traj, problem.z_star, problem.consts, alpha, lam, xi=xi
        )
    else:
        report = analysis.ConvergenceReport(
            final_ne_error=float(analysis.ne_error(traj, problem.z_star)[-1]),
            final_consensus_error=float(analysis.consensus_errors(traj)[-1]),
            fitted_rate=float("nan"),
            fit_quality=float("nan"),
        )
    metrics = {
        "V": analysis.lyapunov_values(traj, problem.z_star),
        "ne_error": analysis.ne_error(traj, problem.z_star),
        "consensus_error": analysis.consensus_errors(traj),
    }
    if traj.Xi is not None:
        metrics["estimator_error"] = analysis.estimator_errors(traj, xi)
    return report, metrics


def trajectory_csv(result: RunResult, cfg: ExperimentConfig) -> str:
    traj = result.trajectory
    n = traj.states[0].n
    buf = io.StringIO()
    for line in _header_lines(cfg, result.provenance):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = ["t"] + [f"z_{i}_{j}" for i in range(1, n + 1) for j in range(1, n + 1)]
    adaptive = traj.Xi is not None
    if adaptive:
        cols += [f"xi_{i}_{j}" for i in range(1, n + 1) for j in range(1, n + 1)]
    cols += ["V", "ne_error", "consensus_error", "estimator_error"]
    w.writerow(cols)
    m = traj.metrics
    for k, (t, s) in enumerate(zip(traj.times, traj.states)):
        row = [repr(float(t))] + [repr(float(v)) for v in s.Z.ravel()]
        if adaptive:
            row += [repr(float(v)) for v in s.Xi.ravel()]
        est = repr(float(m["estimator_error"][k])) if adaptive else ""
        row += [repr(float(m["V"][k])), repr(float(m["ne_error"][k])),
                repr(float(m["consensus_error"][k])), est]
        w.writerow(row)
    return buf.getvalue()


def report_text(result: RunResult, cfg: ExperimentConfig) -> str:
    lines = _header_lines(cfg, result.provenance)
    lines += [
        f"stop_reason = {result.trajectory.stop_reason}",
        f"exit_code = {result.exit_code}",
        f"error_category = {result.error_category or 'none'}",
    ]
    return "\n".join(lines) + "\n" + result.report.to_text()


def report_csv(result: RunResult, cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    for line in _header_lines(cfg, result.provenance):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "stop_reason", "exit_code"] + analysis.ConvergenceReport.csv_header())
    w.writerow([repr(result.alpha), result.trajectory.stop_reason, result.exit_code]
               + result.report.csv_row())
    return buf.getvalue()


def write_artifacts(result: RunResult, cfg: ExperimentConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trajectory.csv").write_text(trajectory_csv(result, cfg))
    (out_dir / "report.txt").write_text(report_text(result, cfg))
    (out_dir / "report.csv").write_text(report_csv(result, cfg))
    (out_dir / "config.ini").write_text(cfg.to_ini(include_output=False))


def run(cfg: ExperimentConfig, out_dir: Path | None = None) -> RunResult:
    """Validate, integrate, analyze and write artifacts for one configuration."""
    problem = Problem.load(cfg.graph_path, cfg.game_path)
    alpha = problem.resolve_alpha(cfg.alpha, cfg.variant)
    if cfg.variant is Variant.BALANCED and not problem.spectral.balanced:
        raise AssumptionViolation(5, "the balanced variant needs a weight-balanced digraph")
    result = execute(problem, cfg, alpha)
    write_artifacts(result, cfg, Path(out_dir or cfg.output_dir))
    return result


SUMMARY_COLUMNS = [
    "index", "alpha_spec", "alpha", "exit_code", "error_category", "final_ne_error",
    "final_consensus_error", "fitted_rate", "fit_quality", "certified_rate",
    "certificate_passed",
]


def _sweep_row(args) -> dict[str, str]:
    idx, cfg, out_dir = args
    row = {"index": str(idx), "alpha_spec": cfg.alpha}
    try:
        res = run(cfg, out_dir)
    except NashSeekError as exc:
        code = EXIT_NUMERICAL if isinstance(exc, NumericalError) else EXIT_VALIDATION
        row.update(exit_code=str(code), error_category=exc.category)
        return row
    except OSError:
        row.update(exit_code=str(EXIT_IO), error_category="io")
        return row
    rep = res.report
    row.update(
        alpha=repr(res.alpha),
        exit_code=str(res.exit_code),
        error_category=res.error_category,
        final_ne_error=repr(rep.final_ne_error),
        final_consensus_error=repr(rep.final_consensus_error),
        fitted_rate=repr(rep.fitted_rate),
        fit_quality=repr(rep.fit_quality),
        certified_rate=repr(rep.certified_rate),
        certificate_passed=analysis._fmt(rep.certificate_passed),
    )
    return row


def sweep(cfg: ExperimentConfig, alphas, out_dir: Path | None = None, jobs: int = 1) -> list[dict[str, str]]:
    """One independent run per gain; failures are recorded per row, not raised."""
    alphas = list(alphas)
    if not alphas:
        raise ValidationError("sweep needs at least one alpha")
    out = Path(out_dir or cfg.output_dir)
    tasks = [(k, cfg.with_alpha(a), out / f"alpha_{k:03d}") for k, a in enumerate(alphas)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for line in _header_lines(cfg.with_alpha("sweep"), {}):
        buf.write(line + "\n")
    w = csv.DictWriter(buf, SUMMARY_COLUMNS, restval="", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    (out / "summary.csv").write_text(buf.getvalue())
    return rows


def inspect(g: DiGraph, game: QuadraticGame) -> dict[str, str]:
    """Diagnostics without integration."""
    info = {
        "nodes": str(g.n),
        "strongly_connected": str(digraph.is_strongly_connected(g)).lower(),
        "weight_balanced": str(digraph.is_weight_balanced(g)).lower(),
    }
    problem = Problem.build(g, game)
    info.update(provenance(problem, float("nan")))
    del info["resolved_alpha"]
    return info
