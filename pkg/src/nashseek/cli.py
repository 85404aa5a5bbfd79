"""Command line interface: ``nashseek {run,sweep,inspect}``.

Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4 I/O failure.
Errors are printed to stderr as a single ``error category=... message=...`` line.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import digraph, experiment, game as gamemod
from .errors import AssumptionViolation, NashSeekError, NumericalError

log = logging.getLogger("nashseek")


def _error(exc: BaseException) -> int:
    if isinstance(exc, OSError):
        code, category = experiment.EXIT_IO, "io"
    elif isinstance(exc, NumericalError):
        code, category = experiment.EXIT_NUMERICAL, exc.category
    else:
        code, category = experiment.EXIT_VALIDATION, getattr(exc, "category", "validation")
    extra = f" assumption={exc.assumption}" if isinstance(exc, AssumptionViolation) else ""
    msg = str(exc).replace('"', "'")
    print(f'error category={category}{extra} message="{msg}"', file=sys.stderr)
    return code


def _load(args) -> experiment.ExperimentConfig:
    cfg = experiment.load_config(args.config)
    if getattr(args, "alpha", None) is not None:
        cfg = cfg.with_alpha(args.alpha)
    if args.out is not None:
        cfg = replace(cfg, output_dir=Path(args.out))
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    res = experiment.run(cfg)
    if not args.quiet:
        rep = res.report
        print(f"alpha = {res.alpha!r}")
        print(f"stop_reason = {res.trajectory.stop_reason}")
        print(rep.to_text(), end="")
        print(f"artifacts in {cfg.output_dir}")
    if res.exit_code:
        err = res.trajectory.error
        detail = str(err) if err is not None else "stop tolerance not reached before the horizon"
        print(f'error category={res.error_category} message="{detail}"', file=sys.stderr)
    return res.exit_code


def cmd_sweep(args) -> int:
    cfg = _load(args)
    alphas = [a.strip() for a in args.alphas.split(",") if a.strip()]
    rows = experiment.sweep(cfg, alphas, jobs=args.jobs)
    if not args.quiet:
        for row in rows:
            print(
                f"alpha={row.get('alpha', row['alpha_spec'])} exit={row['exit_code']} "
                f"ne_error={row.get('final_ne_error', '')} "
                f"certificate={row.get('certificate_passed', '')}"
            )
        print(f"summary in {cfg.output_dir / 'summary.csv'}")
    return experiment.EXIT_OK


def cmd_inspect(args) -> int:
    if args.config is not None:
        cfg = experiment.load_config(args.config)
        graph_path, game_path = cfg.graph_path, cfg.game_path
    else:
        graph_path, game_path = args.graph, args.game
    g = digraph.load_graph(graph_path)
    game = gamemod.load_game(game_path)
    for key, value in experiment.inspect(g, game).items():
        print(f"{key} = {value}")
    return experiment.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nashseek",
        description="Distributed Nash equilibrium seeking over directed graphs.",
    )
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate one configuration")
    r.add_argument("--config", required=True)
    r.add_argument("--alpha", help="real gain or auto:<margin>")
    r.add_argument("--out")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="one run per gain, plus summary.csv")
    s.add_argument("--config", required=True)
    s.add_argument("--alphas", required=True, help="comma separated reals or auto:<margin>")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_sweep)

    i = sub.add_parser("inspect", help="print graph and game diagnostics")
    i.add_argument("--config")
    i.add_argument("--graph")
    i.add_argument("--game")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "inspect" and args.config is None and not (args.graph and args.game):
        parser.error("inspect needs --config or both --graph and --game")
    if args.command == "sweep" and not [a for a in args.alphas.split(",") if a.strip()]:
        parser.error("--alphas needs at least one value")
    try:
        return args.func(args)
    except (NashSeekError, OSError) as exc:
        return _error(exc)


if __name__ == "__main__":
    sys.exit(main())
