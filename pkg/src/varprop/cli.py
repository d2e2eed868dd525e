"""Command line entry point: ``varprop run``, ``varprop emit-circuit`` and ``varprop params``."""

from __future__ import annotations

import argparse
import logging
import sys

from .ansatz import ProductAnsatz
from .circuits import emit_qim_ansatz, export_text
from .engine import integrate_l1, integrate_l2
from .experiments import (
    ConfigError,
    build_split,
    cubic_coefficients,
    format_csv,
    load_config,
    run_experiment,
    write_csv,
)
from .validation import SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

log = logging.getLogger("varprop")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="varprop", description="Variational product-formula experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config and write CSV")
    run.add_argument("config")
    run.add_argument("-o", "--output", help="CSV path (default: config 'output' or stdout)")
    run.add_argument("-v", "--verbose", action="store_true")

    emit = sub.add_parser("emit-circuit", help="emit the gate program of the first pattern at c(tau)")
    emit.add_argument("config")
    emit.add_argument("-o", "--output", help="text path (default: stdout)")
    emit.add_argument("-v", "--verbose", action="store_true")

    par = sub.add_parser("params", help="variational parameters as CSV")
    par.add_argument("config")
    par.add_argument("--approx", action="store_true", help="use the closed-form cubic parameters")
    par.add_argument("--coefficients", action="store_true", help="with --approx, print linear/cubic coefficients")
    par.add_argument("-o", "--output")
    par.add_argument("-v", "--verbose", action="store_true")
    return p


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    table = run_experiment(cfg)
    out = args.output or cfg.output
    if out:
        write_csv(table, out)
        log.info("wrote %d rows x %d columns to %s", table.rows.shape[0], len(table.columns), out)
    else:
        sys.stdout.write(format_csv(table))
    return EXIT_OK


def _cmd_emit(args) -> int:
    cfg = load_config(args.config)
    if cfg.model.family != "qim":
        raise ConfigError("model.family: circuit emission supports qim only")
    if cfg.time.tau is None:
        raise ConfigError("time.tau: required to freeze parameters")
    split = build_split(cfg.model, cfg.model.sizes[0])
    pattern = cfg.ansatz.patterns[0]
    ansatz = ProductAnsatz.palindromic(split, pattern) if cfg.ansatz.shared else ProductAnsatz.from_pattern(split, pattern)
    integrate = integrate_l2 if "var_l2" in cfg.methods and "var_l1" not in cfg.methods else integrate_l1
    traj = integrate(ansatz, split.H, cfg.time.tau, [cfg.time.tau], rtol=cfg.tolerances.rtol, atol=cfg.tolerances.atol)
    _emit(export_text(emit_qim_ansatz(ansatz, traj.final)), args.output)
    return EXIT_OK


def _cmd_params(args) -> int:
    cfg = load_config(args.config)
    if args.coefficients:
        if not args.approx:
            raise ConfigError("--coefficients requires --approx")
        table = cubic_coefficients(cfg)
    else:
        method = "var_cubic" if args.approx else None
        cfg = cfg.model_copy(update={"observable": "params", "methods": [method] if method else [m for m in cfg.methods if m.startswith("var")] or ["var_l1"]})
        table = run_experiment(cfg)
    _emit(format_csv(table), args.output)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "emit-circuit": _cmd_emit, "params": _cmd_params}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
