"""Command-line entry point: ``stl-shiftconf <stage> --config PATH``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import nullcontext

from threadpoolctl import threadpool_limits

from .errors import ConfigError, DataError, HorizonError, ShiftConfError, TrainingError
from .pipeline import STAGES, ExperimentConfig, StageError, cmd_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING = 0, 2, 3, 4
THREADS_ENV = "STL_SHIFTCONF_THREADS"


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, TrainingError):
        return EXIT_TRAINING
    if isinstance(exc, (DataError, HorizonError)):
        return EXIT_DATA
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    # Remaining library errors (bad formula text, degenerate weights) are input problems.
    return EXIT_DATA if isinstance(exc, ShiftConfError) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stl-shiftconf",
        description="Learn STL classifiers under covariate shift and calibrate them with "
                    "(weighted) conformal prediction.",
    )
    p.add_argument("command", choices=[*STAGES, "pipeline"])
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    return p


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return threadpool_limits(limits=n)


def _summary(command: str, result) -> dict:
    if command == "gen":
        return {role: str(path) for role, path in result.items()}
    if command in ("train", "refine"):
        return {"formula": result.formula, "termination": result.termination,
                "steps": result.steps}
    if command == "calibrate":
        return {name: [{k: r[k] for k in ("alpha", "mode", "coverage", "inefficiency", "mcr")}
                       for r in rows] for name, rows in result["metrics"].items()}
    return {"formula_nominal": result["formula_nominal"],
            "formula_refined": result["formula_refined"],
            "jrd_bound_holds": result["jrd_bound"]["holds"],
            "seconds": round(result["timings"]["total"], 2)}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config, args.seed, args.out)
        if args.no_plots:
            cfg.plots = False
        with _thread_limit():
            fn = cmd_pipeline if args.command == "pipeline" else STAGES[args.command]
            if args.command != "gen":
                cfg.out.mkdir(parents=True, exist_ok=True)
            result = fn(cfg)
    except (ShiftConfError, ValueError) as exc:
        code = exit_code(exc) if isinstance(exc, ShiftConfError) else EXIT_CONFIG
        print(f"stl-shiftconf {args.command}: error: {exc}", file=sys.stderr)
        return code
    print(json.dumps(_summary(args.command, result), indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
