"""Configuration-driven stages: gen, train, refine, calibrate, pipeline.

Every stage reads and writes fixed file names inside the output directory, so
stages can be run one at a time or chained by ``cmd_pipeline``.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import conformal, plotting
from .data import LabeledDataset, load_csv, load_dataset, save_csv
from .divergence import JrdConfig
from .errors import ConfigError, DataError, ShiftConfError
from .learning import (
    LearnableFormula,
    TrainConfig,
    TrainReport,
    jrd_bound_terms,
    refine,
    select_skeleton,
)
from .scenarios import BUILTIN, ROLES, ShiftScenario, generate_scenario
from .stl import format_formula, parse, robustness_batch
from .stl.formula import Formula
from .weights import DensityRatioEstimator, Embedding, WeightConfig

DEFAULT_ALPHAS = (0.05, 0.1, 0.2)
ROLE_NAMES = tuple(r.value for r in ROLES)

FILES = {
    "formula_nominal": "formula_nominal.stl",
    "formula_refined": "formula_refined.stl",
    "model_nominal": "model_nominal.json",
    "model_refined": "model_refined.json",
    "train_report": "train_report.json",
    "refine_report": "refine_report.json",
    "metrics": "metrics.json",
    "sweep": "sweep.csv",
    "sweep_nominal": "sweep_nominal.csv",
    "report": "report.json",
    "timings": "timings.json",
}


class StageError(ShiftConfError):
    """Wraps a failure with the name of the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


# --------------------------------------------------------------------- config

def _section(d: Mapping, key: str) -> dict:
    v = d.get(key, {})
    if v is None:
        return {}
    if not isinstance(v, Mapping):
        raise ConfigError(f"'{key}' must be an object")
    return dict(v)


@dataclass
class ExperimentConfig:
    out: Path = Path("runs/default")
    seed: int = 0
    scenario: dict | None = field(default_factory=lambda: {"name": "naval"})
    data: dict = field(default_factory=dict)
    schema: dict | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    weights: WeightConfig = field(default_factory=WeightConfig)
    jrd: JrdConfig = field(default_factory=JrdConfig)
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    modes: tuple[str, ...] = conformal.MODES
    plots: bool = True

    KEYS = ("out", "seed", "scenario", "data", "schema", "train", "weights", "jrd", "alphas",
            "modes", "plots")

    @classmethod
    def from_dict(cls, d: Mapping, seed: int | None = None, out=None) -> "ExperimentConfig":
        if not isinstance(d, Mapping):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(cls.KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        seed = int(d.get("seed", 0) if seed is None else seed)
        data = _section(d, "data")
        bad_roles = set(data) - set(ROLE_NAMES)
        if bad_roles:
            raise ConfigError(f"unknown data roles: {sorted(bad_roles)}")
        scenario = d.get("scenario", None if data else {"name": "naval"})
        if scenario is not None:
            scenario = {"name": scenario} if isinstance(scenario, str) else dict(scenario)
            if "seed" in scenario:
                raise ConfigError("set the top-level 'seed'; scenario seeds are derived from it")
            if scenario.get("name", "naval") not in BUILTIN:
                raise ConfigError(f"unknown scenario {scenario.get('name')!r}; "
                                  f"choose from {sorted(BUILTIN)}")
            if set(data) == set(ROLE_NAMES):
                raise ConfigError("both a scenario and data paths for every role were given")
        elif set(data) != set(ROLE_NAMES):
            missing = sorted(set(ROLE_NAMES) - set(data))
            raise ConfigError(f"no scenario and no data path for roles {missing}")

        train = _section(d, "train")
        if "seed" in train:
            raise ConfigError("set the top-level 'seed'; the training seed is derived from it")
        train_cfg = TrainConfig.from_dict({**train, "seed": seed})

        w = _section(d, "weights")
        try:
            emb = Embedding(**_section(w, "embedding"))
            w.pop("embedding", None)
            weight_cfg = WeightConfig(embedding=emb, **w)
            jrd_cfg = JrdConfig(**_section(d, "jrd"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

        alphas = d.get("alphas", list(DEFAULT_ALPHAS))
        if not isinstance(alphas, list) or not alphas:
            raise ConfigError("'alphas' must be a nonempty list")
        try:
            alphas = tuple(float(a) for a in alphas)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad alpha value: {exc}") from exc
        if not all(0 < a < 1 for a in alphas):
            raise ConfigError("every alpha must lie in (0, 1)")
        modes = d.get("modes", list(conformal.MODES))
        if not isinstance(modes, list) or not modes or any(m not in conformal.MODES for m in modes):
            raise ConfigError(f"'modes' must be a nonempty list drawn from {conformal.MODES}")
        out = Path(out if out is not None else d.get("out", "runs/default"))
        return cls(out, seed, scenario, data, d.get("schema"), train_cfg, weight_cfg, jrd_cfg,
                   alphas, tuple(modes), bool(d.get("plots", True)))

    @classmethod
    def load(cls, path, seed: int | None = None, out=None) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(d, seed, out)

    def scenario_obj(self) -> ShiftScenario:
        s = dict(self.scenario or {"name": "naval"})
        s["seed"] = self.seed
        return ShiftScenario.from_dict(s)

    def to_dict(self) -> dict:
        """All options with defaults filled in; the output directory is left
        out so that reports do not depend on where they were written."""
        w = self.weights
        return {
            "seed": self.seed,
            "scenario": ({k: v for k, v in self.scenario_obj().to_dict().items() if k != "seed"}
                         if self.scenario is not None else None),
            "data": dict(self.data),
            "schema": self.schema,
            "train": {k: v for k, v in self.train.to_dict().items() if k != "seed"},
            "weights": {"k": w.k, "omega_min": w.omega_min, "omega_max": w.omega_max,
                        "embedding": {"kind": w.embedding.kind, "n_points": w.embedding.n_points}},
            "jrd": {"bandwidth": self.jrd.bandwidth},
            "alphas": list(self.alphas),
            "modes": list(self.modes),
            "plots": self.plots,
        }


# ------------------------------------------------------------------- helpers

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        # JSON has no infinity; thresholds use "inf"/"-inf" strings.
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _role_path(out: Path, role: str) -> Path:
    return out / f"{role}.csv"


def load_role(cfg: ExperimentConfig, role: str) -> LabeledDataset:
    path = _role_path(cfg.out, role)
    if not path.exists():
        raise DataError(f"missing {path}; run the 'gen' stage first")
    return load_csv(path, role=role)


def load_roles(cfg: ExperimentConfig, *roles: str) -> list[LabeledDataset]:
    return [load_role(cfg, r) for r in roles]


def _write_formula(f: Formula, path: Path) -> None:
    path.write_text(format_formula(f) + "\n")


def read_formula(path: Path) -> Formula:
    if not path.exists():
        raise ConfigError(f"missing formula file {path}")
    return parse(path.read_text().strip())


def _load_model(path: Path) -> tuple[LearnableFormula, np.ndarray]:
    if not path.exists():
        raise ConfigError(f"missing model file {path}; run the previous stage first")
    return LearnableFormula.from_dict(read_json(path))


def write_sweep_csv(rows: list[dict], path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "mode", "coverage", "inefficiency", "mcr"])
        for r in rows:
            w.writerow([repr(r["alpha"]), r["mode"], repr(r["coverage"]),
                        repr(r["inefficiency"]), repr(r["mcr"])])


def _mcr(f: Formula, ds: LabeledDataset) -> float:
    rho = robustness_batch(f, ds.states)
    return float(np.mean(np.where(rho > 0, 1, -1) != ds.labels))


# -------------------------------------------------------------------- stages

def cmd_gen(cfg: ExperimentConfig) -> dict[str, Path]:
    """Write train/dep/cal/test CSVs; generated roles come from the scenario,
    the others are copied from their data paths."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    generated = None
    if cfg.scenario is not None and set(cfg.data) != set(ROLE_NAMES):
        generated = dict(zip(ROLE_NAMES, generate_scenario(cfg.scenario_obj())))
    paths = {}
    for role in ROLE_NAMES:
        if role in cfg.data:
            ds = load_dataset(cfg.data[role], role=role, schema=cfg.schema)
        else:
            ds = generated[role]
        paths[role] = _role_path(cfg.out, role)
        save_csv(ds, paths[role])
    return paths


def cmd_train(cfg: ExperimentConfig) -> TrainReport:
    (train,) = load_roles(cfg, "train")
    lf, theta, report = select_skeleton(train, cfg.train)
    formula = lf.materialize(theta)
    report.extras["mcr_train"] = _mcr(formula, train)
    _write_formula(formula, cfg.out / FILES["formula_nominal"])
    write_json(lf.to_dict(theta), cfg.out / FILES["model_nominal"])
    write_json(report.to_dict(), cfg.out / FILES["train_report"])
    return report


def _estimator(cfg: ExperimentConfig, train, dep) -> DensityRatioEstimator:
    return DensityRatioEstimator(train, dep, cfg.weights)


def cmd_refine(cfg: ExperimentConfig) -> TrainReport:
    train, dep, cal = load_roles(cfg, "train", "dep", "cal")
    lf, theta0 = _load_model(cfg.out / FILES["model_nominal"])
    res = refine(lf, theta0, train, dep, cal, cfg.train, cfg.weights, cfg.jrd)
    report = res.report
    report.extras["jrd_bound"] = jrd_bound_terms(res.objective, theta0, res.theta)
    report.extras["weights_dep"] = res.dep_weights.summary()
    report.extras["weights_cal"] = res.cal_weights.summary()
    formula = lf.materialize(res.theta)
    report.extras["mcr_train"] = _mcr(formula, train)
    report.extras["mcr_dep"] = _mcr(formula, dep)
    _write_formula(formula, cfg.out / FILES["formula_refined"])
    write_json(lf.to_dict(res.theta), cfg.out / FILES["model_refined"])
    write_json(report.to_dict(), cfg.out / FILES["refine_report"])
    res.dep_weights.to_csv(cfg.out / "weights_dep.csv")
    res.cal_weights.to_csv(cfg.out / "weights_cal.csv")
    return report


def cmd_calibrate(cfg: ExperimentConfig) -> dict:
    """Alpha x mode sweeps for the refined formula and, if present, the nominal one."""
    train, dep, cal, test = load_roles(cfg, *ROLE_NAMES)
    formulas = {}
    for name in ("refined", "nominal"):
        path = cfg.out / FILES[f"formula_{name}"]
        if path.exists():
            formulas[name] = read_formula(path)
    if not formulas:
        raise ConfigError(f"no formula file in {cfg.out}; run 'train' (and 'refine') first")
    est = _estimator(cfg, train, dep)
    cal_w = est.weights(cal)
    test_w = est.weights_like(test, cal_w)
    metrics, summaries = {}, {}
    for name, f in formulas.items():
        rows = conformal.sweep(f, cal, test, cfg.alphas, cfg.modes, cal_w, test_w)
        metrics[name] = rows
        summaries[name] = {"formula": format_formula(f), "mcr_test": _mcr(f, test),
                           "mcr_cal": _mcr(f, cal)}
        write_sweep_csv(rows, cfg.out / FILES["sweep" if name == "refined" else "sweep_nominal"])
    out = {"metrics": metrics, "formulas": summaries,
           "weights_cal": cal_w.summary(), "weights_test": test_w.summary()}
    write_json(out, cfg.out / FILES["metrics"])
    if cfg.plots:
        out["figures"] = [p.name for p in _figures(cfg, formulas, metrics, train, dep, test,
                                                   cal_w, test_w)]
    return out


def _figures(cfg, formulas, metrics, train, dep, test, cal_w, test_w) -> list[Path]:
    figs = [
        plotting.plot_sweep(metrics, "coverage", cfg.out / "coverage.png"),
        plotting.plot_sweep(metrics, "inefficiency", cfg.out / "inefficiency.png"),
        plotting.plot_weights({"cal": cal_w.clipped, "test": test_w.clipped},
                              cfg.out / "weights.png"),
    ]
    for name, f in formulas.items():
        figs.append(plotting.plot_robustness(
            {"train": robustness_batch(f, train.states), "dep": robustness_batch(f, dep.states),
             "test": robustness_batch(f, test.states)},
            cfg.out / f"robustness_{name}.png"))
    return figs


STAGES = {"gen": cmd_gen, "train": cmd_train, "refine": cmd_refine, "calibrate": cmd_calibrate}


def cmd_pipeline(cfg: ExperimentConfig) -> dict:
    """Run every stage in order and write ``report.json``.

    Wall-clock timings go to ``timings.json`` so that the report itself is a
    pure function of the config and seed.
    """
    timings = {}
    results = {}
    for name, fn in STAGES.items():
        t0 = time.perf_counter()
        try:
            results[name] = fn(cfg)
        except ShiftConfError as exc:
            raise StageError(name, exc) from exc
        timings[name] = time.perf_counter() - t0
    train_rep: TrainReport = results["train"]
    refine_rep: TrainReport = results["refine"]
    cal = results["calibrate"]
    report = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "formula_nominal": train_rep.formula,
        "formula_refined": refine_rep.formula,
        "train_report": train_rep.to_dict(),
        "refine_report": refine_rep.to_dict(),
        "jrd_bound": refine_rep.extras["jrd_bound"],
        "weights": {"dep": refine_rep.extras["weights_dep"], "cal": cal["weights_cal"],
                    "test": cal["weights_test"]},
        "evaluation": cal["formulas"],
        "metrics": cal["metrics"],
    }
    write_json(report, cfg.out / FILES["report"])
    timings["total"] = sum(timings.values())
    write_json(timings, cfg.out / FILES["timings"])
    report["timings"] = timings
    return report
