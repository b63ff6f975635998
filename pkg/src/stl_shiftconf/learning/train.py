"""Warm-start training and shift-aware refinement."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..divergence import JrdConfig
from ..errors import ConfigError, TrainingError
from ..stl.formula import Formula
from ..stl.syntax import format_formula, parse
from ..weights import DensityRatioEstimator, WeightConfig
from .learnable import LearnableFormula, standardization
from .objective import Objective, resolve_sigma

# Operator trees the nominal stage chooses from; numbers are placeholders that
# random initialisation overwrites.
SKELETON_FAMILY = (
    "F[0,60](x0 >= 0)",
    "G[0,60](x0 >= 0)",
    "F[0,60](x0 >= 0) and G[0,60](x0 >= 0)",
    "F[0,60](x0 >= 0) or G[0,60](x0 >= 0)",
    "F[0,60](x0 >= 0 and x0 >= 0)",
    "G[0,60](x0 >= 0 and x0 >= 0)",
    "F[0,30](G[0,30](x0 >= 0))",
    "G[0,30](F[0,30](x0 >= 0))",
)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    max_steps: int = 600
    beta0: float = 10.0
    beta_factor: float = 2.0
    beta_every: int = 200
    beta_max: float = 160.0
    lambda_jrd: float = 0.1
    ess_tol: float = 0.01
    inner_steps: int = 100
    max_outer: int = 10
    seed: int = 0
    relaxed: bool = True
    kappa: float = 2.0
    checkpoint_every: int = 50
    val_fraction: float = 0.2
    skeletons: tuple[str, ...] = SKELETON_FAMILY

    def __post_init__(self):
        for name in ("lr", "beta0", "beta_max", "ess_tol", "kappa"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.beta_factor < 1:
            raise ConfigError("beta_factor must be >= 1")
        for name in ("beta_every", "inner_steps", "max_outer", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be nonnegative")
        if self.lambda_jrd < 0:
            raise ConfigError("lambda_jrd must be nonnegative")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")
        if not self.skeletons:
            raise ConfigError("skeleton family is empty")
        object.__setattr__(self, "skeletons", tuple(self.skeletons))

    def beta(self, step: int) -> float:
        return min(self.beta0 * self.beta_factor ** (step // self.beta_every), self.beta_max)

    @property
    def final_beta(self) -> float:
        return self.beta(max(self.max_steps - 1, 0))

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train options: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        out["skeletons"] = list(self.skeletons)
        return out


@dataclass
class TrainReport:
    loss_train: list[float] = field(default_factory=list)
    loss_dep: list[float] = field(default_factory=list)
    loss_jrd: list[float] = field(default_factory=list)
    ess_trace: list[float] = field(default_factory=list)
    steps: int = 0
    termination: str = ""
    formula: str = ""
    theta: list[float] = field(default_factory=list)
    best_checkpoint: list[float] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def record(self, parts) -> None:
        self.loss_train.append(float(parts[0]))
        self.loss_dep.append(float(parts[1]))
        self.loss_jrd.append(float(parts[2]))
        self.steps += 1

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, allow_nan=False)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        return cls(**d)


class Adam:
    def __init__(self, theta, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
        self.theta = np.array(theta, dtype=float)
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros_like(self.theta)
        self.v = np.zeros_like(self.theta)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        self.theta = self.theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return self.theta


def _check(total: float, step: int) -> None:
    if not math.isfinite(total):
        raise TrainingError(f"objective became non-finite at step {step}", step)


def _descend(obj: Objective, theta, cfg: TrainConfig, steps: int, report: TrainReport,
             beta_of_step, judge: Objective, step0: int = 0) -> np.ndarray:
    """Adam on ``obj`` for ``steps`` steps; returns the checkpoint that scores
    best under ``judge`` (a fixed-temperature copy of the objective)."""
    opt = Adam(theta, cfg.lr)
    best_theta = np.array(theta, dtype=float)
    best = judge(best_theta)
    _check(best, step0)
    report.best_checkpoint.append(best)
    for i in range(steps):
        o = obj.with_beta(beta_of_step(step0 + i))
        total, parts, grad = o.evaluate(opt.theta, need_grad=True)
        _check(total, step0 + i)
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"gradient became non-finite at step {step0 + i}", step0 + i)
        report.record(parts)
        opt.theta = obj.lf.project(opt.step(grad))
        if (i + 1) % cfg.checkpoint_every == 0 or i + 1 == steps:
            score = judge(opt.theta)
            _check(score, step0 + i + 1)
            if score < best:
                best, best_theta = score, opt.theta.copy()
            report.best_checkpoint.append(best)
    return best_theta


def make_learnable(skeleton: Formula | str, train, cfg: TrainConfig) -> LearnableFormula:
    if isinstance(skeleton, str):
        skeleton = parse(skeleton)
    mu, sd = standardization(train.states)
    return LearnableFormula(skeleton, train.T, train.d, cfg.relaxed, mu, sd, cfg.kappa)


def _skeleton_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def train_nominal(skeleton, train, cfg: TrainConfig = TrainConfig(),
                  rng: np.random.Generator | None = None,
                  lf: LearnableFormula | None = None) -> tuple[LearnableFormula, np.ndarray, TrainReport]:
    """Adam on the mean logistic loss over ``train`` from a seeded random start.

    Returns the learnable formula, the best checkpoint (scored at the final
    temperature) and the report.
    """
    lf = lf or make_learnable(skeleton, train, cfg)
    rng = rng or np.random.default_rng(cfg.seed)
    obj = Objective(lf, train, beta=cfg.beta0)
    theta = lf.random_theta(rng, obj._Z_train)
    report = TrainReport()
    judge = obj.with_beta(cfg.final_beta)
    theta = _descend(obj, theta, cfg, cfg.max_steps, report, cfg.beta, judge)
    report.termination = "max_steps"
    report.theta = theta.tolist()
    report.formula = format_formula(lf.materialize(theta))
    return lf, theta, report


def select_skeleton(train, cfg: TrainConfig = TrainConfig()):
    """Fit every skeleton in the family on a fit split and keep the one with
    the lowest validation loss; the winner is retrained on all of ``train``."""
    n = len(train)
    perm = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 7919])).permutation(n)
    n_val = max(1, int(round(cfg.val_fraction * n)))
    val_idx, fit_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    fit, val = train.subset(fit_idx), train.subset(val_idx)
    scores = []
    for i, text in enumerate(cfg.skeletons):
        lf = make_learnable(text, train, cfg)
        _, theta, _ = train_nominal(None, fit, cfg, _skeleton_seed(cfg.seed, i), lf)
        val_loss = Objective(lf, val, beta=cfg.final_beta)(theta)
        scores.append(float(val_loss) if math.isfinite(val_loss) else math.inf)
    best = int(np.argmin(scores))
    lf = make_learnable(cfg.skeletons[best], train, cfg)
    lf, theta, report = train_nominal(None, train, cfg, _skeleton_seed(cfg.seed, best), lf)
    report.extras["skeleton"] = cfg.skeletons[best]
    report.extras["validation_losses"] = dict(zip(cfg.skeletons, scores))
    return lf, theta, report


@dataclass
class RefineResult:
    theta: np.ndarray
    report: TrainReport
    dep_weights: object
    cal_weights: object
    objective: Objective


def refine(lf: LearnableFormula, theta0, train, dep, cal, cfg: TrainConfig = TrainConfig(),
           weight_cfg: WeightConfig = WeightConfig(),
           jrd_cfg: JrdConfig = JrdConfig()) -> RefineResult:
    """Shift-aware refinement from the warm start ``theta0``.

    Each outer iteration recomputes density-ratio weights for dep and cal,
    fixes the JRD bandwidth at the current robustness values, runs
    ``inner_steps`` Adam steps and records ESS/n of the calibration weights.
    The loop stops once ESS/n moves by at most ``ess_tol`` (from the second
    iteration on) or after ``max_outer`` iterations.

    The returned theta is the candidate (warm start or end of an outer
    iteration) with the lowest objective under the final weights, bandwidth
    and temperature, so it never scores worse than ``theta0`` there.
    """
    estimator = DensityRatioEstimator(train, dep, weight_cfg)
    report = TrainReport()
    beta = cfg.final_beta
    theta = np.array(theta0, dtype=float)
    candidates = [theta.copy()]
    step = 0
    dep_w = cal_w = obj = None
    for t in range(1, cfg.max_outer + 1):
        dep_w = estimator.weights(dep)
        cal_w = estimator.weights(cal)
        obj = Objective(lf, train, dep, dep_w, beta, cfg.lambda_jrd)
        obj.sigma = resolve_sigma(obj, theta, jrd_cfg)
        theta = _descend(obj, theta, cfg, cfg.inner_steps, report, lambda _s: beta, obj, step)
        step += cfg.inner_steps
        candidates.append(theta.copy())
        report.ess_trace.append(cal_w.ess_ratio)
        if t >= 2 and abs(report.ess_trace[-1] - report.ess_trace[-2]) <= cfg.ess_tol:
            report.termination = "ess_converged"
            break
    else:
        report.termination = "max_iterations"
    scores = [obj(c) for c in candidates]
    best = int(np.argmin(scores))
    theta_star = candidates[best]
    report.theta = theta_star.tolist()
    report.formula = format_formula(lf.materialize(theta_star))
    report.extras.update({
        "outer_iterations": len(report.ess_trace),
        "selected_candidate": best,
        "sigma": obj.sigma,
        "beta": beta,
        "candidate_objectives": scores,
    })
    return RefineResult(theta_star, report, dep_w, cal_w, obj)


def jrd_bound_terms(obj: Objective, theta_train, theta_star) -> dict:
    """Both sides of ``JRD(t*) <= (L(t_train) - L(t*)) / lambda + JRD(t_train)``
    with ``L`` the weighted two-term loss of ``obj``."""
    _, (a0, b0, j0), _ = obj.evaluate(theta_train)
    _, (a1, b1, j1), _ = obj.evaluate(theta_star)
    lam = obj.lambda_jrd
    rhs = ((a0 + b0) - (a1 + b1)) / lam + j0 if lam > 0 else math.inf
    return {
        "jrd_star": j1,
        "jrd_train": j0,
        "loss_star": a1 + b1,
        "loss_train": a0 + b0,
        "lambda_jrd": lam,
        "rhs": rhs,
        "holds": bool(j1 <= rhs + 1e-9),
    }
