"""Synthetic covariate-shift scenarios.

Every scenario renders 2-D vessel-like trajectories from a handful of latent
variables and labels them with one fixed ground-truth formula. Source and
deployment samplers differ only in the latent distributions, so the labelling
rule P(Y | X) is shared by construction.

Latents per trajectory::

    start_x ~ N(start_x_mean, start_x_sd)        nuisance, same in both
    goal_x  ~ mixture of two normals             shifted
    start_y ~ mixture of two normals             shifted
    drift_y ~ N(0, drift_sd)                     nuisance
    wiggle  ~ N(0, wiggle_sd)                    nuisance

With ``noise == 0`` the map from latents to states is injective and the
latents are read back off the states, which gives an exact density ratio.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from .data import LabeledDataset, Role
from .errors import ScenarioError
from .stl import classify_batch, parse

GROUND_TRUTH_TEXT = "F[45,60](x0 <= 38.6) and G[10,20](x1 >= 24.1)"
GROUND_TRUTH = parse(GROUND_TRUTH_TEXT)

ROLES = (Role.TRAIN, Role.DEP, Role.CAL, Role.TEST)
DEFAULT_SIZES = {"train": 200, "dep": 100, "cal": 200, "test": 500}

_BASE = {
    "start_x_mean": 70.0,
    "start_x_sd": 2.0,
    "drift_sd": 1.5,
    "wiggle_sd": 0.8,
    "mode_weight": 0.5,
    "noise": 0.0,
}

BUILTIN = {
    # Bimodal source that is thin around the true decision boundary; deployment
    # concentrates on it while staying inside the source support.
    "naval": (
        {**_BASE, "goal_x_modes": [32.0, 52.0], "goal_x_sd": 5.0,
         "start_y_modes": [32.0, 18.0], "start_y_sd": 4.0, "mode_weight": 0.6, "noise": 0.3},
        {**_BASE, "goal_x_modes": [38.0, 38.0], "goal_x_sd": 5.0,
         "start_y_modes": [26.0, 26.0], "start_y_sd": 4.0, "noise": 0.3},
    ),
    # Stress case: the source has an almost empty band where deployment lives,
    # so density ratios are extreme.
    "naval_gap": (
        {**_BASE, "goal_x_modes": [30.0, 60.0], "goal_x_sd": 3.0,
         "start_y_modes": [36.0, 18.0], "start_y_sd": 2.5, "mode_weight": 0.6, "noise": 0.3},
        {**_BASE, "goal_x_modes": [37.0, 37.0], "goal_x_sd": 5.0,
         "start_y_modes": [27.0, 27.0], "start_y_sd": 4.0, "noise": 0.3},
    ),
    # Noise-free unimodal shift with an exact density ratio.
    "gaussian": (
        {**_BASE, "goal_x_modes": [40.0, 40.0], "goal_x_sd": 8.0,
         "start_y_modes": [30.0, 30.0], "start_y_sd": 6.0},
        {**_BASE, "goal_x_modes": [34.0, 34.0], "goal_x_sd": 5.0,
         "start_y_modes": [24.0, 24.0], "start_y_sd": 4.0},
    ),
}
BUILTIN["naval_noshift"] = (BUILTIN["naval"][0], BUILTIN["naval"][0])
BUILTIN["gaussian_noshift"] = (BUILTIN["gaussian"][0], BUILTIN["gaussian"][0])


@dataclass(frozen=True)
class ShiftScenario:
    generator: str = "naval"
    source: Mapping = field(default_factory=lambda: dict(BUILTIN["naval"][0]))
    deployment: Mapping = field(default_factory=lambda: dict(BUILTIN["naval"][1]))
    seed: int = 7
    sizes: Mapping = field(default_factory=lambda: dict(DEFAULT_SIZES))
    T: int = 60

    @classmethod
    def builtin(cls, name: str = "naval", seed: int = 7, sizes: Mapping | None = None,
                T: int = 60) -> "ShiftScenario":
        if name not in BUILTIN:
            raise ScenarioError(f"unknown scenario {name!r}; choose from {sorted(BUILTIN)}")
        src, dep = BUILTIN[name]
        return cls(name, dict(src), dict(dep), int(seed), dict(sizes or DEFAULT_SIZES), T)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ShiftScenario":
        d = dict(d)
        name = d.get("name", d.get("generator", "naval"))
        base = cls.builtin(name if name in BUILTIN else "naval", d.get("seed", 7),
                           d.get("sizes"), d.get("T", 60))
        return dataclasses.replace(
            base,
            generator=name,
            source={**base.source, **d.get("source", {})},
            deployment={**base.deployment, **d.get("deployment", {})},
        )

    def to_dict(self) -> dict:
        return {
            "name": self.generator,
            "source": dict(self.source),
            "deployment": dict(self.deployment),
            "seed": self.seed,
            "sizes": dict(self.sizes),
            "T": self.T,
        }

    def params(self, role: Role | str) -> Mapping:
        return self.source if Role(role) in (Role.TRAIN, Role.CAL) else self.deployment


def _mixture(rng, n, modes, sd, w):
    first = rng.random(n) < w
    centre = np.where(first, modes[0], modes[1])
    return centre + sd * rng.standard_normal(n)


def _mixture_logpdf(x, modes, sd, w):
    if sd <= 0:
        raise ScenarioError("density ratio needs positive standard deviations")
    comp = np.stack([
        np.log(w) - 0.5 * ((x - modes[0]) / sd) ** 2,
        np.log1p(-w) - 0.5 * ((x - modes[1]) / sd) ** 2 if w < 1 else np.full_like(x, -np.inf),
    ])
    return logsumexp(comp, axis=0) - np.log(sd * np.sqrt(2 * np.pi))


def _validate(p: Mapping) -> None:
    for key in ("start_x_sd", "goal_x_sd", "start_y_sd", "drift_sd", "wiggle_sd", "noise"):
        if p[key] < 0:
            raise ScenarioError(f"{key} must be nonnegative, got {p[key]}")
    if not 0 < p["mode_weight"] <= 1:
        raise ScenarioError(f"mode_weight must lie in (0, 1], got {p['mode_weight']}")


def sample_latents(params: Mapping, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    p = params
    return {
        "start_x": p["start_x_mean"] + p["start_x_sd"] * rng.standard_normal(n),
        "goal_x": _mixture(rng, n, p["goal_x_modes"], p["goal_x_sd"], p["mode_weight"]),
        "start_y": _mixture(rng, n, p["start_y_modes"], p["start_y_sd"], p["mode_weight"]),
        "drift_y": p["drift_sd"] * rng.standard_normal(n),
        "wiggle": p["wiggle_sd"] * rng.standard_normal(n),
    }


def render(latents: Mapping[str, np.ndarray], T: int, noise: float,
           rng: np.random.Generator) -> np.ndarray:
    """States ``(n, T+1, 2)`` for the given latents."""
    u = 0.5 - 0.5 * np.cos(np.pi * np.arange(T + 1) / T)
    lat = {k: np.asarray(v)[:, None] for k, v in latents.items()}
    x0 = lat["start_x"] + (lat["goal_x"] - lat["start_x"]) * u
    x1 = lat["start_y"] + lat["drift_y"] * u + lat["wiggle"] * np.sin(4 * np.pi * u)
    states = np.stack([x0, x1], axis=-1)
    if noise > 0:
        states = states + noise * rng.standard_normal(states.shape)
    return states


def latents_from_states(states: np.ndarray) -> dict[str, np.ndarray]:
    """Invert ``render`` for noise-free trajectories (shifted latents only)."""
    X = np.asarray(states, dtype=float)
    if X.ndim == 2:
        X = X[None]
    return {"goal_x": X[:, -1, 0], "start_y": X[:, 0, 1]}


def log_density_ratio(scenario: ShiftScenario, states) -> np.ndarray:
    """Exact ``log p_dep(X) - log p_train(X)`` for noise-free scenarios.

    The nuisance latents share one distribution and cancel; the map from
    latents to states is injective, so its Jacobian cancels as well.
    """
    for p in (scenario.source, scenario.deployment):
        if p["noise"] != 0:
            raise ScenarioError("exact density ratio requires a noise-free scenario")
    z = latents_from_states(states)
    out = np.zeros_like(z["goal_x"])
    for key in ("goal_x", "start_y"):
        dep, src = scenario.deployment, scenario.source
        out += _mixture_logpdf(z[key], dep[f"{key}_modes"], dep[f"{key}_sd"], dep["mode_weight"])
        out -= _mixture_logpdf(z[key], src[f"{key}_modes"], src[f"{key}_sd"], src["mode_weight"])
    return out


def density_ratio(scenario: ShiftScenario, states) -> np.ndarray:
    return np.exp(log_density_ratio(scenario, states))


def sample_role(scenario: ShiftScenario, role: Role | str, n: int,
                rng: np.random.Generator, prefix: str | None = None) -> LabeledDataset:
    role = Role(role)
    params = scenario.params(role)
    _validate(params)
    latents = sample_latents(params, n, rng)
    states = render(latents, scenario.T, params["noise"], rng)
    labels = classify_batch(GROUND_TRUTH, states)
    prefix = role.value if prefix is None else prefix
    ids = [f"{prefix}-{i:05d}" for i in range(n)]
    return LabeledDataset(ids, states, labels, role)


def generate_scenario(scenario: ShiftScenario) -> tuple[LabeledDataset, ...]:
    """Draw (train, dep, cal, test); train/cal from the source sampler,
    dep/test from the deployment sampler. Pure function of the scenario."""
    if scenario.T < 60:
        raise ScenarioError(f"ground-truth formula needs T >= 60, got T={scenario.T}")
    streams = np.random.SeedSequence(int(scenario.seed)).spawn(len(ROLES))
    out = []
    for role, ss in zip(ROLES, streams):
        n = int(scenario.sizes.get(role.value, 0))
        if n < 1:
            raise ScenarioError(f"size for role {role.value!r} must be >= 1, got {n}")
        ds = sample_role(scenario, role, n, np.random.default_rng(ss))
        pos = int(np.sum(ds.labels == 1))
        if pos == 0 or pos == n:
            raise ScenarioError(
                f"degenerate scenario: {role.value} split is all "
                f"{'positive' if pos else 'negative'} ({n} samples); "
                f"check the {'source' if role in (Role.TRAIN, Role.CAL) else 'deployment'} "
                f"means and noise scales"
            )
        out.append(ds)
    return tuple(out)
