"""PNG figures for calibration sweeps and weight diagnostics."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {"standard": "-o", "weighted_paper": "--s", "weighted_tibshirani": ":^"}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_sweep(rows_by_model: dict[str, list[dict]], metric: str, path) -> Path:
    """One panel per model; one line per CP mode against alpha."""
    models = list(rows_by_model)
    fig, axes = plt.subplots(1, len(models), figsize=(4.5 * len(models), 3.6), squeeze=False,
                             sharey=True)
    for ax, model in zip(axes[0], models):
        rows = rows_by_model[model]
        for mode in dict.fromkeys(r["mode"] for r in rows):
            sub = sorted((r for r in rows if r["mode"] == mode), key=lambda r: r["alpha"])
            ax.plot([r["alpha"] for r in sub], [r[metric] for r in sub],
                    _STYLE.get(mode, "-o"), label=mode)
        if metric == "coverage":
            a = np.array(sorted({r["alpha"] for r in rows}))
            ax.plot(a, 1 - a, color="grey", lw=1, label="target 1-alpha")
        ax.set_title(model)
        ax.set_xlabel("alpha")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel(metric)
    axes[0][-1].legend(fontsize=8)
    return _save(fig, Path(path))


def plot_weights(weights: dict[str, np.ndarray], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.6))
    all_w = np.concatenate([np.asarray(w) for w in weights.values()])
    bins = np.logspace(np.log10(max(all_w.min(), 1e-3)), np.log10(all_w.max() * 1.01), 30)
    for name, w in weights.items():
        ax.hist(w, bins=bins, histtype="step", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("clipped density-ratio weight")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    return _save(fig, Path(path))


def plot_robustness(values: dict[str, np.ndarray], path) -> Path:
    """Overlaid robustness histograms, e.g. train vs deployment."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    lo = min(float(np.min(v)) for v in values.values())
    hi = max(float(np.max(v)) for v in values.values())
    bins = np.linspace(lo, hi if hi > lo else lo + 1, 30)
    for name, v in values.items():
        ax.hist(v, bins=bins, histtype="step", density=True, label=name)
    ax.axvline(0, color="grey", lw=1)
    ax.set_xlabel("robustness")
    ax.set_ylabel("density")
    ax.legend(fontsize=8)
    return _save(fig, Path(path))
