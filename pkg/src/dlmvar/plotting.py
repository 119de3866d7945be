"""Figure rendering for the analysis report.

Figures are drawn on bare :class:`matplotlib.figure.Figure` objects (Agg
canvas, no pyplot state) and saved as PNG with fixed metadata so repeated
runs write identical bytes.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

STYLE = {
    "figsize": (8.0, 4.5),
    "dpi": 100,
    "colors": ("#1f4e79", "#b03a2e", "#1e8449"),
    "band_alpha": 0.2,
}
_COMPONENT = ("V1 (observation)", "V2 (level)", "V3 (trend)")


def _new(nrows: int = 1, height: float | None = None):
    w, h = STYLE["figsize"]
    fig = Figure(figsize=(w, height or h * max(1, nrows * 0.6)), dpi=STYLE["dpi"])
    axes = fig.subplots(nrows, 1, sharex=True, squeeze=False)[:, 0]
    return fig, axes


def _save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def plot_series(path, values: np.ndarray) -> Path:
    fig, (ax,) = _new()
    t = np.arange(1, values.size + 1)
    ax.plot(t, values, color=STYLE["colors"][0], lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("X_t")
    ax.set_title("Observed series")
    return _save(fig, path)


def plot_differenced(path, diff, squared: bool = False) -> Path:
    fig, axes = _new(3)
    for k, ax in zip((1, 2, 3), axes):
        y = diff.series(k) ** 2 if squared else diff.series(k)
        ax.plot(diff.times(k), y, color=STYLE["colors"][k - 1], lw=0.8)
        if not squared:
            ax.axhline(0.0, color="0.5", lw=0.5)
        ax.set_ylabel(f"x{k}^2" if squared else f"x{k}")
    axes[0].set_title("Quadratic observables" if squared else "Mean-zero linear combinations")
    axes[-1].set_xlabel("t")
    return _save(fig, path)


def plot_trajectory(path, trajectory) -> Path:
    Ns = np.array([N for N, _ in trajectory])
    fig, axes = _new(3)
    for i, ax in enumerate(axes):
        mean = np.array([r.adjusted_mean[i] for _, r in trajectory])
        lo = np.array([r.lower[i] for _, r in trajectory])
        hi = np.array([r.upper[i] for _, r in trajectory])
        c = STYLE["colors"][i]
        ax.fill_between(Ns, lo, hi, color=c, alpha=STYLE["band_alpha"], lw=0)
        ax.plot(Ns, mean, color=c, lw=1.2)
        ax.axhline(trajectory[0][1].prior_mean[i], color="0.4", lw=0.6, ls="--")
        ax.set_ylabel(_COMPONENT[i])
    axes[0].set_title("Adjusted expectations with 2-sd bounds")
    axes[-1].set_xlabel("N")
    return _save(fig, path)


def plot_unbiased(path, est) -> Path:
    fig, axes = _new(3)
    for i, ax in enumerate(axes):
        ax.plot(est.times, est.running[:, i], color=STYLE["colors"][i], lw=1.0)
        ax.axhline(0.0, color="0.5", lw=0.5)
        ax.set_ylabel(_COMPONENT[i])
    axes[0].set_title("Running unbiased estimates")
    axes[-1].set_xlabel("N")
    return _save(fig, path)


def plot_forecast(path, result, title: str) -> Path:
    fig, (ax,) = _new(height=STYLE["figsize"][1])
    t = np.array([s.t for s in result.steps])
    lo = np.array([s.lower for s in result.steps])
    hi = np.array([s.upper for s in result.steps])
    ax.fill_between(t, lo, hi, color=STYLE["colors"][0], alpha=STYLE["band_alpha"], lw=0, label="2-sd interval")
    ax.plot(t, [s.level for s in result.steps], color=STYLE["colors"][0], lw=1, label="level")
    obs = np.array([s.observed for s in result.steps])
    out = ~np.array([s.inside for s in result.steps])
    ax.plot(t[~out], obs[~out], ".", color="0.2", ms=3)
    ax.plot(t[out], obs[out], "x", color=STYLE["colors"][1], ms=4, label="outside")
    ax.set_xlabel("t")
    ax.set_ylabel("X_t")
    ax.set_title(f"{title} (coverage {result.coverage:.3f})")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)

