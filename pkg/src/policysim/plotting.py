"""Figures written next to the CLI tables. Rendering is headless and byte-stable."""
from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .coordination import ExpMixture
from .its.pipeline import ItsReport
from .sim.ensemble import EnsembleSummary

_STYLE = {"band": "#9ecae1", "line": "#08519c", "obs": "#252525", "mark": "#cb181d"}
# PNG metadata otherwise embeds the matplotlib version string
_META = {"Software": None}


def _figure(nrows=1, ncols=1, size=(7.0, 4.0)):
    fig = Figure(figsize=size, dpi=100)
    FigureCanvasAgg(fig)
    axes = fig.subplots(nrows, ncols, squeeze=False)
    return fig, axes


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_META)


def plot_ensemble(summary: EnsembleSummary, path, t_policy: int | None = None, title: str = "") -> None:
    fig, axes = _figure(2, 1, (7.0, 6.0))
    for ax, name, label in ((axes[0, 0], "posts", "posts"), (axes[1, 0], "engagements", "engagements")):
        bands = getattr(summary, name)
        ax.fill_between(summary.weeks, bands[0], bands[2], color=_STYLE["band"], lw=0, label="5th-95th pct")
        ax.plot(summary.weeks, bands[1], color=_STYLE["line"], lw=1.5, label="median")
        if t_policy:
            ax.axvline(t_policy, color=_STYLE["mark"], ls="--", lw=1)
        ax.set_ylabel(f"weekly {label}")
        ax.set_xlim(1, summary.t_max)
    axes[0, 0].legend(loc="upper left", frameon=False)
    axes[1, 0].set_xlabel("week")
    if title:
        axes[0, 0].set_title(title)
    _save(fig, path)


def plot_sweep(labels, posts, engagements, path, week: int = 119) -> None:
    """Grouped bars of percent change at one week, one group per intervention."""
    fig, axes = _figure(size=(max(5.0, 1.2 * len(labels) + 2), 4.0))
    ax = axes[0, 0]
    x = np.arange(len(labels))
    ax.bar(x - 0.2, np.asarray(posts, dtype=float), 0.4, color=_STYLE["band"], label="posts")
    ax.bar(x + 0.2, np.asarray(engagements, dtype=float), 0.4, color=_STYLE["line"], label="engagements")
    ax.axhline(0, color=_STYLE["obs"], lw=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel(f"% change vs baseline, week {week}")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_its(report: ItsReport, path, title: str = "") -> None:
    fig, axes = _figure(size=(8.0, 4.0))
    ax = axes[0, 0]
    pre = report.pre
    dates = [row.date for row in report.band]
    ax.plot(pre.dates, pre.values, color=_STYLE["obs"], lw=1, marker=".", ms=3)
    ax.plot(dates, [row.observed for row in report.band], color=_STYLE["obs"], lw=1, marker=".", ms=3,
            label="observed")
    ax.fill_between(dates, [row.lower for row in report.band], [row.upper for row in report.band],
                    color=_STYLE["band"], lw=0, label=f"{report.options.level:.0%} band")
    ax.plot(dates, [row.mean for row in report.band], color=_STYLE["line"], ls="--", lw=1.2, label="projection")
    ax.axvline(dates[0], color=_STYLE["mark"], ls="--", lw=1)
    ax.set_ylabel(pre.label or "value")
    ax.legend(loc="best", frameon=False)
    if title:
        ax.set_title(title)
    fig.autofmt_xdate()
    _save(fig, path)


def plot_interarrivals(durations, path, mixture: ExpMixture | None = None, threshold: float | None = None) -> None:
    fig, axes = _figure()
    ax = axes[0, 0]
    x = np.asarray(durations, dtype=float)
    x = x[x > 0]
    if len(x):
        bins = np.logspace(np.log10(max(x.min(), 0.5)), np.log10(x.max() + 1), 50)
        ax.hist(x, bins=bins, density=True, color=_STYLE["band"], label="interarrivals")
        if mixture is not None:
            grid = np.logspace(np.log10(bins[0]), np.log10(bins[-1]), 300)
            ax.plot(grid, mixture.pdf(grid), color=_STYLE["line"], lw=1.5, label=f"{mixture.k}-component fit")
        ax.set_xscale("log")
        ax.set_yscale("log")
    if threshold is not None:
        ax.axvline(threshold, color=_STYLE["mark"], ls="--", lw=1, label=f"threshold {threshold:.2f} s")
    ax.set_xlabel("seconds between successive shares")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    _save(fig, path)
