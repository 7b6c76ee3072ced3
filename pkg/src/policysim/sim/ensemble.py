"""Monte Carlo ensembles of model runs and percentile summaries."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..rng import RngStream
from .config import SimConfig
from .model import TRAJECTORY_FIELDS, run

PERCENTILES = (5.0, 50.0, 95.0)


@dataclass
class EnsembleSummary:
    """Per-week 5th/50th/95th percentiles across runs; arrays are indexed by week - 1."""

    posts: np.ndarray  # shape (3, t_max): p05, median, p95
    engagements: np.ndarray
    moderators_median: np.ndarray
    demand_median: np.ndarray
    active_venues_median: np.ndarray
    n_runs: int
    base_seed: int

    @property
    def t_max(self) -> int:
        return self.posts.shape[1]

    @property
    def weeks(self) -> np.ndarray:
        return np.arange(1, self.t_max + 1)

    def median(self, series: str) -> np.ndarray:
        return getattr(self, series)[1]


def _run_block(config: SimConfig, base_seed: int, indices: range) -> dict:
    root = RngStream(base_seed)
    block = {name: np.empty((len(indices), config.t_max)) for name in TRAJECTORY_FIELDS}
    for row, i in enumerate(indices):
        traj = run(config, root.derive(i))
        for name in TRAJECTORY_FIELDS:
            block[name][row] = getattr(traj, name)
    return block


def run_ensemble(config: SimConfig, n_runs: int, base_seed: int, return_runs: bool = False,
                 n_jobs: int | None = 1):
    """Run ``n_runs`` independent replicates; run i uses sub-stream (base_seed, i).

    Because run i always gets the same sub-stream, two configs run with the same
    base seed share common random numbers run by run, and the result does not
    depend on ``n_jobs`` (``None`` means one worker process per CPU).
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    n_jobs = min(n_runs, n_jobs or os.cpu_count() or 1)
    if n_jobs == 1:
        stacks = _run_block(config, base_seed, range(n_runs))
    else:
        bounds = np.linspace(0, n_runs, n_jobs + 1).astype(int)
        blocks = [range(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(n_jobs) as pool:
            parts = list(pool.map(_run_block, [config] * n_jobs, [base_seed] * n_jobs, blocks))
        stacks = {name: np.concatenate([part[name] for part in parts]) for name in TRAJECTORY_FIELDS}
    summary = EnsembleSummary(
        posts=np.percentile(stacks["posts"], PERCENTILES, axis=0),
        engagements=np.percentile(stacks["engagements"], PERCENTILES, axis=0),
        moderators_median=np.median(stacks["moderators"], axis=0),
        demand_median=np.median(stacks["demand"], axis=0),
        active_venues_median=np.median(stacks["active_venues"], axis=0),
        n_runs=n_runs,
        base_seed=base_seed,
    )
    return (summary, stacks) if return_runs else summary


def relative_effect(treated: EnsembleSummary, baseline: EnsembleSummary, weeks=(60, 90, 119)) -> dict:
    """Percent change of treated vs baseline medians: ``{week: {"posts": x, "engagements": y}}``.

    A cell is ``None`` when the baseline median is zero at that week.
    """
    if treated.t_max != baseline.t_max:
        raise ValueError("summaries have different t_max")
    out = {}
    for w in weeks:
        if not 1 <= w <= baseline.t_max:
            raise ValueError(f"week {w} outside 1..{baseline.t_max}")
        cells = {}
        for series in ("posts", "engagements"):
            base = baseline.median(series)[w - 1]
            cells[series] = None if base == 0 else 100.0 * (treated.median(series)[w - 1] - base) / base
        out[w] = cells
    return out
