"""Coordinated link-sharing detection.

Interarrival times between successive shares of the same URL are modelled as a
mixture of exponentials. The crossover of the two component densities gives a
near-simultaneity threshold; venue pairs whose successive shares fall under it
more often than the slow component predicts are flagged with exact one-sided
binomial tests under Holm-Bonferroni correction.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import groupby
from urllib.parse import urlsplit, urlunsplit

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DataError, NumericError, ParameterError

ZERO_DURATION = 0.5  # seconds; stand-in for tied timestamps when fitting


class FitError(NumericError):
    """A mixture fit failed."""


class DegenerateFitError(FitError):
    """A mixture component collapsed to (near) zero weight."""


@dataclass(frozen=True)
class ShareEvent:
    venue_id: str
    url: str
    timestamp: int

    def __post_init__(self):
        if self.timestamp < 0:
            raise DataError(f"negative timestamp {self.timestamp}")
        if not self.url:
            raise DataError("empty url")


def normalize_url(url: str, strip_query: bool = True) -> str:
    """Lowercase and drop the query string and fragment."""
    url = url.strip().lower()
    if not strip_query:
        return url
    parts = urlsplit(url)
    return urlunsplit((parts.scheme, parts.netloc, parts.path, "", ""))


def interarrival_times(events) -> list[tuple[int, tuple[str, str]]]:
    """Seconds between successive shares of each URL, with the (earlier, later) venue pair.

    Output is ordered by URL then time; ties in timestamp are broken by venue id so
    the result does not depend on input order.
    """
    out = []
    ordered = sorted(events, key=lambda e: (e.url, e.timestamp, e.venue_id))
    for _, group in groupby(ordered, key=lambda e: e.url):
        shares = list(group)
        for prev, cur in zip(shares, shares[1:]):
            out.append((cur.timestamp - prev.timestamp, (prev.venue_id, cur.venue_id)))
    return out


# Exponential mixture --------------------------------------------------------

@dataclass
class ExpMixture:
    mu: np.ndarray  # component means, ascending
    pi: np.ndarray  # component weights
    log_likelihood: float
    n: int
    n_iter: int = 0
    converged: bool = True
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def k(self) -> int:
        return len(self.mu)

    @property
    def components(self) -> list[tuple[float, float]]:
        return list(zip(self.mu.tolist(), self.pi.tolist()))

    @property
    def n_params(self) -> int:
        return 2 * self.k - 1

    def canonical(self) -> "ExpMixture":
        order = np.argsort(self.mu, kind="stable")
        self.mu, self.pi = self.mu[order], self.pi[order]
        return self

    def pdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        return np.sum(self.pi / self.mu * np.exp(-x / self.mu), axis=-1)


def _prepare(durations) -> np.ndarray:
    x = np.asarray(durations, dtype=float).ravel()
    if x.size == 0:
        raise ParameterError("no durations to fit")
    if not np.all(np.isfinite(x)):
        raise DataError("durations must be finite")
    return np.where(x <= 0, ZERO_DURATION, x)


def mixture_log_likelihood(x, mu, pi) -> float:
    x = _prepare(x)
    logp = np.log(pi) - np.log(mu) - x[:, None] / mu
    return float(logsumexp(logp, axis=1).sum())


def _em(x, mu, pi, tol, max_iter):
    history = []
    prev = -np.inf
    converged = False
    n = len(x)
    for it in range(1, max_iter + 1):
        # components along axis 0: reductions over a short leading axis are cheap
        logp = (np.log(pi) - np.log(mu))[:, None] - (1.0 / mu)[:, None] * x
        top = logp.max(axis=0)
        dens = np.exp(logp - top)
        total = dens.sum(axis=0)
        ll = float(np.sum(top) + np.sum(np.log(total)))
        history.append(ll)
        if ll - prev < tol * max(1.0, abs(ll)) and it > 1:
            converged = True
            break
        prev = ll
        resp = dens / total
        nk = resp.sum(axis=1)
        if np.any(nk / n < 1e-8):
            raise DegenerateFitError("a mixture component collapsed")
        mu = (resp @ x) / nk
        pi = nk / n
    return mu, pi, history, converged, it


def fit_exp_mixture_em(durations, k: int, init=None, tol: float = 1e-8, max_iter: int = 2000,
                       n_restarts: int = 10, seed: int = 0) -> ExpMixture:
    """Fit a k-component exponential mixture by EM.

    The first start splits the sorted data into k quantile blocks and uses their means
    with uniform weights; further starts jitter those means log-uniformly by up to a
    factor of 10. ``init`` (an ExpMixture) replaces the restarts with a single start.
    The fit with the highest log-likelihood wins. Non-positive durations are set to
    ``ZERO_DURATION``.
    """
    x = _prepare(durations)
    n = len(x)
    if k < 1 or k > n:
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    if k == 1:
        mu = np.array([x.mean()])
        pi = np.array([1.0])
        ll = mixture_log_likelihood(x, mu, pi)
        return ExpMixture(mu, pi, ll, n, 1, True, [ll])

    if init is not None:
        starts = [(np.asarray(init.mu, dtype=float), np.asarray(init.pi, dtype=float))]
    else:
        blocks = np.array_split(np.sort(x), k)
        base = np.array([b.mean() for b in blocks])
        gen = np.random.default_rng(seed)
        starts = [(base, np.full(k, 1.0 / k))]
        for _ in range(n_restarts - 1):
            starts.append((base * 10.0 ** gen.uniform(-1, 1, k), np.full(k, 1.0 / k)))

    best = None
    last_error = None
    for mu0, pi0 in starts:
        try:
            mu, pi, hist, conv, it = _em(x, mu0, pi0, tol, max_iter)
        except DegenerateFitError as exc:
            last_error = exc
            continue
        if best is None or hist[-1] > best.log_likelihood:
            best = ExpMixture(mu, pi, hist[-1], n, it, conv, hist)
    if best is None:
        raise last_error
    return best.canonical()


def information_criteria(mixture: ExpMixture) -> dict:
    k = mixture.n_params
    ll = mixture.log_likelihood
    return {"log_likelihood": ll, "aic": 2 * k - 2 * ll, "bic": k * math.log(mixture.n) - 2 * ll}


def select_mixture_order(durations, k_range=range(1, 5), **fit_kwargs):
    """Fit each k and pick the one minimising BIC (ties go to the smaller k).

    Returns ``(best_k, table, fits)`` where ``table[k]`` holds log-likelihood, AIC, BIC,
    or an ``error`` string when that fit failed.
    """
    ks = sorted(set(k_range))
    if not ks:
        raise ParameterError("k_range is empty")
    _prepare(durations)
    table, fits = {}, {}
    for k in ks:
        try:
            fit = fit_exp_mixture_em(durations, k, **fit_kwargs)
        except (FitError, ParameterError) as exc:
            table[k] = {"error": str(exc)}
            continue
        fits[k] = fit
        table[k] = information_criteria(fit)
    scored = [(row["bic"], k) for k, row in table.items() if "bic" in row]
    if not scored:
        raise FitError("every mixture order failed to fit")
    best_k = min(scored)[1]
    return best_k, table, fits


def crossover_threshold(mu1, mu2=None) -> float:
    """Duration where two unweighted exponential densities are equal.

    Accepts either an ExpMixture with two components or the two means.
    """
    if mu2 is None:
        if len(mu1.mu) != 2:
            raise ValueError("crossover needs a two-component mixture")
        mu1, mu2 = mu1.mu
    lo, hi = sorted((float(mu1), float(mu2)))
    if lo <= 0:
        raise ValueError("component means must be positive")
    if lo == hi:
        raise ValueError("crossover undefined for equal means")
    return math.log(hi / lo) / (1.0 / lo - 1.0 / hi)


def baseline_probability(threshold: float, mu_non: float) -> float:
    """Chance that a draw from the slow component falls below ``threshold``."""
    if threshold < 0 or mu_non <= 0:
        raise ValueError("need threshold >= 0 and mu_non > 0")
    return -math.expm1(-threshold / mu_non)


# Hypothesis tests -----------------------------------------------------------

def binomial_sf(k: int, n: int, p: float) -> float:
    """Exact upper tail P(X >= k) for X ~ Binomial(n, p), summed in log space."""
    if not 0 <= p <= 1:
        raise ValueError("p must be in [0, 1]")
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    if p == 0:
        return 0.0
    if p == 1:
        return 1.0
    j = np.arange(k, n + 1)
    logpmf = (gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)
              + j * math.log(p) + (n - j) * math.log1p(-p))
    return float(min(1.0, math.exp(logsumexp(logpmf))))


def holm_bonferroni(pvalues, alpha: float = 0.05) -> np.ndarray:
    """Step-down Holm rejections; returns a boolean mask aligned with ``pvalues``."""
    p = np.asarray(pvalues, dtype=float)
    m = len(p)
    reject = np.zeros(m, dtype=bool)
    for rank, i in enumerate(np.argsort(p, kind="stable")):
        if p[i] > alpha / (m - rank):
            break
        reject[i] = True
    return reject


@dataclass
class CoordinationEdge:
    venue_a: str
    venue_b: str
    n_pairs: int
    k_near: int
    p_value: float
    significant: bool = False


def pair_counts(events, threshold: float) -> dict[tuple[str, str], list[int]]:
    """Per unordered venue pair: [successive share pairs, pairs under ``threshold``].

    Self-pairs are skipped; a zero gap always counts as near-simultaneous.
    """
    counts = defaultdict(lambda: [0, 0])
    for dt, (va, vb) in interarrival_times(events):
        if va == vb:
            continue
        key = (va, vb) if va < vb else (vb, va)
        c = counts[key]
        c[0] += 1
        if dt < threshold or dt <= 0:
            c[1] += 1
    return dict(counts)


def detect_coordination(events, threshold: float, p0: float, alpha: float = 0.05) -> list[CoordinationEdge]:
    """Test every venue pair that shared a URL in succession; edges sorted by pair."""
    if not 0 < p0 < 1:
        raise ValueError("p0 must be in (0, 1)")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    counts = pair_counts(events, threshold)
    edges = [CoordinationEdge(a, b, n, k, binomial_sf(k, n, p0))
             for (a, b), (n, k) in sorted(counts.items())]
    for edge, sig in zip(edges, holm_bonferroni([e.p_value for e in edges], alpha)):
        edge.significant = bool(sig)
    return edges


def connected_components(edges, venues) -> list[list[str]]:
    """Clusters of venues joined by significant edges, each sorted, largest first."""
    parent = {v: v for v in venues}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for e in edges:
        if not e.significant:
            continue
        if e.venue_a not in parent or e.venue_b not in parent:
            raise ValueError(f"edge {e.venue_a}-{e.venue_b} references an unknown venue")
        ra, rb = find(e.venue_a), find(e.venue_b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    clusters = defaultdict(list)
    for v in parent:
        clusters[find(v)].append(v)
    return sorted((sorted(c) for c in clusters.values()), key=lambda c: (-len(c), c[0]))


# Synthetic data -------------------------------------------------------------

def sample_exp_mixture(n: int, mu, pi, rng) -> np.ndarray:
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    comp = gen.choice(len(mu), size=n, p=np.asarray(pi) / np.sum(pi))
    return gen.exponential(np.asarray(mu, dtype=float)[comp])


def synthetic_share_events(n_urls: int = 3000, shares_per_url: int = 31, n_venues: int = 60,
                           mu=(9.95, 227.45), pi=(0.70, 0.30), coordinated=(), seed: int = 0,
                           start: int = 1_600_000_000) -> list[ShareEvent]:
    """Share cascades whose successive gaps follow an exponential mixture.

    Each URL gets ``shares_per_url`` shares from random venues ``v0..v{n_venues-1}``
    with gaps drawn from the mixture (rounded to whole seconds). For every venue pair
    in ``coordinated``, one extra URL per 10 cascades is shared by the pair in
    alternation with gaps drawn from the fast component only.
    """
    gen = np.random.default_rng(seed)
    venues = [f"v{i:03d}" for i in range(n_venues)]
    events = []
    for u in range(n_urls):
        gaps = np.rint(sample_exp_mixture(shares_per_url - 1, mu, pi, gen)).astype(np.int64)
        times = start + gen.integers(0, 86_400) + np.concatenate([[0], np.cumsum(gaps)])
        who = gen.integers(0, n_venues, size=shares_per_url)
        url = f"https://example.org/story/{u}"
        events.extend(ShareEvent(venues[w], url, int(t)) for t, w in zip(times, who))
    for c, (va, vb) in enumerate(coordinated):
        for j in range(max(1, n_urls // 10)):
            gaps = np.rint(gen.exponential(min(mu), size=5)).astype(np.int64)
            times = start + gen.integers(0, 86_400) + np.concatenate([[0], np.cumsum(gaps)])
            url = f"https://example.org/push/{c}/{j}"
            events.extend(ShareEvent((va, vb)[i % 2], url, int(t)) for i, t in enumerate(times))
    return events
