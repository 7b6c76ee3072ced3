import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from policysim.coordination import (CoordinationEdge, DegenerateFitError, ExpMixture, ShareEvent,
                                    baseline_probability, binomial_sf, connected_components, crossover_threshold,
                                    detect_coordination, fit_exp_mixture_em, holm_bonferroni, information_criteria,
                                    interarrival_times, normalize_url, pair_counts, sample_exp_mixture,
                                    select_mixture_order, synthetic_share_events)
from policysim.errors import DataError, ParameterError

MU_NEAR, MU_NON = 9.95, 227.45


def exact_tail(k, n, p):
    """P(X >= k) for Binomial(n, p) by exact rational summation."""
    p = Fraction(p)
    return float(sum(Fraction(math.comb(n, j)) * p**j * (1 - p) ** (n - j) for j in range(k, n + 1)))


# interarrivals ----------------------------------------------------------------

def test_interarrival_example():
    events = [ShareEvent("A", "u", 0), ShareEvent("B", "u", 10), ShareEvent("A", "u", 43)]
    assert interarrival_times(events) == [(10, ("A", "B")), (33, ("B", "A"))]


def test_single_shares_contribute_nothing():
    assert interarrival_times([ShareEvent("A", "u1", 5), ShareEvent("B", "u2", 9)]) == []


def test_interarrivals_ignore_input_order():
    events = synthetic_share_events(n_urls=40, shares_per_url=6, n_venues=8, seed=3)
    shuffled = events[:]
    random.Random(1).shuffle(shuffled)
    assert interarrival_times(shuffled) == interarrival_times(sorted(events, key=lambda e: e.timestamp))


def test_share_event_validation():
    with pytest.raises(DataError):
        ShareEvent("A", "u", -1)
    with pytest.raises(DataError):
        ShareEvent("A", "", 3)


def test_normalize_url():
    assert normalize_url("HTTPS://Ex.org/a/B?x=1#top") == "https://ex.org/a/b"
    assert normalize_url("https://ex.org/a?x=1", strip_query=False) == "https://ex.org/a?x=1"


# EM ---------------------------------------------------------------------------

def test_single_component_is_sample_mean():
    x = np.random.default_rng(0).exponential(40.0, 500)
    fit = fit_exp_mixture_em(x, 1)
    assert fit.mu[0] == x.mean() and fit.pi[0] == 1.0


def test_two_component_recovery():
    x = sample_exp_mixture(90_000, (10.0, 227.0), (0.7, 0.3), np.random.default_rng(1))
    fit = fit_exp_mixture_em(x, 2)
    assert np.all(np.abs(fit.mu / np.array([10.0, 227.0]) - 1) < 0.05)
    assert np.all(np.abs(fit.pi - np.array([0.7, 0.3])) < 0.02)
    assert abs(fit.pi.sum() - 1) < 1e-9
    assert fit.converged


def test_em_log_likelihood_never_decreases():
    gen = np.random.default_rng(2)
    for trial in range(50):
        x = sample_exp_mixture(int(gen.integers(50, 2000)), gen.uniform(1, 300, 3), gen.uniform(0.1, 1, 3), gen)
        k = int(gen.integers(2, 5))
        init = ExpMixture(gen.uniform(1, 400, k), np.full(k, 1.0 / k), 0.0, len(x))
        try:
            fit = fit_exp_mixture_em(x, k, init=init, tol=1e-12, max_iter=300)
        except DegenerateFitError:
            continue
        assert np.all(np.diff(fit.history) >= -1e-9 * np.abs(fit.history[1:]))


def test_em_errors():
    with pytest.raises(ParameterError):
        fit_exp_mixture_em([], 2)
    with pytest.raises(ParameterError):
        fit_exp_mixture_em([1.0, 2.0], 3)
    with pytest.raises(DataError):
        fit_exp_mixture_em([1.0, math.inf], 1)


def test_zero_durations_are_clamped():
    fit = fit_exp_mixture_em([0, 0, 2.0, 1.5], 1)
    assert fit.mu[0] == pytest.approx((0.5 + 0.5 + 2.0 + 1.5) / 4)


def test_canonical_order_and_pdf():
    mix = ExpMixture(np.array([50.0, 5.0]), np.array([0.4, 0.6]), 0.0, 10).canonical()
    assert mix.mu.tolist() == [5.0, 50.0] and mix.pi.tolist() == [0.6, 0.4]
    grid = np.linspace(0, 2000, 200001)
    assert np.trapezoid(mix.pdf(grid), grid) == pytest.approx(1.0, abs=1e-4)


def test_information_criteria_identity():
    x = sample_exp_mixture(5000, (10.0, 227.0), (0.7, 0.3), np.random.default_rng(3))
    best_k, table, fits = select_mixture_order(x, range(1, 4))
    for k, row in table.items():
        kp = 2 * k - 1
        assert row["bic"] - row["aic"] == pytest.approx((math.log(len(x)) - 2) * kp, rel=1e-12)
    assert best_k == 2
    assert information_criteria(fits[2]) == table[2]


def test_order_selection_records_failures():
    best_k, table, fits = select_mixture_order([3.0, 7.0, 20.0], range(1, 6))
    assert "error" in table[4] and "error" in table[5]
    assert best_k in fits
    with pytest.raises(ParameterError):
        select_mixture_order([3.0, 4.0], [])


def test_scale_equivariance_of_fit():
    x = sample_exp_mixture(4000, (10.0, 227.0), (0.7, 0.3), np.random.default_rng(4))
    init = ExpMixture(np.array([5.0, 100.0]), np.array([0.5, 0.5]), 0.0, len(x))
    c = 3.7
    a = fit_exp_mixture_em(x, 2, init=init)
    b = fit_exp_mixture_em(x * c, 2, init=ExpMixture(init.mu * c, init.pi, 0.0, len(x)))
    assert b.mu == pytest.approx(a.mu * c, rel=1e-6)
    assert b.pi == pytest.approx(a.pi, abs=1e-6)
    t_a, t_b = crossover_threshold(a), crossover_threshold(b)
    assert t_b == pytest.approx(c * t_a, rel=1e-6)
    assert baseline_probability(t_b, b.mu[1]) == pytest.approx(baseline_probability(t_a, a.mu[1]), rel=1e-6)
    assert select_mixture_order(x, range(1, 4))[0] == select_mixture_order(x * c, range(1, 4))[0]


# threshold and baseline ---------------------------------------------------------

def test_crossover_constant_and_symmetry():
    t = crossover_threshold(MU_NEAR, MU_NON)
    assert abs(t - 32.56) < 0.01
    assert crossover_threshold(MU_NON, MU_NEAR) == t


def test_crossover_separates_densities():
    t = crossover_threshold(MU_NEAR, MU_NON)
    grid = np.linspace(0.01, 500, 5000)
    near = np.exp(-grid / MU_NEAR) / MU_NEAR
    non = np.exp(-grid / MU_NON) / MU_NON
    assert np.all((near > non)[grid < t - 1e-9])
    assert np.all((near < non)[grid > t + 1e-9])


def test_crossover_errors():
    with pytest.raises(ValueError):
        crossover_threshold(5.0, 5.0)
    with pytest.raises(ValueError):
        crossover_threshold(ExpMixture(np.array([1.0]), np.array([1.0]), 0.0, 1))


def test_baseline_probability():
    assert abs(baseline_probability(32.56, MU_NON) - 0.1334) < 0.0005
    assert baseline_probability(0.0, MU_NON) == 0.0
    assert baseline_probability(10 * MU_NON, MU_NON) > 0.9999
    with pytest.raises(ValueError):
        baseline_probability(-1.0, MU_NON)


# binomial tests and Holm --------------------------------------------------------

def test_strong_pair_survives_ten_thousand_tests():
    p = binomial_sf(50, 100, 0.1334)
    assert p < 1e-12
    assert p <= 0.05 / 10**4
    assert p == pytest.approx(exact_tail(50, 100, 0.1334), rel=1e-10)


def test_tail_edge_cases():
    assert binomial_sf(30, 30, 0.1334) == pytest.approx(0.1334**30, rel=1e-12)
    assert binomial_sf(0, 10, 0.3) == 1.0
    assert binomial_sf(11, 10, 0.3) == 0.0


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 200), data=st.data())
def test_low_counts_never_significant(n, data):
    p0 = data.draw(st.floats(0.01, 0.99))
    k = data.draw(st.integers(0, math.floor(n * p0)))
    assert binomial_sf(k, n, p0) >= 0.5 - 1e-12


def test_holm_step_down():
    p = [0.01, 0.04, 0.03, 0.005]
    assert holm_bonferroni(p, 0.05).tolist() == [True, False, False, True]
    assert holm_bonferroni([0.001, 0.2], 0.05).tolist() == [True, False]
    assert holm_bonferroni([], 0.05).tolist() == []


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.floats(0.001, 0.2))
def test_holm_monotone(pvalues, alpha):
    reject = holm_bonferroni(pvalues, alpha)
    p = np.asarray(pvalues)
    for i in np.flatnonzero(reject):
        assert np.all(reject[p < p[i]])


def test_pair_counts_and_detection():
    events = [ShareEvent("A", "u", 0), ShareEvent("B", "u", 5), ShareEvent("B", "u", 8),
              ShareEvent("A", "u", 200), ShareEvent("C", "v", 0), ShareEvent("A", "v", 0)]
    counts = pair_counts(events, 32.56)
    assert counts == {("A", "B"): [2, 1], ("A", "C"): [1, 1]}
    edges = detect_coordination(events, 32.56, 0.1334)
    assert [(e.venue_a, e.venue_b, e.n_pairs, e.k_near) for e in edges] == [("A", "B", 2, 1), ("A", "C", 1, 1)]
    assert all(0 <= e.p_value <= 1 for e in edges)


def test_detection_argument_checks():
    with pytest.raises(ValueError):
        detect_coordination([], 30, 0.0)
    with pytest.raises(ValueError):
        detect_coordination([], 30, 0.2, alpha=1.0)


def test_planted_pairs_found_across_threshold_range():
    events = synthetic_share_events(n_urls=600, shares_per_url=11, n_venues=30,
                                    coordinated=[("v001", "v002"), ("v010", "v011")], seed=5,
                                    mu=(MU_NEAR, MU_NON), pi=(0.02, 0.98))
    planted = {("v001", "v002"), ("v010", "v011")}
    for threshold in range(25, 42):
        p0 = baseline_probability(threshold, MU_NON)
        edges = detect_coordination(events, threshold, p0)
        flagged = {(e.venue_a, e.venue_b) for e in edges if e.significant}
        well_supported = {(e.venue_a, e.venue_b) for e in edges if e.significant and e.n_pairs >= 50}
        assert planted <= flagged and well_supported == planted, threshold


# components --------------------------------------------------------------------

def _edge(a, b, sig=True):
    return CoordinationEdge(a, b, 1, 1, 0.0, sig)


def test_components_examples():
    venues = ["a", "b", "c", "d"]
    assert connected_components([], venues) == [["a"], ["b"], ["c"], ["d"]]
    assert connected_components([_edge("a", "b"), _edge("b", "c"), _edge("c", "d", False)], venues) == \
        [["a", "b", "c"], ["d"]]
    with pytest.raises(ValueError):
        connected_components([_edge("a", "z")], venues)


def _closure(edges, venues):
    reach = {v: {v} for v in venues}
    changed = True
    while changed:
        changed = False
        for a, b in edges:
            merged = reach[a] | reach[b]
            for v in merged:
                if reach[v] != merged:
                    reach[v] = reach[v] | merged
                    changed = True
    return sorted({tuple(sorted(s)) for s in reach.values()})


def test_components_match_transitive_closure():
    gen = np.random.default_rng(6)
    venues = [f"v{i:02d}" for i in range(50)]
    for _ in range(100):
        m = int(gen.integers(0, 60))
        pairs = [tuple(gen.choice(venues, 2, replace=False)) for _ in range(m)]
        clusters = connected_components([_edge(a, b) for a, b in pairs], venues)
        assert sorted(tuple(c) for c in clusters) == _closure(pairs, venues)
