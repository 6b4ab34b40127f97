"""Censored tail estimation and the two-phase random-querying pricer."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adxhba.distributions import BidDistribution, revenue_argmax
from adxhba.game import CensoredObservation
from adxhba.km import (
    KMCounters,
    RandomKM,
    best_price,
    bidder_env,
    estimate,
    isotonic_tail,
    random_km,
    record_censored,
    tail_estimate,
)

G = 1000
obs_strategy = st.lists(st.tuples(st.integers(0, G), st.booleans()), min_size=1, max_size=80)


def uniform_queries(dist, k, seed):
    rng = np.random.default_rng(seed)
    c = KMCounters()
    for _ in range(k):
        r = int(rng.integers(0, G + 1))
        c.record(CensoredObservation(r, dist.sample(rng) >= r))
    return c


def constant_env(bid):
    return lambda r: CensoredObservation(r, bid >= r)


class TestCounters:
    def test_sale_increments_right_range(self):
        c = record_censored(KMCounters(), CensoredObservation(500, True))
        assert np.all(c.R[:501] == 1) and np.all(c.R[501:] == 0)
        assert not c.L.any()

    def test_miss_increments_left_range(self):
        c = record_censored(KMCounters(), CensoredObservation(500, False))
        assert np.all(c.L[500:] == 1) and np.all(c.L[:500] == 0)
        assert not c.R.any()

    def test_two_observations_by_hand(self):
        c = KMCounters()
        c.record(CensoredObservation(500, True))
        c.record(CensoredObservation(200, False))
        assert (c.R[300], c.L[300]) == (1, 1)
        assert tail_estimate(c).values[300] == pytest.approx(0.5)

    @settings(max_examples=1000, deadline=None)
    @given(obs=obs_strategy)
    def test_monotone_counters(self, obs):
        c = KMCounters()
        for r, s in obs:
            c.record(CensoredObservation(r, s))
        assert np.all(np.diff(c.R) <= 0)
        assert np.all(np.diff(c.L) >= 0)
        assert (c.R + c.L).max() <= len(obs)
        assert c.queries.sum() == len(obs) == c.n


class TestTailEstimate:
    def test_ratio_formula(self):
        c = KMCounters()
        for _ in range(3):
            c.record(CensoredObservation(600, True))
        c.record(CensoredObservation(400, False))
        assert tail_estimate(c).values[500] == pytest.approx(0.75)

    def test_all_sold_gives_one(self):
        c = KMCounters()
        for r in (100, 300, 700):
            c.record(CensoredObservation(r, True))
        t = tail_estimate(c)
        assert np.all(t.values[t.defined] == 1.0)

    def test_undefined_excluded_from_revenue(self):
        c = KMCounters()
        c.record(CensoredObservation(300, True))
        rev = tail_estimate(c).revenue()
        assert np.all(np.isneginf(rev[301:]))

    @settings(max_examples=1000, deadline=None)
    @given(obs=obs_strategy)
    def test_monotone_and_bounded(self, obs):
        c = KMCounters()
        for r, s in obs:
            c.record(CensoredObservation(r, s))
        for t in (tail_estimate(c), isotonic_tail(c)):
            v = t.values[t.defined]
            assert np.all((v >= 0) & (v <= 1))
            assert np.all(np.diff(v) <= 1e-12)

    def test_ratio_limit_under_uniform_queries(self):
        """Uniform reserves against a U[0,1] bidder: R(x) counts pairs with
        bid >= reserve >= x and L(x) pairs with bid < reserve <= x, so the
        ratio tends to (1-x)^2 / ((1-x)^2 + x^2), not 1 - x."""
        c = uniform_queries(BidDistribution("uniform", high=1.0), 40_000, seed=0)
        x = np.arange(G + 1) / G
        limit = (1 - x) ** 2 / ((1 - x) ** 2 + x ** 2)
        t = tail_estimate(c)
        assert np.max(np.abs(t.values - limit)[t.defined][50:-50]) < 0.03

    def test_isotonic_is_consistent(self):
        c = uniform_queries(BidDistribution("uniform", high=1.0), 40_000, seed=0)
        t = isotonic_tail(c)
        truth = BidDistribution("uniform", high=1.0).tail()
        assert np.max(np.abs(t.values - truth)[t.defined]) < 0.05

    def test_isotonic_sup_error_at_k2000(self):
        c = uniform_queries(BidDistribution("uniform", high=1.0), 2000, seed=0)
        t = isotonic_tail(c)
        truth = BidDistribution("uniform", high=1.0).tail()
        assert np.max(np.abs(t.values - truth)[t.defined]) <= 0.15

    @pytest.mark.xfail(strict=True, reason="sup-norm error at k=2000 is ~0.07-0.14 for the isotonic "
                                           "estimate and ~0.16 for the range ratio; see the decisions ledger")
    @pytest.mark.parametrize("estimator", ["isotonic", "ratio"])
    def test_uniform_sup_error_within_005(self, estimator):
        c = uniform_queries(BidDistribution("uniform", high=1.0), 2000, seed=0)
        t = estimate(c, estimator)
        truth = BidDistribution("uniform", high=1.0).tail()
        assert np.max(np.abs(t.values - truth)[t.defined]) <= 0.05

    def test_unknown_estimator(self):
        with pytest.raises(ValueError):
            estimate(KMCounters(), "kernel")


class TestBestPrice:
    def test_lower_price_wins_ties(self):
        assert best_price([3, 1, 2], [0.5, 0.5, 0.1]) == 1


class TestRandomKM:
    def test_constant_bidder(self):
        km = random_km(1000, 10, 50, constant_env(600), np.random.default_rng(0))
        assert km.result == 600

    def test_candidate_window_contains_phase1_argmax_and_result(self):
        dist = BidDistribution("normal", mu=0.45, var=4e-6)
        km = random_km(500, 7, 40, bidder_env(dist, np.random.default_rng(1)), np.random.default_rng(2))
        assert km.phase1_price in km.candidates
        assert km.result in km.candidates
        assert len(km.candidates) <= 15

    def test_window_clipped_to_grid(self):
        km = random_km(300, 10, 5, constant_env(G), np.random.default_rng(0))
        assert km.candidates.min() >= 0 and km.candidates.max() <= G
        assert km.result == G

    def test_round_count(self):
        km = RandomKM(200, 5, 30, rng=np.random.default_rng(0))
        n = 0
        env = constant_env(500)
        while not km.done:
            km.observe(env(km.next_reserve()))
            n += 1
        assert n == 200 + 11 * 30 == km.rounds_needed

    def test_posts_result_after_finishing(self):
        km = random_km(100, 2, 5, constant_env(300), np.random.default_rng(0))
        assert {km.next_reserve() for _ in range(5)} == {km.result}

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            RandomKM(0, 1, 1)
        with pytest.raises(ValueError):
            RandomKM(10, 1, 10, estimator="bogus")

    def test_hoeffding_per_candidate(self):
        dist = BidDistribution("uniform", high=1.0)
        k_c = 500
        bound = math.sqrt(math.log(2 / 0.05) / (2 * k_c))
        hits = 0
        for seed in range(100):
            km = RandomKM(50, 0, k_c, rng=np.random.default_rng(seed))
            env = bidder_env(dist, np.random.default_rng(10_000 + seed))
            while not km.done:
                km.observe(env(km.next_reserve()))
            c = km.candidates[0]
            hits += abs(km.candidate_tails()[0] - dist.tail()[c]) <= bound
        assert hits >= 90

    @pytest.mark.parametrize("name,params", [
        ("uniform", {"high": 0.75}),
        ("normal", {"mu": 0.45, "var": 4e-6}),
        ("lognormal", {"mu": -6.2, "sigma": 0.75}),
        ("exponential", {"beta": 1 / 700}),
    ])
    def test_candidate_revenue_curve(self, name, params):
        dist = BidDistribution(name, **params)
        km = random_km(1000, 10, 500, bidder_env(dist, np.random.default_rng(3)), np.random.default_rng(4))
        true_rev = km.candidates / G * dist.tail()[km.candidates]
        assert np.max(np.abs(km.candidate_revenue() - true_rev)) <= 0.05

    def _exponential_run(self):
        dist = BidDistribution("exponential", beta=1 / 900)
        km = random_km(2000, 20, 500, bidder_env(dist, np.random.default_rng(0)), np.random.default_rng(1))
        return dist, km

    @pytest.mark.xfail(strict=True, reason="r T(r) is within 4% of its peak over [0.69, 1.0], so "
                                           "the location is not identifiable at this sample size")
    def test_exponential_near_brute_force(self):
        dist, km = self._exponential_run()
        assert abs(km.result - revenue_argmax(dist.tail())) <= 30

    def test_exponential_revenue_near_brute_force(self):
        dist, km = self._exponential_run()
        rev = np.arange(G + 1) / G * dist.tail()
        assert rev[km.result] >= 0.95 * rev.max()

    def test_trace_csv(self, tmp_path):
        km = random_km(20, 1, 3, constant_env(400), np.random.default_rng(0))
        text = km.write_trace(tmp_path / "trace.csv")
        lines = text.splitlines()
        assert lines[0] == "round,phase,reserve,sold,candidate_tail"
        assert len(lines) == 1 + 20 + 3 * 3
        assert lines[21].split(",")[1] == "2"

    def test_deterministic(self):
        dist = BidDistribution("uniform", high=0.8)
        runs = [random_km(400, 5, 40, bidder_env(dist, np.random.default_rng(7)),
                          np.random.default_rng(8)).write_trace() for _ in range(2)]
        assert runs[0] == runs[1]


class TestSupport:
    def test_phase1_draws_stay_in_support(self):
        km = RandomKM(300, 2, 5, rng=np.random.default_rng(0), support=40)
        draws = []
        for _ in range(300):
            draws.append(km.next_reserve())
            km.observe(CensoredObservation(draws[-1], False))
        assert max(draws) <= 40 and min(draws) >= 0
        assert len(set(draws)) > 30

    def test_support_clipped_to_grid(self):
        assert RandomKM(10, 1, 1, support=5000).upper == G
        assert RandomKM(10, 1, 1).upper == G
