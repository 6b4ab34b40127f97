"""Tail estimation from censored sales and the two-phase random-querying pricer.

A sale at reserve ``r`` says the bid was at least ``r``, so every price
``x <= r`` is right-censored; a miss says the bid was below ``r``, so every
``x >= r`` is left-censored.  ``tail_estimate`` is the share of
right-censored observations among all observations covering ``x``.

That ratio is biased when reserves are spread out (for a U[0, 1] bidder
queried uniformly it tends to ``(1-x)^2 / ((1-x)^2 + x^2)``), so pricing uses
``isotonic_tail`` by default: the nonparametric maximum-likelihood tail for
this kind of one-inspection censoring, i.e. the non-increasing fit to the
per-price sale frequencies.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import isotonic_regression

from .game import DEFAULT_GRID, CensoredObservation

ESTIMATORS = ("isotonic", "ratio")


class KMCounters:
    """Per-price right (``R``) and left (``L``) censoring tallies.

    Also keeps how often each price was posted (``queries``) and sold
    (``sales``), which the isotonic estimate needs.
    """

    def __init__(self, grid: int = DEFAULT_GRID):
        self.grid = grid
        self.R = np.zeros(grid + 1, dtype=np.int64)
        self.L = np.zeros(grid + 1, dtype=np.int64)
        self.queries = np.zeros(grid + 1, dtype=np.int64)
        self.sales = np.zeros(grid + 1, dtype=np.int64)
        self.n = 0

    def record(self, obs: CensoredObservation) -> "KMCounters":
        if obs.sold:
            self.R[: obs.reserve + 1] += 1
            self.sales[obs.reserve] += 1
        else:
            self.L[obs.reserve:] += 1
        self.queries[obs.reserve] += 1
        self.n += 1
        return self


def record_censored(counters: KMCounters, obs: CensoredObservation) -> KMCounters:
    return counters.record(obs)


@dataclass
class TailEstimate:
    values: np.ndarray  # NaN where undefined
    defined: np.ndarray

    def revenue(self, grid: int | None = None) -> np.ndarray:
        """``r * T(r)``, with ``-inf`` where the tail is undefined."""
        grid = len(self.values) - 1 if grid is None else grid
        rev = np.arange(len(self.values)) / grid * self.values
        return np.where(self.defined, rev, -np.inf)


def tail_estimate(counters: KMCounters) -> TailEstimate:
    total = counters.R + counters.L
    defined = total > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(defined, counters.R / total, np.nan)
    return TailEstimate(t, defined)


def isotonic_tail(counters: KMCounters) -> TailEstimate:
    """Non-increasing least-squares fit to per-price sale rates, weighted by
    query counts.  Defined only at prices that were actually posted."""
    q = np.flatnonzero(counters.queries)
    values = np.full(counters.grid + 1, np.nan)
    defined = np.zeros(counters.grid + 1, dtype=bool)
    if len(q):
        n = counters.queries[q]
        fit = isotonic_regression(counters.sales[q] / n, weights=n.astype(float), increasing=False)
        values[q] = np.clip(fit.x, 0.0, 1.0)
        defined[q] = True
    return TailEstimate(values, defined)


def estimate(counters: KMCounters, estimator: str = "isotonic") -> TailEstimate:
    if estimator == "isotonic":
        return isotonic_tail(counters)
    if estimator == "ratio":
        return tail_estimate(counters)
    raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")


def best_price(prices, revenue) -> int:
    """Price with the highest revenue; ties go to the lower price."""
    prices = np.asarray(prices)
    revenue = np.asarray(revenue, dtype=float)
    top = revenue.max()
    return int(prices[np.flatnonzero(revenue >= top - 1e-12)].min())


@dataclass
class RandomKM:
    """Two-phase reserve search against a stochastic bidder.

    Phase 1 posts ``k`` uniformly random reserves and builds the counters;
    the revenue argmax of the ``estimator`` tail seeds a window of ``2l + 1``
    neighbouring candidates (clipped to the grid).  Phase 2 posts each candidate ``k_c`` times in turn
    and estimates its tail from those outcomes alone.  The result is the
    candidate with the best estimated revenue.

    ``support`` narrows phase 1 to ``[0, support]`` when the bidder's values
    are known to lie there.

    Drive it with ``next_reserve`` / ``observe``, or hand it an environment
    via :func:`random_km`.
    """

    k: int = 1000
    l: int = 10
    k_c: int = 500
    grid: int = DEFAULT_GRID
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    estimator: str = "isotonic"
    support: int | None = None

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.k < 1 or self.k_c < 1 or self.l < 0:
            raise ValueError(f"need k >= 1, k_c >= 1, l >= 0; got k={self.k}, k_c={self.k_c}, l={self.l}")
        self.counters = KMCounters(self.grid)
        self.phase1_price: int | None = None
        self.candidates: np.ndarray | None = None
        self.cand_sold: np.ndarray | None = None
        self.cand_seen: np.ndarray | None = None
        self.result: int | None = None
        self.trace: list[tuple[int, int, int, bool]] = []
        self._t = 0
        self._pending: int | None = None

    @property
    def upper(self) -> int:
        """Top of the phase-1 query range (the whole grid unless narrowed)."""
        return self.grid if self.support is None else int(min(max(self.support, 0), self.grid))

    @property
    def started(self) -> bool:
        return self._t > 0

    @property
    def rounds_needed(self) -> int:
        return self.k + (2 * self.l + 1) * self.k_c

    @property
    def done(self) -> bool:
        return self.result is not None

    @property
    def phase(self) -> int:
        if self.result is not None:
            return 3
        return 1 if self._t < self.k else 2

    def next_reserve(self) -> int:
        if self.result is not None:
            self._pending = self.result
        elif self._t < self.k:
            self._pending = int(self.rng.integers(0, self.upper + 1))
        else:
            j = (self._t - self.k) // self.k_c
            self._pending = int(self.candidates[j])
        return self._pending

    def observe(self, obs: CensoredObservation):
        if self.result is not None:
            return
        self.trace.append((self._t, self.phase, obs.reserve, obs.sold))
        if self._t < self.k:
            self.counters.record(obs)
            self._t += 1
            if self._t == self.k:
                self._open_candidates()
            return
        j = (self._t - self.k) // self.k_c
        self.cand_seen[j] += 1
        self.cand_sold[j] += obs.sold
        self._t += 1
        if self._t == self.k + len(self.candidates) * self.k_c:
            self.result = best_price(self.candidates, self.candidate_revenue())

    def _open_candidates(self):
        rev = estimate(self.counters, self.estimator).revenue(self.grid)
        if not np.isfinite(rev).any():
            self.phase1_price = 0
        else:
            self.phase1_price = best_price(np.arange(self.grid + 1), rev)
        lo = max(self.phase1_price - self.l, 0)
        hi = min(self.phase1_price + self.l, self.grid)
        self.candidates = np.arange(lo, hi + 1)
        self.cand_sold = np.zeros(len(self.candidates), dtype=np.int64)
        self.cand_seen = np.zeros(len(self.candidates), dtype=np.int64)

    def candidate_tails(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.cand_seen > 0, self.cand_sold / np.maximum(self.cand_seen, 1), np.nan)

    def candidate_revenue(self) -> np.ndarray:
        t = self.candidate_tails()
        return np.where(np.isnan(t), -np.inf, self.candidates / self.grid * t)

    def tail(self) -> TailEstimate:
        return estimate(self.counters, self.estimator)

    def write_trace(self, dest=None) -> str:
        """CSV of every query: round, phase, reserve, sold, and the running
        candidate tail estimate (empty during phase 1)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "phase", "reserve", "sold", "candidate_tail"])
        g = self.grid
        sold_by = {}
        seen_by = {}
        for t, phase, r, s in self.trace:
            est = ""
            if phase == 2:
                seen_by[r] = seen_by.get(r, 0) + 1
                sold_by[r] = sold_by.get(r, 0) + int(s)
                est = f"{sold_by[r] / seen_by[r]:.6f}"
            w.writerow([t, phase, f"{r / g:.6f}", int(s), est])
        text = buf.getvalue()
        if dest is not None:
            Path(dest).write_text(text)
        return text


def random_km(k: int, l: int, k_c: int, env: Callable[[int], CensoredObservation],
              rng: np.random.Generator, grid: int = DEFAULT_GRID,
              estimator: str = "isotonic") -> RandomKM:
    """Run the full search against ``env(reserve) -> CensoredObservation``.

    Returns the finished estimator; its ``result`` is the chosen reserve.
    """
    km = RandomKM(k, l, k_c, grid, rng, estimator)
    while not km.done:
        km.observe(env(km.next_reserve()))
    return km


def bidder_env(distribution, rng: np.random.Generator) -> Callable[[int], CensoredObservation]:
    """Censored environment for a stationary bidder with unlimited budget.

    Resets the distribution's sample buffer so draws depend only on ``rng``.
    """
    distribution.reset()
    def env(reserve: int) -> CensoredObservation:
        return CensoredObservation(reserve, distribution.sample(rng) >= reserve)
    return env
