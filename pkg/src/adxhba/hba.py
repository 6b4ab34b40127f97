"""Belief-based publisher for censored posted-price auctions.

The publisher keeps one simulable model per hypothesised advertiser type,
scores each against every censored outcome, and best-responds to the
belief-weighted mixture of their bid tails.  When the most likely type is a
stochastic bidder it hands pricing over to :class:`~adxhba.km.RandomKM`.

The advertiser's remaining budget is public here: the daily budget is common
knowledge and it only moves on sales, by the posted reserve.  Models and
tails therefore account for sales the budget would refuse.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .advertisers import AdvertiserSpec, budget_bucket, learned_bid
from .distributions import BidDistribution
from .game import CensoredObservation, GameConfig, GameState, to_index
from .km import RandomKM
from .learners import N_ARMS, SoftmaxQ, arm_index_map, arm_prices, fine_tail

MODES = ("product", "sum")


def censored_likelihood(tail: np.ndarray, obs: CensoredObservation) -> float:
    """Probability of ``obs`` under a bid distribution with tail ``tail``."""
    t = float(tail[obs.reserve])
    return t if obs.sold else 1.0 - t


def update_posterior(weights, likelihoods, mode: str = "product", prior=None, floor: float = 0.0):
    """One normalised belief update.

    ``product``: ``weights * likelihoods`` (``weights`` act as the prior).
    ``sum``: ``prior * likelihoods`` where ``likelihoods`` are running sums of
    per-round probabilities; ``weights`` is ignored.  No mass left resets to
    uniform.
    """
    lik = np.asarray(likelihoods, dtype=float)
    if mode == "product":
        if floor > 0:
            lik = np.maximum(lik, floor)
        post = np.asarray(weights, dtype=float) * lik
    elif mode == "sum":
        prior = np.full(len(lik), 1.0 / len(lik)) if prior is None else np.asarray(prior, float)
        post = prior * lik
    else:
        raise ValueError(f"unknown posterior mode {mode!r}; expected one of {MODES}")
    total = post.sum()
    if not total > 0:
        return np.full(len(lik), 1.0 / len(lik))
    return post / total


class Beliefs:
    """Posterior over a finite type list.

    Product mode accumulates log-likelihoods so that long histories neither
    underflow nor need ad hoc rescaling; each per-round likelihood is
    floored at ``floor``.  With ``decay < 1`` past evidence is discounted
    geometrically, so a type ruled out long ago can recover when the
    opponent changes its behaviour.  Sum mode keeps running sums of
    per-round probabilities.
    """

    def __init__(self, n: int, mode: str = "product", prior=None, floor: float = 1e-6, decay: float = 1.0):
        if mode not in MODES:
            raise ValueError(f"unknown posterior mode {mode!r}; expected one of {MODES}")
        if not 0 < decay <= 1:
            raise ValueError(f"decay must lie in (0, 1], got {decay}")
        self.n, self.mode, self.floor, self.decay = n, mode, floor, decay
        self.prior = np.full(n, 1.0 / n) if prior is None else np.asarray(prior, float) / np.sum(prior)
        self.log_prior = np.log(self.prior)
        self.reset()

    def reset(self):
        self.log_lik = np.zeros(self.n)
        self.sums = np.zeros(self.n)
        self.resets = 0
        self._cache = self.prior.copy()

    @property
    def weights(self) -> np.ndarray:
        return self._cache

    def update(self, likelihoods: np.ndarray) -> np.ndarray:
        lik = np.asarray(likelihoods, dtype=float)
        if self.mode == "sum":
            self.sums += lik
            self._cache = update_posterior(None, self.sums, "sum", self.prior)
            return self._cache
        with np.errstate(divide="ignore"):
            step = np.log(np.maximum(lik, self.floor) if self.floor > 0 else lik)
        self.log_lik = self.decay * self.log_lik + step
        log_w = self.log_lik + self.log_prior
        top = log_w.max()
        if not np.isfinite(top):
            # every type ruled out: the hypothesis space missed the opponent
            self.resets += 1
            self.log_lik = np.zeros(self.n)
            log_w = self.log_prior.copy()
            top = log_w.max()
        w = np.exp(log_w - top)
        self._cache = w / w.sum()
        # a common shift leaves the posterior unchanged and keeps the sums small
        self.log_lik -= self.log_lik[np.isfinite(self.log_lik)].max()
        return self._cache


def censored_utility(obs: CensoredObservation, tail: np.ndarray, grid: int) -> np.ndarray:
    """Estimated revenue each candidate price would have earned last round.

    A sale at ``r`` means every ``v <= r`` would have sold too (earning ``v``);
    a miss at ``r`` means every ``v >= r`` would have missed (earning 0).
    Elsewhere the outcome is unknown and the expectation ``v T(v)`` is used.
    """
    v = np.arange(len(tail)) / grid
    u = v * tail
    if obs.sold:
        u[: obs.reserve + 1] = v[: obs.reserve + 1]
    else:
        u[obs.reserve:] = 0.0
    return u


class PublisherQTable:
    """Q-values over (state bucket, reserve) learned from censored utilities."""

    def __init__(self, n_states: int, n_prices: int, alpha: float = 0.1, gamma: float = 0.95):
        if not 0 < alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        if not 0 <= gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
        self.alpha, self.gamma = alpha, gamma
        self.q = np.zeros((n_states, n_prices))

    def update(self, s: int, utility, s_next: int, candidates=slice(None)):
        target = utility + self.gamma * self.q[s_next].max()
        self.q[s, candidates] += self.alpha * (target - self.q[s, candidates])


def update_q(q: float, utility: float, max_next: float, alpha: float, gamma: float) -> float:
    return q + alpha * (utility + gamma * max_next - q)


def expected_payoff(weights, tails, grid: int, q_next=None, gamma: float = 0.0) -> np.ndarray:
    """Belief-weighted value of posting each reserve.

    The immediate term is ``r`` times the mixture tail; with ``gamma > 0`` the
    learned value of the same reserve in the next state is added, discounted.
    """
    mix = np.asarray(weights) @ np.asarray(tails)
    e = np.arange(mix.shape[-1]) / grid * mix
    if gamma and q_next is not None:
        e = e + gamma * q_next
    return e


def argmax_set(values: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    top = values.max()
    return np.flatnonzero(values >= top - rtol * max(abs(top), 1.0))


# --- type models -----------------------------------------------------------


class TypeModel:
    """A hypothesised advertiser that can be run alongside the real game.

    ``tail(state)`` is the model's bid tail for the coming round;
    ``advance(obs, before, after)`` feeds it the public outcome.
    """

    is_random = False
    dynamic = False

    def __init__(self, spec: AdvertiserSpec):
        self.spec = spec
        self.kind = spec.kind
        self.name = f"{spec.label}({spec.param_id})"

    def reset(self, config: GameConfig, rng: np.random.Generator):
        self.config = config
        self.grid = config.grid

    def tail(self, state: GameState) -> np.ndarray:
        raise NotImplementedError

    def advance(self, obs: CensoredObservation, before: GameState, after: GameState):
        pass


class StaticModel(TypeModel):
    def __init__(self, spec: AdvertiserSpec):
        super().__init__(spec)
        self.is_random = spec.kind == "random"

    def reset(self, config, rng):
        super().reset(config, rng)
        p = dict(self.spec.params)
        if self.kind == "greedy":
            t = np.zeros(config.grid + 1)
            t[: to_index(p["v_max"], config.grid) + 1] = 1.0
            self._tail = t
        else:
            dist = p.pop("dist")
            self._tail = BidDistribution(dist, config.grid, **p).tail()

    def tail(self, state=None):
        return self._tail


def _point_mass_tail(index: int, grid: int) -> np.ndarray:
    t = np.zeros(grid + 1)
    t[: index + 1] = 1.0
    return t


class LTBModel(TypeModel):
    dynamic = True

    def reset(self, config, rng):
        super().reset(config, rng)
        p = self.spec.params
        self.m = int(p.get("m", 100))
        f = p.get("f")
        self.f = config.campaign_reach if f is None else f
        self.n = config.total_rounds
        self.prices: list[int] = []
        self.learned = None
        self._opt_out = _point_mass_tail(0, config.grid)
        self._tail = None

    def tail(self, state):
        if state.round < self.m:
            return self._opt_out
        if self.learned is None:
            self.learned = learned_bid(self.prices, self.m, self.n, self.f,
                                       self.config.daily_budget * self.config.days, self.grid)
            self._tail = _point_mass_tail(self.learned, self.grid)
        return self._tail

    def advance(self, obs, before, after):
        if len(self.prices) < self.m:
            self.prices.append(obs.reserve)


class _ArmModel(TypeModel):
    """Shared plumbing for models that bid on the coarse arm grid."""

    dynamic = True

    def reset(self, config, rng):
        super().reset(config, rng)
        self.rng = rng
        self.arms = arm_prices(config.grid, N_ARMS)
        self._index_map = arm_index_map(self.arms, config.grid)
        self._pmf = None

    def arm_pmf(self, state) -> np.ndarray:
        raise NotImplementedError

    def tail(self, state):
        self._pmf = self.arm_pmf(state)
        return fine_tail(self._pmf, self.arms, self.grid, self._index_map)

    map_arm = False

    def consistent_arm(self, obs, before: GameState) -> int:
        """The arm the model played, conditioned on the observed outcome.

        Drawn from the conditional distribution, or its mode when ``map_arm``
        is set (ties broken at random).
        """
        pmf = self._pmf
        if obs.sold:
            p = pmf * (self.arms >= obs.reserve)
        elif obs.reserve > before.budget_ticks:
            p = pmf
        else:
            p = pmf * (self.arms < obs.reserve)
        if p.sum() <= 0:
            p = pmf
        if self.map_arm:
            best = argmax_set(p)
            return int(best[0] if len(best) == 1 else best[self.rng.integers(len(best))])
        c = np.cumsum(p)
        return min(int(np.searchsorted(c, self.rng.random() * c[-1], side="right")), len(p) - 1)

    def reward(self, arm: int, obs) -> float:
        return (self.arms[arm] - obs.reserve) / self.grid if obs.sold else 0.0


class UCBModel(_ArmModel):
    """Weighted particle set of bandit states.

    A single copy drifts out of step the first time the real bandit explores
    unseen; the particles carry the competing explanations and are
    reweighted by each outcome, then resampled when their effective size
    halves.
    """

    n_particles = 16

    def reset(self, config, rng):
        super().reset(config, rng)
        p = self.spec.params
        self.k = int(p.get("k", 100))
        self.epsilon = float(p.get("epsilon", 0.1))
        m, n = self.n_particles, len(self.arms)
        self.counts = np.zeros((m, n))
        self.means = np.zeros((m, n))
        self.w = np.full(m, 1.0 / m)
        self.t = 0
        self._rows = np.arange(m)
        self._all_forced = np.ones(m, dtype=bool)
        self._none_forced = np.zeros(m, dtype=bool)
        self._unplayed = True

    def particle_arms(self) -> tuple[np.ndarray, np.ndarray]:
        """Each particle's candidate arm and whether it is forced."""
        m, n = self.counts.shape
        if self.t < self.k:
            return np.full(m, self.t % n), self._all_forced
        if self._unplayed:
            unplayed = self.counts == 0
            forced = unplayed.any(axis=1)
            self._unplayed = bool(forced.any())
            if self._unplayed:
                with np.errstate(divide="ignore"):
                    index = self.means + np.sqrt(2.0 * np.log(max(self.t, 1)) / self.counts)
                return np.where(forced, np.argmax(unplayed, axis=1), np.argmax(index, axis=1)), forced
        index = self.means + np.sqrt(2.0 * np.log(max(self.t, 1)) / self.counts)
        return np.argmax(index, axis=1), self._none_forced

    def arm_pmf(self, state):
        n = len(self.arms)
        self._arm, self._forced = self.particle_arms()
        if self._forced is self._all_forced:
            pmf = np.zeros(n)
            pmf[self._arm[0]] = 1.0
            return pmf
        greedy_mass = np.where(self._forced, 1.0, 1.0 - self.epsilon)
        pmf = np.full(n, float(self.w @ (1.0 - greedy_mass)) / n)
        np.add.at(pmf, self._arm, self.w * greedy_mass)
        return pmf

    def advance(self, obs, before, after):
        n = len(self.arms)
        rows = self._rows
        sold_reward = (self.arms - obs.reserve) / self.grid if obs.sold else None
        if self._forced is self._all_forced:
            # every particle played the same forced arm
            arm = self._arm
        else:
            cut = int(np.searchsorted(self.arms, obs.reserve, side="left"))
            if obs.sold:
                lo, hi = cut, n
            elif obs.reserve > before.budget_ticks:
                lo, hi = 0, n  # refused on budget: says nothing about the bid
            else:
                lo, hi = 0, cut
            explore = np.where(self._forced, 0.0, self.epsilon / n)
            greedy_mass = np.where(self._forced, 1.0, 1.0 - self.epsilon) + explore
            hit = (self._arm >= lo) & (self._arm < hi)
            lik = explore * (hi - lo) + np.where(hit, greedy_mass - explore, 0.0)
            # which arm each particle played, given the outcome
            p_greedy = np.where(hit, greedy_mass / np.maximum(lik, 1e-300), 0.0)
            if hi > lo:
                spread = lo + self.rng.integers(0, hi - lo, len(lik))
                arm = np.where(self.rng.random(len(lik)) < p_greedy, self._arm, spread)
            else:
                arm = self._arm
            w = self.w * lik
            total = w.sum()
            self.w = w / total if total > 0 else np.full(len(w), 1.0 / len(w))
        reward = sold_reward[arm] if obs.sold else 0.0
        self.counts[rows, arm] += 1
        self.means[rows, arm] += (reward - self.means[rows, arm]) / self.counts[rows, arm]
        self.t += 1
        if 1.0 / (self.w @ self.w) < len(self.w) / 2:
            self._resample()

    def _resample(self):
        m = len(self.w)
        positions = (self.rng.random() + np.arange(m)) / m
        idx = np.minimum(np.searchsorted(np.cumsum(self.w), positions), m - 1)
        self.counts = self.counts[idx]
        self.means = self.means[idx]
        self.w = np.full(m, 1.0 / m)


class QLearnModel(_ArmModel):
    def reset(self, config, rng):
        super().reset(config, rng)
        p = self.spec.params
        self.n_buckets = int(p.get("n_buckets", 10))
        self.learner = SoftmaxQ(self.n_buckets, N_ARMS, p.get("alpha", 0.2),
                                p.get("gamma", 0.9), p.get("tau", 500.0))
        self.start_ticks = config.budget_ticks

    def arm_pmf(self, state):
        return self.learner.probabilities(budget_bucket(state.budget_ticks, self.start_ticks, self.n_buckets))

    def advance(self, obs, before, after):
        arm = self.consistent_arm(obs, before)
        s = budget_bucket(before.budget_ticks, self.start_ticks, self.n_buckets)
        s2 = budget_bucket(after.budget_ticks, self.start_ticks, self.n_buckets)
        self.learner.update(s, arm, self.reward(arm, obs), s2)


def make_type_model(spec: AdvertiserSpec) -> TypeModel:
    if spec.kind in ("greedy", "random"):
        return StaticModel(spec)
    if spec.kind == "ltb":
        return LTBModel(spec)
    if spec.kind == "ucb":
        return UCBModel(spec)
    if spec.kind == "qlearn":
        return QLearnModel(spec)
    raise ValueError(f"no type model for advertiser kind {spec.kind!r}")


# --- the publisher ----------------------------------------------------------


class HBAPublisher:
    """Belief-based best responder with a random-querying fallback.

    Parameters
    ----------
    types : hypothesised advertiser specs (the type space).
    mode : ``"product"`` (Bayes) or ``"sum"`` (running sum of probabilities).
    km : ``(k, l, k_c)`` for the random-querying subroutine.
    alpha, gamma : step size and discount of the censored Q-table.
    decay : per-round discount on accumulated log-likelihoods (1 is exact Bayes).
    narrow_km : restrict random querying to the support of the stochastic
        types still in contention instead of the whole grid.
    """

    name = "hba-km"

    def __init__(self, types: list[AdvertiserSpec], mode: str = "product", prior=None,
                 floor: float = 1e-6, alpha: float = 0.1, gamma: float = 0.95,
                 km: tuple[int, int, int] = (1000, 10, 500), km_estimator: str = "isotonic",
                 n_state_buckets: int = 10, use_km: bool = True, narrow_km: bool = True,
                 decay: float = 1.0):
        if not types:
            raise ValueError("type space must not be empty")
        self.specs = list(types)
        self.mode, self.prior, self.floor = mode, prior, floor
        self.alpha, self.gamma = alpha, gamma
        self.km_params = tuple(km)
        self.km_estimator = km_estimator
        self.n_state_buckets = n_state_buckets
        self.use_km = use_km
        self.narrow_km = narrow_km
        self.decay = decay

    # setup

    def reset(self, config: GameConfig, rng: np.random.Generator):
        self.config = config
        self.grid = config.grid
        self.ipd = config.impressions_per_day
        seeds = rng.spawn(len(self.specs) + 2)
        self.rng, km_rng = seeds[0], seeds[1]
        self.models = [make_type_model(s) for s in self.specs]
        for m, r in zip(self.models, seeds[2:]):
            m.reset(config, r)
        self.static_idx = np.array([i for i, m in enumerate(self.models) if not m.dynamic], dtype=int)
        self.dynamic_idx = np.array([i for i, m in enumerate(self.models) if m.dynamic], dtype=int)
        self.static_tails = np.array([self.models[i].tail() for i in self.static_idx]).reshape(
            len(self.static_idx), config.grid + 1)
        self.is_random = np.array([m.is_random for m in self.models])
        self.beliefs = Beliefs(len(self.models), self.mode, self.prior, self.floor, self.decay)
        self.qtable = PublisherQTable(self.n_state_buckets, config.grid + 1, self.alpha, self.gamma)
        self.values = np.arange(config.grid + 1) / config.grid
        k, l, k_c = self.km_params
        self.km = RandomKM(k, l, k_c, config.grid, km_rng, self.km_estimator)
        self.km_active = False
        self.km_switches = 0
        self.start_ticks = config.budget_ticks
        self.state = GameState(self.start_ticks, 0, 0, config.grid)
        self.history: list[np.ndarray] = []
        self._tails = None
        self._t = -1

    # helpers

    def bucket(self, t: int) -> int:
        return min(self.n_state_buckets * (t % self.ipd) // self.ipd, self.n_state_buckets - 1)

    def tails(self) -> np.ndarray:
        """Tail matrix (types x prices) for the current round."""
        out = np.empty((len(self.models), self.grid + 1))
        if len(self.static_idx):
            out[self.static_idx] = self.static_tails
        for i in self.dynamic_idx:
            out[i] = self.models[i].tail(self.state)
        return out

    def most_likely(self) -> int:
        return int(np.argmax(self.beliefs.weights))

    def _check_km(self):
        if self.use_km:
            self.km_active = bool(self.is_random[self.most_likely()])

    def random_support(self, mass: float = 1e-4, rel: float = 1e-2) -> int:
        """Highest price any still-plausible stochastic type bids with tail mass above ``mass``.

        A stochastic type is plausible when its weight is at least ``rel``
        times that of the most likely stochastic type.
        """
        w = self.beliefs.weights
        rand = np.flatnonzero(self.is_random)
        keep = rand[w[rand] >= rel * w[rand].max()]
        tails = self.static_tails[np.searchsorted(self.static_idx, keep)]
        return int(max(np.flatnonzero(t > mass).max(initial=0) for t in tails))

    def expected_payoff(self) -> np.ndarray:
        if self._tails is None:
            self._tails = self.tails()
        mix = self.beliefs.weights @ self._tails
        mix[self.state.budget_ticks + 1:] = 0.0
        s_next = self.bucket(self._t + 1)
        e = self.values * mix
        if self.gamma:
            e = e + self.gamma * self.qtable.q[s_next]
        return e

    def reserve_distribution(self) -> tuple[np.ndarray, np.ndarray]:
        """Prices the belief branch would post now, with their probabilities."""
        best = argmax_set(self.expected_payoff())
        return best, np.full(len(best), 1.0 / len(best))

    # game interface

    def act(self, t: int) -> int:
        self._t = t
        if t % self.ipd == 0:
            self.state = GameState(self.start_ticks, t, t // self.ipd, self.grid)
            if t > 0:
                was = self.km_active
                self._check_km()
                self.km_switches += was != self.km_active
        else:
            self.state = GameState(self.state.budget_ticks, t, t // self.ipd, self.grid)
        self._tails = self.tails()
        if self.km_active:
            if self.narrow_km and self.km.phase == 1:
                # the plausible support keeps shrinking as beliefs sharpen
                self.km.support = self.random_support()
            return self.km.next_reserve()
        best, _ = self.reserve_distribution()
        if len(best) == 1:
            return int(best[0])
        return int(best[self.rng.integers(len(best))])

    def observe(self, obs: CensoredObservation):
        before = self.state
        affordable = obs.reserve <= before.budget_ticks
        sold = obs.sold
        after = GameState(before.budget_ticks - obs.reserve if sold else before.budget_ticks,
                          before.round + 1, before.day, self.grid)
        if affordable:
            col = self._tails[:, obs.reserve]
            lik = col if sold else 1.0 - col
            self.beliefs.update(lik)
            mix = self.beliefs.weights @ self._tails
            mix[before.budget_ticks + 1:] = 0.0
            u = censored_utility(obs, mix, self.grid)
            self.qtable.update(self.bucket(self._t), u, self.bucket(self._t + 1))
            if self.km_active:
                self.km.observe(obs)
        self.history.append(self.beliefs.weights)
        for i in self.dynamic_idx:
            self.models[i].advance(obs, before, after)
        self.state = after
        if not self.km_active and affordable:
            was = self.km_active
            self._check_km()
            self.km_switches += was != self.km_active

    # diagnostics

    @property
    def type_names(self) -> list[str]:
        return [m.name for m in self.models]

    def class_weight(self, kind: str) -> float:
        w = self.beliefs.weights
        if kind == "random":
            return float(w[self.is_random].sum())
        return float(sum(w[i] for i, m in enumerate(self.models) if m.kind == kind))

    def write_beliefs(self, dest=None) -> str:
        """Belief trajectory as CSV: one row per round, one column per type."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round"] + self.type_names)
        for t, row in enumerate(self.history):
            w.writerow([t] + [f"{x:.9g}" for x in row])
        text = buf.getvalue()
        if dest is not None:
            Path(dest).write_text(text)
        return text
