"""Reference publishers: full-information optima and two learning baselines.

``OfflineOptimal`` knows the advertiser's type and parameters (and, for the
learning types, reads its live internal state); ``OnlineOptimal`` sees each
round's bid before pricing.  Both take an :class:`~adxhba.game.OracleAccess`,
which only the harness hands out.
"""

from __future__ import annotations

import numpy as np

from .advertisers import Greedy, LearnThenBid, QLearnAdvertiser, RandomBidder, UCBAdvertiser
from .distributions import revenue_argmax
from .game import CensoredObservation, EpisodeLog, GameConfig, GameState, OracleAccess
from .learners import N_ARMS, UCB, SoftmaxQ, arm_prices, fine_tail


def online_opt_reserve(bid: int, budget_ticks: int) -> int:
    """Highest reserve that still sells: the bid, capped by the remaining budget."""
    return max(min(int(bid), int(budget_ticks)), 0)


def online_opt_revenue(log: EpisodeLog) -> float:
    """Revenue a clairvoyant publisher earns on the episode's realised bid sequence.

    Each day starts from the full daily budget and every round sells at
    ``min(bid, remaining budget)``.
    """
    cfg = log.config
    bids = log.bids()
    total = 0
    for day in range(cfg.days):
        budget = cfg.budget_ticks
        for b in bids[day * cfg.impressions_per_day:(day + 1) * cfg.impressions_per_day]:
            r = online_opt_reserve(b, budget)
            budget -= r
            total += r
    return total / cfg.grid


def best_response(advertiser, state: GameState | None = None) -> int:
    """Revenue-maximising reserve against a known advertiser in its current state.

    ``advertiser`` must have been ``reset``.  Greedy and stochastic bidders get
    a constant; learning types are priced against their next-action
    distribution.  The reserve is capped by the remaining budget when
    ``state`` is given.
    """
    if isinstance(advertiser, Greedy):
        r = advertiser.bid
    elif isinstance(advertiser, RandomBidder):
        r = revenue_argmax(advertiser.distribution.tail(), advertiser.distribution.grid)
    elif isinstance(advertiser, LearnThenBid):
        if advertiser.learned is None:
            # opted out: nothing sells, so post the top price
            r = advertiser.grid
        else:
            r = advertiser.learned
    elif isinstance(advertiser, UCBAdvertiser):
        r = _tail_argmax(advertiser.bandit.distribution(), advertiser.arms, state)
    elif isinstance(advertiser, QLearnAdvertiser):
        s = advertiser.bucket(state.budget_ticks if state is not None else advertiser.start_ticks)
        r = _tail_argmax(advertiser.learner.probabilities(s), advertiser.arms, state)
    else:
        raise ValueError(f"no best response for advertiser {type(advertiser).__name__}")
    if state is not None:
        r = min(r, state.budget_ticks)
    return int(r)


def _tail_argmax(pmf, arms, state) -> int:
    grid = int(arms[-1])
    tail = fine_tail(pmf, arms, grid)
    if state is not None:
        tail = tail.copy()
        tail[state.budget_ticks + 1:] = 0.0
    return revenue_argmax(tail, grid)


class OfflineOptimal:
    """Best response with a-priori knowledge of the advertiser's type."""

    name = "offline-opt"

    def __init__(self, oracle: OracleAccess):
        self.oracle = oracle

    def reset(self, config: GameConfig, rng):
        self.config = config

    def act(self, t: int) -> int:
        return best_response(self.oracle.advertiser, self.oracle.state)

    def observe(self, obs: CensoredObservation):
        pass


class OnlineOptimal:
    """Posts ``min(bid, budget)`` every round, seeing the bid in advance."""

    name = "online-opt"

    def __init__(self, oracle: OracleAccess):
        self.oracle = oracle

    def reset(self, config: GameConfig, rng):
        pass

    def act(self, t: int) -> int:
        return online_opt_reserve(self.oracle.bid, self.oracle.state.budget_ticks)

    def observe(self, obs: CensoredObservation):
        pass


class FixedReserve:
    """Posts the same reserve every round."""

    name = "fixed"

    def __init__(self, reserve: int):
        self.reserve = int(reserve)

    def reset(self, config, rng):
        pass

    def act(self, t: int) -> int:
        return self.reserve

    def observe(self, obs):
        pass


def publisher_reward(obs: CensoredObservation, grid: int) -> float:
    return obs.reserve / grid if obs.sold else 0.0


class QLearnPublisher:
    """Softmax Q-learning over coarse reserves; state is the round-within-day decile."""

    name = "qlearn-pub"

    def __init__(self, alpha: float = 0.1, gamma: float = 0.9, tau: float = 0.02,
                 n_buckets: int = 10, n_arms: int = N_ARMS):
        self.n_buckets, self.n_arms = n_buckets, n_arms
        self.learner = SoftmaxQ(n_buckets, n_arms, alpha, gamma, tau)

    def reset(self, config: GameConfig, rng):
        self.grid = config.grid
        self.ipd = config.impressions_per_day
        self.arms = arm_prices(config.grid, self.n_arms)
        self.learner.reset()
        self.rng = rng

    def bucket(self, t: int) -> int:
        return min(self.n_buckets * (t % self.ipd) // self.ipd, self.n_buckets - 1)

    def act(self, t: int) -> int:
        self.t = t
        self.a = self.learner.select(self.bucket(t), self.rng)
        return int(self.arms[self.a])

    def observe(self, obs: CensoredObservation):
        self.learner.update(self.bucket(self.t), self.a, publisher_reward(obs, self.grid),
                            self.bucket(self.t + 1))


class UCBPublisher:
    """UCB over coarse reserves with an epsilon-greedy tail."""

    name = "ucb-pub"

    def __init__(self, k: int = N_ARMS, epsilon: float = 0.05, n_arms: int = N_ARMS):
        self.bandit = UCB(n_arms, k, epsilon)
        self.n_arms = n_arms

    def reset(self, config: GameConfig, rng):
        self.grid = config.grid
        self.arms = arm_prices(config.grid, self.n_arms)
        self.bandit.reset()
        self.rng = rng

    def act(self, t: int) -> int:
        self.arm = self.bandit.select(self.rng)
        return int(self.arms[self.arm])

    def observe(self, obs: CensoredObservation):
        self.bandit.update(self.arm, publisher_reward(obs, self.grid))
