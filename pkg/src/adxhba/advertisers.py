"""Advertiser strategies: the hypothesised type space plus a neural-net adversary."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .distributions import DISTRIBUTIONS, BidDistribution
from .game import GameConfig, GameState, RoundOutcome, to_index
from .learners import N_ARMS, UCB, SoftmaxQ, arm_prices
from .nn import FeedForward, HillClimber

KINDS = ("greedy", "random", "ltb", "ucb", "qlearn", "nn")


class Greedy:
    kind = "greedy"
    name = "greedy"

    def __init__(self, v_max: float = 1.0):
        self.v_max = v_max
        self.params = {"v_max": v_max}

    def reset(self, config: GameConfig, rng):
        self.bid = to_index(self.v_max, config.grid)

    def act(self, state: GameState) -> int:
        return self.bid

    def observe(self, outcome: RoundOutcome, state: GameState):
        pass


class RandomBidder:
    """I.i.d. bids from a fixed distribution (see ``BidDistribution``)."""

    kind = "random"

    def __init__(self, dist: str, **params):
        self.name = dist
        self.params = dict(params)
        # validate eagerly so bad parameters fail at construction
        self.distribution = BidDistribution(dist, **params)

    def reset(self, config: GameConfig, rng):
        if self.distribution.grid != config.grid:
            self.distribution = BidDistribution(self.name, config.grid, **self.params)
        self.distribution.reset()
        self.rng = rng

    def act(self, state: GameState) -> int:
        return self.distribution.sample(self.rng)

    def observe(self, outcome, state):
        pass


def learned_bid(observed, m: int, n: int, f: float, budget_total: float, grid: int) -> int:
    """Constant bid a Learn-Then-Bid advertiser commits to after its learning phase.

    ``observed`` are the price indices seen while opted out.  The reach price
    is the highest observed price whose empirical tail still covers the target
    fraction ``f n / (n - m)``; the budget price is the highest price up to
    which spending ``z (n - m) T(z)`` stays within ``budget_total``.  The bid
    is the smaller of the two.  An unreachable target falls back to the
    highest observed price.
    """
    obs = np.sort(np.asarray(observed, dtype=np.int64))
    if len(obs) == 0:
        return 0
    k = len(obs)
    target = f * n / (n - m) if n > m else np.inf
    top = int(obs[-1])
    if target > 1:
        return top
    # empirical tail at each observation: fraction of observations >= it
    tail_at_obs = (k - np.searchsorted(obs, obs, side="left")) / k
    reach = int(obs[tail_at_obs >= target - 1e-12].max())
    z = np.arange(top + 1)
    tail = (k - np.searchsorted(obs, z, side="left")) / k
    over = z / grid * (n - m) * tail > budget_total + 1e-9
    budget_price = int(np.argmax(over)) - 1 if over.any() else top
    return max(min(reach, budget_price), 0)


class LearnThenBid:
    """Opts out (bids 0) for ``m`` rounds while recording prices, then bids a constant."""

    kind = "ltb"
    name = "ltb"

    def __init__(self, m: int = 100, f: float | None = None):
        if m < 1:
            raise ValueError(f"learning length m must be >= 1, got {m}")
        if f is not None and not 0 < f < 1:
            raise ValueError(f"target fraction f must lie in (0, 1), got {f}")
        self.m = int(m)
        self.f = f
        self.params = {"m": self.m, "f": f}

    def reset(self, config: GameConfig, rng):
        self.n = config.total_rounds
        if self.m >= self.n:
            raise ValueError(f"learning length m={self.m} must be below the horizon {self.n}")
        self.fraction = config.campaign_reach if self.f is None else self.f
        self.budget_total = config.daily_budget * config.days
        self.grid = config.grid
        self.prices: list[int] = []
        self.learned: int | None = None

    def act(self, state: GameState) -> int:
        if state.round < self.m:
            return 0
        if self.learned is None:
            self.learned = learned_bid(self.prices, self.m, self.n, self.fraction,
                                       self.budget_total, self.grid)
        return self.learned

    def observe(self, outcome: RoundOutcome, state: GameState):
        if len(self.prices) < self.m:
            self.prices.append(outcome.reserve)


class UCBAdvertiser:
    """UCB over a coarse bid grid; reward is the round's advertiser payoff."""

    kind = "ucb"
    name = "ucb"

    def __init__(self, k: int = 100, epsilon: float = 0.1, n_arms: int = N_ARMS):
        self.k, self.epsilon, self.n_arms = int(k), epsilon, n_arms
        self.params = {"k": self.k, "epsilon": epsilon}
        self.bandit = UCB(n_arms, self.k, epsilon)

    def reset(self, config: GameConfig, rng):
        self.arms = arm_prices(config.grid, self.n_arms)
        self.bandit.reset()
        self.rng = rng
        self.arm = None

    def act(self, state: GameState) -> int:
        self.arm = self.bandit.select(self.rng)
        return int(self.arms[self.arm])

    def observe(self, outcome: RoundOutcome, state: GameState):
        self.bandit.update(self.arm, outcome.advertiser_payoff)


def budget_bucket(budget_ticks: int, start_ticks: int, n_buckets: int) -> int:
    if start_ticks <= 0:
        return 0
    return min(int(n_buckets * budget_ticks / start_ticks), n_buckets - 1)


class QLearnAdvertiser:
    """Softmax Q-learning; states are buckets of remaining daily budget."""

    kind = "qlearn"
    name = "qlearn"

    def __init__(self, alpha: float = 0.2, gamma: float = 0.9, tau: float = 500.0,
                 n_buckets: int = 10, n_arms: int = N_ARMS):
        self.alpha, self.gamma, self.tau = alpha, gamma, tau
        self.n_buckets, self.n_arms = n_buckets, n_arms
        self.params = {"alpha": alpha, "gamma": gamma, "tau": tau}
        self.learner = SoftmaxQ(n_buckets, n_arms, alpha, gamma, tau)

    def reset(self, config: GameConfig, rng):
        self.arms = arm_prices(config.grid, self.n_arms)
        self.start_ticks = config.budget_ticks
        self.learner.reset()
        self.rng = rng
        self.s = self.a = None

    def bucket(self, budget_ticks: int) -> int:
        return budget_bucket(budget_ticks, self.start_ticks, self.n_buckets)

    def act(self, state: GameState) -> int:
        self.s = self.bucket(state.budget_ticks)
        self.a = self.learner.select(self.s, self.rng)
        return int(self.arms[self.a])

    def observe(self, outcome: RoundOutcome, state: GameState):
        self.learner.update(self.s, self.a, outcome.advertiser_payoff, self.bucket(state.budget_ticks))


class NeuralNetAdvertiser:
    """Bids to maximise the payoff predicted by a small net of (bid, reserve).

    Training samples are every impression of the first day and the first
    ``train_first`` impressions of later days; each arriving sample triggers
    one hill-climbing proposal and every day ends with a full training call.
    The bid is the coarse-grid argmax of the predicted payoff averaged over
    the last ``window`` reserves seen.
    """

    kind = "nn"
    name = "nn"

    def __init__(self, hidden_layers: int = 1, hidden_units: int = 8, window: int = 100,
                 train_first: int = 100, perturb_std: float = 0.1, proposals: int = 200,
                 patience: int = 50, online_steps: int = 1, init_scale: float = 1.0,
                 n_arms: int = N_ARMS):
        if not 1 <= hidden_layers <= 4:
            raise ValueError(f"hidden_layers must be in 1..4, got {hidden_layers}")
        self.hidden_layers, self.hidden_units = hidden_layers, hidden_units
        self.window, self.train_first = window, train_first
        self.online_steps, self.init_scale, self.n_arms = online_steps, init_scale, n_arms
        self.climber = HillClimber(perturb_std, proposals, patience)
        self.params = {"hidden_layers": hidden_layers}
        self.frozen = False
        self.net: FeedForward | None = None
        self.training_log: list[tuple[float, float]] = []

    @property
    def sizes(self):
        return [2] + [self.hidden_units] * self.hidden_layers + [1]

    def reset(self, config: GameConfig, rng, keep_weights: bool = False):
        """Fresh weights unless ``keep_weights`` is set or the net is frozen."""
        self.config = config
        self.rng = rng
        self.arm_values = arm_prices(config.grid, self.n_arms) / config.grid
        if not (keep_weights or self.frozen) or self.net is None:
            self.net = FeedForward.random(self.sizes, rng, self.init_scale)
            self.init_theta = self.net.theta.copy()
            self.samples: list[tuple[float, float, float]] = []
            self.training_log = []
        self.reserves: deque[int] = deque(maxlen=self.window)

    def _xy(self):
        data = np.asarray(self.samples)
        return data[:, :2], data[:, 2]

    def expected_payoffs(self) -> np.ndarray:
        g = self.config.grid
        if self.reserves:
            vals, counts = np.unique(np.fromiter(self.reserves, dtype=np.int64), return_counts=True)
            res, w = vals / g, counts / counts.sum()
        else:
            res = self.arm_values
            w = np.full(len(res), 1.0 / len(res))
        bids = np.repeat(self.arm_values, len(res))
        x = np.column_stack([bids, np.tile(res, len(self.arm_values))])
        pred = self.net.forward(x).reshape(len(self.arm_values), len(res))
        return pred @ w

    def act(self, state: GameState) -> int:
        arm = int(np.argmax(self.expected_payoffs()))
        return int(round(self.arm_values[arm] * self.config.grid))

    def in_training_window(self, t: int) -> bool:
        ipd = self.config.impressions_per_day
        return t < ipd or t % ipd < self.train_first

    def observe(self, outcome: RoundOutcome, state: GameState):
        self.reserves.append(outcome.reserve)
        if self.frozen:
            return
        t = state.round - 1
        g = self.config.grid
        if self.in_training_window(t):
            self.samples.append((outcome.bid / g, outcome.reserve / g, outcome.advertiser_payoff))
            x, y = self._xy()
            for _ in range(self.online_steps):
                self.climber.propose(self.net, x, y, self.rng)
        if (t + 1) % self.config.impressions_per_day == 0 and self.samples:
            self.train()

    def train(self) -> list[float]:
        x, y = self._xy()
        trace = self.climber.train(self.net, x, y, self.rng)
        self.training_log.append((trace[0], trace[-1]))
        return trace


@dataclass(frozen=True)
class AdvertiserSpec:
    """Kind plus parameters; ``build`` makes a fresh strategy object."""

    kind: str
    params: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.params.get("dist", self.kind) if self.kind == "random" else self.kind

    @property
    def param_id(self) -> str:
        items = [(k, v) for k, v in sorted(self.params.items()) if k != "dist"]
        return ";".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in items)

    def build(self):
        p = dict(self.params)
        if self.kind == "greedy":
            return Greedy(**p)
        if self.kind == "random":
            dist = p.pop("dist")
            return RandomBidder(dist, **p)
        if self.kind == "ltb":
            return LearnThenBid(**p)
        if self.kind == "ucb":
            return UCBAdvertiser(**p)
        if self.kind == "qlearn":
            return QLearnAdvertiser(**p)
        if self.kind == "nn":
            return NeuralNetAdvertiser(**p)
        raise ValueError(f"unknown advertiser kind {self.kind!r}; expected one of {KINDS}")


def random_spec(dist: str, **params) -> AdvertiserSpec:
    if dist not in DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {dist!r}")
    return AdvertiserSpec("random", {"dist": dist, **params})
