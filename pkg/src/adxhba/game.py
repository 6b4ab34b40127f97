"""Repeated posted-price game between one advertiser and one publisher.

Prices live on an integer grid: index ``i`` in ``[0, G]`` stands for the value
``i / G``.  Budgets are tracked in the same integer ticks so that the budget
ledger is exact.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Protocol

import numpy as np

DEFAULT_GRID = 1000


def to_value(index: int, grid: int = DEFAULT_GRID) -> float:
    return index / grid


def to_index(value: float, grid: int = DEFAULT_GRID) -> int:
    """Nearest grid index for ``value``, clipped to ``[0, grid]``."""
    return int(min(max(round(value * grid), 0), grid))


def floor_index(value: float, grid: int = DEFAULT_GRID) -> int:
    """Largest grid index whose value does not exceed ``value``."""
    # the epsilon absorbs float noise such as 0.3 * 1000 = 299.99999999999994
    return int(min(max(np.floor(value * grid + 1e-9), 0), grid))


@dataclass(frozen=True)
class GameConfig:
    days: int = 60
    impressions_per_day: int = 1000
    daily_budget: float = 500.0
    grid: int = DEFAULT_GRID
    campaign_reach: float = 0.5

    def __post_init__(self):
        if self.days <= 0 or self.impressions_per_day <= 0:
            raise ValueError("config must have at least one round "
                             f"(days={self.days}, impressions_per_day={self.impressions_per_day})")
        if self.daily_budget < 0:
            raise ValueError(f"daily_budget must be nonnegative, got {self.daily_budget}")
        if self.grid <= 0:
            raise ValueError(f"grid resolution must be positive, got {self.grid}")

    @property
    def total_rounds(self) -> int:
        return self.days * self.impressions_per_day

    @property
    def budget_ticks(self) -> int:
        return int(np.floor(self.daily_budget * self.grid + 1e-9))


@dataclass(frozen=True, slots=True)
class GameState:
    """Advertiser budget (in grid ticks) and the position in the schedule."""

    budget_ticks: int
    round: int = 0
    day: int = 0
    grid: int = DEFAULT_GRID

    @property
    def budget(self) -> float:
        return self.budget_ticks / self.grid


@dataclass(frozen=True, slots=True)
class RoundOutcome:
    bid: int
    reserve: int
    sold: bool
    publisher_payoff: float
    advertiser_payoff: float


@dataclass(frozen=True, slots=True)
class CensoredObservation:
    """What the publisher learns from a round: its own reserve and sold/unsold."""

    reserve: int
    sold: bool


def step(state: GameState, bid: int, reserve: int) -> tuple[RoundOutcome, GameState]:
    """Resolve one posted-price round.

    A bid at or above the reserve buys the impression at the reserve, unless
    the advertiser cannot afford it, in which case the round is unsold.
    """
    sold = bid >= reserve and state.budget_ticks >= reserve
    g = state.grid
    if sold:
        outcome = RoundOutcome(bid, reserve, True, reserve / g, (bid - reserve) / g)
        budget = state.budget_ticks - reserve
    else:
        outcome = RoundOutcome(bid, reserve, False, 0.0, 0.0)
        budget = state.budget_ticks
    return outcome, GameState(budget, state.round + 1, state.day, g)


def censor(outcome: RoundOutcome) -> CensoredObservation:
    return CensoredObservation(outcome.reserve, outcome.sold)


class Advertiser(Protocol):
    name: str

    def reset(self, config: GameConfig, rng: np.random.Generator) -> None: ...

    def act(self, state: GameState) -> int: ...

    def observe(self, outcome: RoundOutcome, state: GameState) -> None: ...


class Publisher(Protocol):
    """A pricing strategy.  It sees the public schedule and censored outcomes only."""

    name: str

    def reset(self, config: GameConfig, rng: np.random.Generator) -> None: ...

    def act(self, t: int) -> int: ...

    def observe(self, obs: CensoredObservation) -> None: ...


class OracleAccess:
    """Privileged view of the advertiser, handed only to benchmark publishers.

    ``run_episode`` refreshes ``bid`` and ``state`` before the publisher acts.
    """

    def __init__(self, advertiser):
        self.advertiser = advertiser
        self.bid: int | None = None
        self.state: GameState | None = None


@dataclass
class EpisodeLog:
    seed: int
    config: GameConfig
    rounds: list[RoundOutcome] = field(default_factory=list)
    budgets_after: list[int] = field(default_factory=list)
    advertiser: str = ""
    publisher: str = ""

    CSV_COLUMNS = ("day", "round", "bid", "reserve", "sold",
                   "publisher_payoff", "advertiser_payoff", "budget_after")

    def __len__(self):
        return len(self.rounds)

    @property
    def publisher_revenue(self) -> float:
        # integer tick sum keeps revenue exact
        return sum(o.reserve for o in self.rounds if o.sold) / self.config.grid

    @property
    def advertiser_revenue(self) -> float:
        return sum(o.bid - o.reserve for o in self.rounds if o.sold) / self.config.grid

    def bids(self) -> np.ndarray:
        return np.fromiter((o.bid for o in self.rounds), dtype=np.int64, count=len(self.rounds))

    def reserves(self) -> np.ndarray:
        return np.fromiter((o.reserve for o in self.rounds), dtype=np.int64, count=len(self.rounds))

    def sold(self) -> np.ndarray:
        return np.fromiter((o.sold for o in self.rounds), dtype=bool, count=len(self.rounds))

    def observations(self) -> list[CensoredObservation]:
        return [censor(o) for o in self.rounds]

    def write_csv(self, dest=None) -> str:
        """Write the round log as CSV to ``dest`` (path or file); returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        g = self.config.grid
        ipd = self.config.impressions_per_day
        for t, (o, b) in enumerate(zip(self.rounds, self.budgets_after)):
            w.writerow([t // ipd, t, f"{o.bid / g:.6f}", f"{o.reserve / g:.6f}", int(o.sold),
                        f"{o.publisher_payoff:.6f}", f"{o.advertiser_payoff:.6f}", f"{b / g:.6f}"])
        text = buf.getvalue()
        if dest is not None:
            if hasattr(dest, "write"):
                dest.write(text)
            else:
                Path(dest).write_text(text)
        return text

    def summary(self) -> dict:
        return {"seed": self.seed, "advertiser": self.advertiser, "publisher": self.publisher,
                "rounds": len(self), "publisher_revenue": self.publisher_revenue,
                "config": asdict(self.config)}


def spawn_streams(seed: int, n: int = 2) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def run_episode(advertiser, publisher, config: GameConfig, seed: int,
                oracle: OracleAccess | None = None) -> EpisodeLog:
    """Play ``config.total_rounds`` rounds and return the full log.

    The advertiser sees every ``RoundOutcome``; the publisher only the
    ``CensoredObservation``.  Each side draws from its own stream spawned
    from ``seed``, so the advertiser's randomness does not depend on the
    publisher's.
    """
    adv_rng, pub_rng = spawn_streams(seed)
    advertiser.reset(config, adv_rng)
    publisher.reset(config, pub_rng)
    log = EpisodeLog(seed=seed, config=config,
                     advertiser=getattr(advertiser, "name", type(advertiser).__name__),
                     publisher=getattr(publisher, "name", type(publisher).__name__))
    rounds, budgets = log.rounds, log.budgets_after
    ipd = config.impressions_per_day
    start_budget = config.budget_ticks
    state = GameState(start_budget, 0, 0, config.grid)
    for t in range(config.total_rounds):
        if t % ipd == 0 and t > 0:
            state = GameState(start_budget, t, t // ipd, config.grid)
        bid = advertiser.act(state)
        if oracle is not None:
            oracle.bid, oracle.state = bid, state
        reserve = publisher.act(t)
        outcome, after = step(state, bid, reserve)
        rounds.append(outcome)
        budgets.append(after.budget_ticks)
        advertiser.observe(outcome, after)
        publisher.observe(CensoredObservation(reserve, outcome.sold))
        state = after
    return log
