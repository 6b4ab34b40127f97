"""Bid distributions snapped onto the price grid.

Every distribution exposes the exact probability mass its snapped samples put
on each grid index, so tails used for pricing agree with what sampling does.
Continuous draws are clipped to ``[0, 1]`` and rounded to the nearest index.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from .game import DEFAULT_GRID

DISTRIBUTIONS = ("uniform", "normal", "lognormal", "exponential", "logistic")

_BLOCK = 512


class BidDistribution:
    """A named bid distribution with grid-exact tails.

    Parameters (value units unless noted):

    * ``uniform``: ``high`` (and optional ``low``), discrete uniform on the grid
    * ``normal``: ``mu``, ``var``
    * ``lognormal``: ``mu``, ``sigma`` of the underlying normal
    * ``exponential``: ``beta``, a rate in grid-index units (mean ``1/beta`` ticks)
    * ``logistic``: ``mu``, ``s``
    """

    def __init__(self, name: str, grid: int = DEFAULT_GRID, **params):
        if name not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {name!r}; expected one of {DISTRIBUTIONS}")
        self.name = name
        self.grid = grid
        self.params = dict(params)
        self._check()
        self._tail = None
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0

    def __repr__(self):
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"BidDistribution({self.name!r}, {args})"

    def _check(self):
        p = self.params
        if self.name == "uniform":
            low, high = p.setdefault("low", 0.0), p["high"]
            if not 0 <= low <= high <= 1:
                raise ValueError(f"uniform needs 0 <= low <= high <= 1, got {low}, {high}")
        elif self.name == "normal":
            if p["var"] <= 0:
                raise ValueError("normal variance must be positive")
        elif self.name == "lognormal":
            if p["sigma"] <= 0:
                raise ValueError("lognormal sigma must be positive")
        elif self.name == "exponential":
            if p["beta"] <= 0:
                raise ValueError("exponential rate beta must be positive")
        elif self.name == "logistic":
            if p["s"] <= 0:
                raise ValueError("logistic scale s must be positive")

    def _frozen(self):
        p = self.params
        if self.name == "normal":
            return stats.norm(p["mu"], np.sqrt(p["var"]))
        if self.name == "lognormal":
            return stats.lognorm(s=p["sigma"], scale=np.exp(p["mu"]))
        if self.name == "exponential":
            return stats.expon(scale=1.0 / (p["beta"] * self.grid))
        if self.name == "logistic":
            return stats.logistic(p["mu"], p["s"])
        raise AssertionError(self.name)

    def tail(self) -> np.ndarray:
        """``T[i] = Pr(bid index >= i)`` for ``i = 0..G`` (read-only)."""
        if self._tail is None:
            g = self.grid
            idx = np.arange(g + 1)
            if self.name == "uniform":
                lo = round(self.params["low"] * g)
                hi = round(self.params["high"] * g)
                t = np.clip((hi - idx + 1) / (hi - lo + 1), 0.0, 1.0)
            else:
                # snapped sample >= i  <=>  raw value >= (i - 0.5) / G
                t = self._frozen().sf((idx - 0.5) / g)
                t[0] = 1.0
            t.flags.writeable = False
            self._tail = t
        return self._tail

    def pmf(self) -> np.ndarray:
        t = self.tail()
        return t - np.append(t[1:], 0.0)

    def _draw_block(self, rng: np.random.Generator) -> np.ndarray:
        g, p = self.grid, self.params
        if self.name == "uniform":
            return rng.integers(round(p["low"] * g), round(p["high"] * g) + 1, size=_BLOCK)
        if self.name == "normal":
            x = rng.normal(p["mu"], np.sqrt(p["var"]), size=_BLOCK)
        elif self.name == "lognormal":
            x = rng.lognormal(p["mu"], p["sigma"], size=_BLOCK)
        elif self.name == "exponential":
            x = rng.exponential(1.0 / p["beta"], size=_BLOCK) / g
        else:
            x = rng.logistic(p["mu"], p["s"], size=_BLOCK)
        return np.rint(np.clip(x, 0.0, 1.0) * g).astype(np.int64)

    def reset(self):
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0

    def sample(self, rng: np.random.Generator) -> int:
        """One snapped draw; draws are buffered in blocks from ``rng``."""
        if self._pos >= len(self._buf):
            self._buf = self._draw_block(rng)
            self._pos = 0
        v = int(self._buf[self._pos])
        self._pos += 1
        return v


def revenue_argmax(tail: np.ndarray, grid: int | None = None) -> int:
    """Grid index maximising ``r * T(r)``; ties go to the lower price."""
    grid = len(tail) - 1 if grid is None else grid
    rev = np.arange(len(tail)) / grid * tail
    return int(np.flatnonzero(rev >= rev.max() - 1e-12)[0])
