"""Bandit and tabular Q-learning cores shared by advertisers and publishers."""

from __future__ import annotations

import math

import numpy as np

N_ARMS = 101


def arm_prices(grid: int, n_arms: int = N_ARMS) -> np.ndarray:
    """Grid indices of ``n_arms`` evenly spaced prices over ``[0, 1]``."""
    return np.rint(np.linspace(0, grid, n_arms)).astype(np.int64)


def softmax(q: np.ndarray, tau: float) -> np.ndarray:
    z = (q - q.max()) / tau
    e = np.exp(z)
    return e / e.sum()


class UCB:
    """UCB1 with forced round-robin start and epsilon-greedy exploitation.

    The first ``explore_rounds`` pulls cycle through the arms, any arm that is
    still unplayed goes next, and afterwards the arm maximising
    ``mean + sqrt(2 ln t / n)`` is pulled with probability ``1 - epsilon``.
    """

    def __init__(self, n_arms: int, explore_rounds: int, epsilon: float):
        if not 0 <= epsilon < 1:
            raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
        self.n_arms = n_arms
        self.explore_rounds = int(explore_rounds)
        self.epsilon = epsilon
        self.reset()

    def reset(self):
        self.counts = np.zeros(self.n_arms, dtype=np.int64)
        self.means = np.zeros(self.n_arms)
        self.t = 0
        self._unplayed = self.n_arms

    def index(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            bonus = np.sqrt(2.0 * math.log(max(self.t, 1)) / self.counts)
        return self.means + bonus

    def forced_arm(self) -> int | None:
        """Arm that will be pulled regardless of randomness, if any."""
        if self.t < self.explore_rounds:
            return self.t % self.n_arms
        if self._unplayed:
            return int(np.argmin(self.counts > 0))
        return None

    def greedy_arm(self) -> int:
        return int(np.argmax(self.index()))

    def distribution(self) -> np.ndarray:
        """Probability of each arm being pulled next."""
        forced = self.forced_arm()
        p = np.zeros(self.n_arms)
        if forced is not None:
            p[forced] = 1.0
            return p
        p += self.epsilon / self.n_arms
        p[self.greedy_arm()] += 1.0 - self.epsilon
        return p

    def select(self, rng: np.random.Generator) -> int:
        forced = self.forced_arm()
        if forced is not None:
            return forced
        if self.epsilon > 0 and rng.random() < self.epsilon:
            return int(rng.integers(self.n_arms))
        return self.greedy_arm()

    def update(self, arm: int, reward: float):
        if self.counts[arm] == 0:
            self._unplayed -= 1
        self.counts[arm] += 1
        self.means[arm] += (reward - self.means[arm]) / self.counts[arm]
        self.t += 1


class SoftmaxQ:
    """Tabular Q-learning with Boltzmann action selection."""

    def __init__(self, n_states: int, n_actions: int, alpha: float, gamma: float, tau: float):
        if tau <= 0:
            raise ValueError(f"temperature must be positive, got {tau}")
        if not 0 < alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        if not 0 <= gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
        self.n_states, self.n_actions = n_states, n_actions
        self.alpha, self.gamma, self.tau = alpha, gamma, tau
        self.reset()

    def reset(self):
        self.q = np.zeros((self.n_states, self.n_actions))

    def probabilities(self, state: int) -> np.ndarray:
        return softmax(self.q[state], self.tau)

    def select(self, state: int, rng: np.random.Generator) -> int:
        p = self.probabilities(state)
        # inverse-cdf draw; cheaper than rng.choice for a single sample
        a = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        return min(a, self.n_actions - 1)

    def update(self, s: int, a: int, r: float, s_next: int):
        q = self.q
        q[s, a] += self.alpha * (r + self.gamma * q[s_next].max() - q[s, a])


def arm_index_map(arms: np.ndarray, grid: int) -> np.ndarray:
    """For each fine price index, the first arm priced at or above it (``len(arms)`` if none)."""
    return np.searchsorted(arms, np.arange(grid + 1), side="left")


def fine_tail(pmf: np.ndarray, arms: np.ndarray, grid: int, index_map: np.ndarray | None = None) -> np.ndarray:
    """Tail on the fine price grid of a distribution over coarse arm prices.

    ``T[i]`` is the mass on arms priced at or above index ``i``.  Pass a
    precomputed ``arm_index_map`` when calling repeatedly.
    """
    arm_tail = np.zeros(len(pmf) + 1)
    arm_tail[:-1] = np.cumsum(pmf[::-1])[::-1]
    np.minimum(arm_tail, 1.0, out=arm_tail)
    return arm_tail[arm_index_map(arms, grid) if index_map is None else index_map]
