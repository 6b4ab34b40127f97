"""Small sigmoid feedforward network trained by hill climbing."""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class FeedForward:
    """Fully connected net with sigmoid units on every layer, including the output.

    Weights live in one flat vector ``theta`` so a hill climber can perturb
    them in a single draw.
    """

    def __init__(self, sizes: list[int], theta: np.ndarray | None = None):
        self.sizes = list(sizes)
        self._shapes = [(a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        self.n_params = sum(a * b + b for a, b in self._shapes)
        self.theta = np.zeros(self.n_params) if theta is None else np.asarray(theta, float).copy()
        if self.theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {self.theta.shape}")

    @classmethod
    def random(cls, sizes, rng: np.random.Generator, scale: float = 1.0):
        net = cls(sizes)
        net.theta = rng.normal(0.0, scale, net.n_params)
        return net

    def layers(self, theta=None):
        theta = self.theta if theta is None else theta
        out, i = [], 0
        for a, b in self._shapes:
            w = theta[i:i + a * b].reshape(a, b)
            i += a * b
            out.append((w, theta[i:i + b]))
            i += b
        return out

    def forward(self, x: np.ndarray, theta=None) -> np.ndarray:
        h = np.atleast_2d(x)
        for w, b in self.layers(theta):
            h = sigmoid(h @ w + b)
        return h[:, 0]

    def mse(self, x, y, theta=None) -> float:
        return float(np.mean((self.forward(x, theta) - y) ** 2))


class HillClimber:
    """Gaussian-perturbation hill climbing on mean squared error.

    A proposal replaces the weights only if it strictly lowers the training
    MSE.  ``train`` stops after ``proposals`` draws or ``patience``
    consecutive rejections, whichever comes first.
    """

    def __init__(self, std: float = 0.1, proposals: int = 200, patience: int = 50):
        self.std = std
        self.proposals = proposals
        self.patience = patience

    def propose(self, net: FeedForward, x, y, rng, current: float | None = None) -> tuple[float, bool]:
        current = net.mse(x, y) if current is None else current
        cand = net.theta + rng.normal(0.0, self.std, net.n_params)
        err = net.mse(x, y, cand)
        if err < current:
            net.theta = cand
            return err, True
        return current, False

    def train(self, net: FeedForward, x, y, rng) -> list[float]:
        """Run to convergence; returns the MSE after each accepted step (first entry is the start)."""
        err = net.mse(x, y)
        trace = [err]
        misses = 0
        for _ in range(self.proposals):
            err, ok = self.propose(net, x, y, rng, err)
            if ok:
                trace.append(err)
                misses = 0
            else:
                misses += 1
                if misses >= self.patience:
                    break
        return trace
