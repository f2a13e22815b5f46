"""Reference agents with known beliefs, for checking the evaluation loop.

These are plain callables ``(dataset, meta) -> PosteriorSampler`` and can be
passed anywhere an :class:`AgentSpec` is accepted.
"""
from __future__ import annotations

import numpy as np

from .base import EnvMeta, MixtureSampler, PointSampler


class TrueEnvironmentAgent:
    """Believes exactly in the environment that generated the data."""

    id = "true_environment"

    def __call__(self, dataset, meta: EnvMeta):
        env = meta.environment
        if env is None:
            raise ValueError("TrueEnvironmentAgent needs meta.environment")
        return PointSampler(env.class_probs, meta.num_classes)


class _Constant:
    def __init__(self, row):
        self.row = np.asarray(row, dtype=np.float64)

    def __call__(self, x):
        return np.tile(self.row, (np.asarray(x).shape[0], 1))


class FixedBeliefAgent:
    """Ignores the data; belief is a fixed mixture of input-independent models."""

    def __init__(self, rows, weights=None, id: str = "fixed_belief"):
        self.rows = [np.asarray(r, dtype=np.float64) for r in rows]
        self.weights = weights
        self.id = id

    def __call__(self, dataset=None, meta: EnvMeta | None = None):
        k = self.rows[0].shape[0]
        members = [_Constant(r) for r in self.rows]
        if len(members) == 1:
            return PointSampler(members[0], k)
        return MixtureSampler(members, k, self.weights)


def coin_chance_agent() -> FixedBeliefAgent:
    """Every flip independent, heads with probability 2/3."""
    return FixedBeliefAgent([[1 / 3, 2 / 3]], id="coin_chance")


def coin_biased_agent() -> FixedBeliefAgent:
    """Coin always lands the same way: tails w.p. 1/3, heads w.p. 2/3."""
    return FixedBeliefAgent([[1.0, 0.0], [0.0, 1.0]], weights=[1 / 3, 2 / 3], id="coin_biased")
