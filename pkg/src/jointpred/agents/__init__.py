"""Benchmark agents behind one interface."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .base import (
    KINDS,
    AgentConfigError,
    AgentSpec,
    EnvMeta,
    MixtureSampler,
    PointSampler,
    PosteriorSampler,
    resolve_hyperparameters,
)
from .knn import train_knn
from .networks import train_deep_kernel, train_dropout, train_ensemble, train_mlp
from .sgld import train_sgld

_TRAINERS = {
    "mlp": train_mlp,
    "ensemble": train_ensemble,
    "ensemble_plus": lambda hp, ds, meta, seed: train_ensemble(hp, ds, meta, seed, with_priors=True),
    "dropout": train_dropout,
    "sgld": train_sgld,
    "deep_kernel": train_deep_kernel,
    "knn": train_knn,
}


def train_agent(spec: AgentSpec, dataset, env_meta: EnvMeta) -> PosteriorSampler:
    """Train the agent described by ``spec``; deterministic given ``spec.seed``."""
    hp = resolve_hyperparameters(spec.kind, spec.hyperparameters)
    if len(dataset) == 0:
        raise ValueError("training set is empty")
    if dataset.input_dim != env_meta.input_dim:
        raise ValueError(f"dataset width {dataset.input_dim} != input_dim {env_meta.input_dim}")
    if dataset.labels.max() >= env_meta.num_classes:
        raise ValueError("dataset labels exceed num_classes")
    return _TRAINERS[spec.kind](hp, dataset, env_meta, spec.seed)


def sample_probs(sampler: PosteriorSampler, inputs, num_samples: int, seed=0) -> np.ndarray:
    probs = sampler.sample_probs(inputs, num_samples, seed)
    expected = (num_samples, np.shape(inputs)[0], sampler.num_classes)
    if probs.shape != expected:
        raise ValueError(f"sampler returned {probs.shape}, expected {expected}")
    return probs


def agent_id(agent) -> str:
    return agent.id if hasattr(agent, "id") else getattr(agent, "__name__", repr(agent))


def make_trainer(agent):
    """Normalise an :class:`AgentSpec` or a callable into ``(dataset, meta, seed) -> sampler``."""
    if isinstance(agent, AgentSpec):
        return lambda ds, meta, seed: train_agent(replace(agent, seed=seed), ds, meta)
    if callable(agent):
        return lambda ds, meta, seed: agent(ds, meta)
    raise TypeError(f"not an agent: {agent!r}")


__all__ = [
    "KINDS",
    "AgentConfigError",
    "AgentSpec",
    "EnvMeta",
    "MixtureSampler",
    "PointSampler",
    "PosteriorSampler",
    "agent_id",
    "make_trainer",
    "resolve_hyperparameters",
    "sample_probs",
    "train_agent",
]
