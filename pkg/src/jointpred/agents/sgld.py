"""Stochastic gradient Langevin dynamics over MLP weights."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .. import nncore
from ..nncore import TrainConfig
from .base import EnvMeta, MixtureSampler, int_seed, rng_for


def sgld_chain(
    grad_potential: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    theta0: np.ndarray,
    learning_rate: float,
    burn_in: int,
    thin: int,
    num_snapshots: int,
    rng: np.random.Generator,
    momentum: float = 0.0,
) -> list[np.ndarray]:
    """Constant step-size Langevin chain on the potential ``U``.

    Without momentum each step is ``theta -= lr * grad U + sqrt(2 lr) * xi``.
    With momentum ``m`` the velocity update uses friction ``1 - m`` and noise
    variance ``2 lr (1 - m)``.  A snapshot is kept every ``thin`` steps after
    ``burn_in``.
    """
    theta = np.array(theta0, dtype=np.float64)
    velocity = np.zeros_like(theta)
    noise_sd = np.sqrt(2.0 * learning_rate * (1.0 - momentum))
    snapshots = []
    total = burn_in + thin * num_snapshots
    for step in range(1, total + 1):
        g = grad_potential(theta, rng)
        xi = rng.standard_normal(theta.shape)
        if momentum:
            velocity = momentum * velocity - learning_rate * g + noise_sd * xi
            theta = theta + velocity
        else:
            theta = theta - learning_rate * g + noise_sd * xi
        if step > burn_in and (step - burn_in) % thin == 0:
            snapshots.append(theta.copy())
    return snapshots


def prior_variance(hp: dict, meta: EnvMeta) -> float:
    return hp["lambda"] * meta.train_size / (meta.input_dim * meta.temperature)


def train_sgld(hp, dataset, meta: EnvMeta, seed):
    sizes = (meta.input_dim,) + (int(hp["hidden"]),) * int(hp["num_layers"]) + (meta.num_classes,)
    template = nncore.init_mlp(sizes, rng_for(seed, 0, 0))
    n = len(dataset)
    batch = int(hp["batch_size"]) or (n if n <= 256 else 128)
    batch = min(batch, n)
    var = prior_variance(hp, meta)
    if var <= 0:
        raise ValueError("sgld needs a positive prior variance (lambda > 0)")
    cfg = TrainConfig(num_steps=1)
    x, y = dataset.inputs, dataset.labels

    def grad_potential(theta, rng):
        params = template.unflatten(theta)
        if batch < n:
            idx = rng.choice(n, size=batch, replace=False)
            xb, yb = x[idx], y[idx]
        else:
            xb, yb = x, y
        # mean cross-entropy gradient scaled up to the full-data sum
        _, g = nncore.loss_and_grad(params, xb, yb, cfg)
        return n * g.flatten() + theta / var

    chain_rng = np.random.default_rng(int_seed(seed, 0, 1))
    snaps = sgld_chain(
        grad_potential,
        template.flatten(),
        float(hp["learning_rate"]),
        int(hp["burn_in"]),
        int(hp["thin"]),
        int(hp["num_snapshots"]),
        chain_rng,
        momentum=float(hp["momentum"]),
    )
    members = [_Snapshot(template.unflatten(s)) for s in snaps]
    return MixtureSampler(members, meta.num_classes)


class _Snapshot:
    def __init__(self, params):
        self.params = params

    def __call__(self, x):
        return nncore.softmax(nncore.forward(self.params, x))
