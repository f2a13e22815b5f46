"""Agents built on trained MLPs: mlp, ensemble, ensemble_plus, dropout and
the deep-kernel Gaussian process."""
from __future__ import annotations

import math

import numpy as np

from .. import nncore
from ..generative import GenerativeConfig, sample_mlp
from ..nncore import MlpParams, TrainConfig
from .base import EnvMeta, MixtureSampler, PointSampler, PosteriorSampler, int_seed, rng_for

# stream ids under (seed, member)
_INIT, _TRAIN, _PRIOR, _BOOT = range(4)


def l2_decay(hp: dict, meta: EnvMeta, num_members: int = 1) -> float:
    t = max(meta.train_size, 1)
    if hp["decay_form"] == "dsqrtbeta":
        scale = meta.input_dim * math.sqrt(meta.temperature)
    else:
        scale = 1.0
    return hp["lambda"] * scale / (num_members * t)


def dropout_decay(hp: dict, meta: EnvMeta) -> float:
    t = max(meta.train_size, 1)
    ls, rate = hp["length_scale"], hp["dropout_rate"]
    if hp["decay_form"] == "dsqrtbeta":
        return meta.input_dim * math.sqrt(meta.temperature) * ls / t
    return ls * ls * (1.0 - rate) / (2.0 * t)


def _sizes(hp: dict, meta: EnvMeta) -> tuple[int, ...]:
    return (meta.input_dim,) + (int(hp["hidden"]),) * int(hp["num_layers"]) + (meta.num_classes,)


def _train_config(hp: dict, decay: float, seed: int, weights=None) -> TrainConfig:
    return TrainConfig(
        l2_decay_scale=decay,
        learning_rate=float(hp["learning_rate"]),
        num_steps=int(hp["num_steps"]),
        batch_size=int(hp["batch_size"]) or None,
        per_example_weights=weights,
        seed=seed,
    )


def fit_member(hp: dict, dataset, meta: EnvMeta, seed: int, member: int, decay: float,
               offset_logits=None, weights=None, dropout_rate: float = 0.0) -> MlpParams:
    """Initialise and train one network; seeds depend only on ``(seed, member)``."""
    init = nncore.init_mlp(_sizes(hp, meta), rng_for(seed, member, _INIT))
    cfg = _train_config(hp, decay, int_seed(seed, member, _TRAIN), weights)
    return nncore.train(init, dataset, cfg, offset_logits=offset_logits, dropout_rate=dropout_rate)


def bootstrap_weights(kind: str, n: int, rng: np.random.Generator) -> np.ndarray | None:
    if kind == "none":
        return None
    if kind == "exponential":
        return rng.exponential(1.0, size=n)
    if kind == "bernoulli":
        return 2.0 * (rng.random(n) < 0.5)
    raise ValueError(f"unknown bootstrap type {kind!r}")


class _Member:
    """Trained network plus an optional fixed additive prior network."""

    def __init__(self, params: MlpParams, prior: MlpParams | None = None, prior_scale: float = 0.0):
        self.params = params
        self.prior = prior
        self.prior_scale = prior_scale

    def logits(self, x):
        z = nncore.forward(self.params, x)
        if self.prior is not None:
            z = z + self.prior_scale * nncore.forward(self.prior, x)
        return z

    def __call__(self, x):
        return nncore.softmax(self.logits(x))


def train_ensemble(hp: dict, dataset, meta: EnvMeta, seed: int, with_priors: bool = False) -> PosteriorSampler:
    n_members = int(hp.get("num_members", 1))
    decay = l2_decay(hp, meta, n_members)
    prior_scale = 0.0
    if with_priors:
        ps = hp["prior_scale"]
        ps = math.sqrt(meta.temperature) if ps == "sqrt_beta" else float(ps)
        # the prior function is a draw of the generating logits, MLP(x) / beta
        prior_scale = ps / meta.temperature
    members = []
    for i in range(n_members):
        prior = offset = weights = None
        if with_priors:
            weights = bootstrap_weights(hp["bootstrap"], len(dataset), rng_for(seed, i, _BOOT))
            if prior_scale != 0.0:
                gen = GenerativeConfig(input_dim=meta.input_dim, num_classes=meta.num_classes)
                prior = sample_mlp(gen, rng_for(seed, i, _PRIOR))
                offset = prior_scale * nncore.forward(prior, dataset.inputs)
        params = fit_member(hp, dataset, meta, seed, i, decay, offset_logits=offset, weights=weights)
        members.append(_Member(params, prior, prior_scale))
    if n_members == 1:
        return PointSampler(members[0], meta.num_classes)
    return MixtureSampler(members, meta.num_classes)


def train_mlp(hp, dataset, meta, seed):
    return train_ensemble({**hp, "num_members": 1}, dataset, meta, seed)


class DropoutSampler(PosteriorSampler):
    """Each sampled model is the trained network under one fresh dropout mask."""

    def __init__(self, params: MlpParams, rate: float, num_classes: int):
        self.params = params
        self.rate = rate
        self.num_classes = num_classes

    def sample_probs(self, inputs, num_samples, seed=0):
        x = self._check(inputs, num_samples)
        if self.rate == 0.0:
            p = nncore.softmax(nncore.forward(self.params, x))
            return np.broadcast_to(p, (num_samples,) + p.shape).copy()
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        masks = nncore.dropout_masks(self.params, self.rate, (num_samples, 1), rng)
        return nncore.softmax(nncore.forward(self.params, x, masks=masks))


def train_dropout(hp, dataset, meta, seed):
    rate = float(hp["dropout_rate"])
    params = fit_member(hp, dataset, meta, seed, 0, dropout_decay(hp, meta), dropout_rate=rate)
    return DropoutSampler(params, rate, meta.num_classes)


# -- deep kernel -------------------------------------------------------------

def woodbury_covariance(phi_train: np.ndarray, phi_test: np.ndarray, noise: float) -> np.ndarray:
    """Posterior covariance of test logits via the feature-space (m x m) inverse."""
    m = phi_train.shape[1]
    gram = noise**2 * np.eye(m) + phi_train.T @ phi_train
    return noise**2 * phi_test @ np.linalg.solve(gram, phi_test.T)


def direct_covariance(phi_train: np.ndarray, phi_test: np.ndarray, noise: float) -> np.ndarray:
    """Same covariance through the data-space (T x T) inverse."""
    t = phi_train.shape[0]
    k_tt = noise**2 * np.eye(t) + phi_train @ phi_train.T
    cross = phi_test @ phi_train.T
    return phi_test @ phi_test.T - cross @ np.linalg.solve(k_tt, cross.T)


class DeepKernelSampler(PosteriorSampler):
    """GP over the logits with kernel given by frozen last-hidden-layer features.

    The mean is the network's own logits.  Samples are
    ``mu + noise * Phi_test @ L^{-T} @ zeta`` where ``L L^T = noise^2 I + Phi^T Phi``.
    """

    def __init__(self, params: MlpParams, phi_train: np.ndarray, noise: float, num_classes: int):
        self.params = params
        self.noise = noise
        self.num_classes = num_classes
        m = phi_train.shape[1]
        chol = np.linalg.cholesky(noise**2 * np.eye(m) + phi_train.T @ phi_train)
        self.chol = chol
        self._inv_chol_t = np.linalg.inv(chol).T

    def sample_logits(self, inputs, num_samples, rng) -> np.ndarray:
        mu = nncore.forward(self.params, inputs)
        phi = nncore.hidden_features(self.params, inputs)
        zeta = rng.standard_normal((num_samples, self.chol.shape[0], self.num_classes))
        return mu + self.noise * (phi @ self._inv_chol_t) @ zeta

    def sample_probs(self, inputs, num_samples, seed=0):
        x = self._check(inputs, num_samples)
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return nncore.softmax(self.sample_logits(x, num_samples, rng))


def train_deep_kernel(hp, dataset, meta, seed):
    params = fit_member(hp, dataset, meta, seed, 0, l2_decay(hp, meta))
    phi = nncore.hidden_features(params, dataset.inputs)
    return DeepKernelSampler(params, phi, float(hp["noise_scale"]), meta.num_classes)
