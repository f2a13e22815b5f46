"""Common agent interface.

An agent is trained on a :class:`~jointpred.generative.Dataset` and returns a
:class:`PosteriorSampler`.  A sampler turns a batch of inputs into an
``(M, tau, K)`` tensor of class probabilities, one slice per sampled model.
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np


class AgentConfigError(ValueError):
    pass


KINDS = ("mlp", "ensemble", "ensemble_plus", "dropout", "sgld", "deep_kernel", "knn")

_NET = {
    "lambda": 1.0,
    "decay_form": "T",
    "learning_rate": 1e-3,
    "num_steps": 1000,
    "batch_size": 0,
    "hidden": 50,
    "num_layers": 2,
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "mlp": dict(_NET),
    "ensemble": {**_NET, "num_members": 10},
    "ensemble_plus": {**_NET, "num_members": 10, "prior_scale": 1.0, "bootstrap": "none"},
    "dropout": {
        **{k: v for k, v in _NET.items() if k != "lambda"},
        "decay_form": "length",
        "dropout_rate": 0.1,
        "length_scale": 1.0,
    },
    "sgld": {
        "lambda": 0.1,
        "learning_rate": 1e-4,
        "batch_size": 0,
        "burn_in": 10_000,
        "thin": 200,
        "num_snapshots": 50,
        "momentum": 0.0,
        "hidden": 50,
        "num_layers": 2,
    },
    "deep_kernel": {**_NET, "noise_scale": 1.0},
    "knn": {"k": 5, "weighting": "uniform"},
}

_CHOICES = {
    "decay_form": {"mlp": ("T", "dsqrtbeta"), "dropout": ("length", "dsqrtbeta")},
    "bootstrap": ("none", "exponential", "bernoulli"),
    "weighting": ("uniform", "distance"),
}


def resolve_hyperparameters(kind: str, overrides: Mapping[str, Any] | None = None) -> dict[str, Any]:
    """Fill defaults for ``kind`` and validate every value.

    Raises :class:`AgentConfigError` listing every problem found.
    """
    if kind not in DEFAULTS:
        raise AgentConfigError(f"unknown agent kind {kind!r}; supported kinds: {', '.join(KINDS)}")
    hp = dict(DEFAULTS[kind])
    errors = []
    for key, value in (overrides or {}).items():
        if key not in hp:
            errors.append(f"{kind}: unknown hyperparameter {key!r} (allowed: {', '.join(sorted(hp))})")
        else:
            hp[key] = value
    errors.extend(_validate(kind, hp))
    if errors:
        raise AgentConfigError("; ".join(errors))
    return hp


def _validate(kind: str, hp: dict[str, Any]) -> list[str]:
    errs = []

    def need(key, ok, what):
        if key in hp and not ok(hp[key]):
            errs.append(f"{kind}.{key}={hp[key]!r}: {what}")

    def is_num(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)

    def is_int(v):
        return isinstance(v, (int, np.integer)) and not isinstance(v, bool) or (
            isinstance(v, float) and v.is_integer()
        )

    need("lambda", lambda v: is_num(v) and v >= 0, "must be a nonnegative number")
    need("learning_rate", lambda v: is_num(v) and v > 0, "must be positive")
    for key in ("num_steps", "hidden", "num_layers", "num_members", "k", "thin", "num_snapshots"):
        need(key, lambda v: is_int(v) and v >= 1, "must be a positive integer")
    for key in ("batch_size", "burn_in"):
        need(key, lambda v: is_int(v) and v >= 0, "must be a nonnegative integer")
    need("dropout_rate", lambda v: is_num(v) and 0 <= v < 1, "must lie in [0, 1)")
    need("length_scale", lambda v: is_num(v) and v > 0, "must be positive")
    need("noise_scale", lambda v: is_num(v) and v > 0, "must be positive")
    need("momentum", lambda v: is_num(v) and 0 <= v < 1, "must lie in [0, 1)")
    need(
        "prior_scale",
        lambda v: v == "sqrt_beta" or (is_num(v) and v >= 0),
        "must be a nonnegative number or 'sqrt_beta'",
    )
    if "decay_form" in hp:
        forms = _CHOICES["decay_form"]["dropout" if kind == "dropout" else "mlp"]
        need("decay_form", lambda v: v in forms, f"must be one of {forms}")
    need("bootstrap", lambda v: v in _CHOICES["bootstrap"], f"must be one of {_CHOICES['bootstrap']}")
    need("weighting", lambda v: v in _CHOICES["weighting"], f"must be one of {_CHOICES['weighting']}")
    return errs


@dataclass(frozen=True)
class AgentSpec:
    kind: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0
    name: str | None = None

    def __post_init__(self):
        resolve_hyperparameters(self.kind, self.hyperparameters)
        object.__setattr__(self, "hyperparameters", dict(self.hyperparameters))

    @property
    def id(self) -> str:
        if self.name:
            return self.name
        if not self.hyperparameters:
            return self.kind
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.hyperparameters.items()))
        return f"{self.kind}[{inner}]"

    def resolved(self) -> dict[str, Any]:
        return resolve_hyperparameters(self.kind, self.hyperparameters)

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.hyperparameters.items())), self.seed, self.name))


@dataclass(frozen=True)
class EnvMeta:
    """What an agent is told about the problem.

    ``environment`` carries the true generative model for reference fixtures
    only; real agents never read it.
    """

    input_dim: int
    num_classes: int
    temperature: float
    train_size: int
    environment: Any = field(default=None, compare=False, repr=False)


def rng_for(seed, *key: int) -> np.random.Generator:
    """Generator for an independent stream named by ``key`` under ``seed``."""
    entropy = seed.entropy if isinstance(seed, np.random.SeedSequence) else seed
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=tuple(key)))


def int_seed(seed, *key: int) -> int:
    entropy = seed.entropy if isinstance(seed, np.random.SeedSequence) else seed
    return int(np.random.SeedSequence(entropy, spawn_key=tuple(key)).generate_state(1, np.uint64)[0])


class PosteriorSampler(abc.ABC):
    """A trained belief over models."""

    num_classes: int

    @abc.abstractmethod
    def sample_probs(self, inputs, num_samples: int, seed=0) -> np.ndarray:
        """Class probabilities ``(num_samples, tau, K)`` from i.i.d. sampled models."""

    def mixture(self, inputs) -> tuple[np.ndarray, np.ndarray] | None:
        """Exact finite mixture ``(weights, probs)`` if the belief has one."""
        return None

    def _check(self, inputs, num_samples):
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"inputs must be a (tau, D) matrix, got {x.shape}")
        if num_samples < 1:
            raise ValueError("num_samples must be at least 1")
        return x


class PointSampler(PosteriorSampler):
    """A single model; every sample is the same."""

    def __init__(self, predict: Callable[[np.ndarray], np.ndarray], num_classes: int):
        self.predict = predict
        self.num_classes = num_classes

    def sample_probs(self, inputs, num_samples, seed=0):
        x = self._check(inputs, num_samples)
        p = self.predict(x)
        return np.broadcast_to(p, (num_samples,) + p.shape).copy()

    def mixture(self, inputs):
        x = self._check(inputs, 1)
        return np.ones(1), self.predict(x)[None]


class MixtureSampler(PosteriorSampler):
    """Finite mixture of models drawn with replacement by ``weights``."""

    def __init__(self, members: list[Callable[[np.ndarray], np.ndarray]], num_classes: int, weights=None):
        if not members:
            raise ValueError("a mixture needs at least one member")
        self.members = list(members)
        self.num_classes = num_classes
        w = np.full(len(members), 1.0 / len(members)) if weights is None else np.asarray(weights, float)
        if w.shape != (len(members),) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError("mixture weights must be a probability vector")
        self.weights = w / w.sum()

    def member_probs(self, inputs) -> np.ndarray:
        return np.stack([f(inputs) for f in self.members])

    def sample_probs(self, inputs, num_samples, seed=0):
        x = self._check(inputs, num_samples)
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        idx = rng.choice(len(self.members), size=num_samples, p=self.weights)
        return self.member_probs(x)[idx]

    def mixture(self, inputs):
        x = self._check(inputs, 1)
        return self.weights.copy(), self.member_probs(x)
