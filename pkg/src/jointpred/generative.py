"""Synthetic data generating processes.

Two priors over environments are provided:

* :class:`MlpPrior` -- a random 2-hidden-layer ReLU network whose logits are
  divided by a temperature and pushed through a softmax.  Inputs are
  standard normal.
* :class:`CoinPrior` -- a single coin with unknown bias and no inputs.  It
  has closed-form joint likelihoods and is used as an exact reference.

Both expose ``sample(rng) -> environment``; an environment knows how to draw
inputs and return class probabilities for them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nncore
from .nncore import MlpParams


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError(f"inputs {x.shape} and labels {y.shape} do not line up")
        if y.size and y.min() < 0:
            raise ValueError("labels must be nonnegative")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx])


# A test block of tau inputs and labels has the same layout.
TauSample = Dataset


@dataclass(frozen=True)
class GenerativeConfig:
    input_dim: int = 2
    num_classes: int = 2
    temperature: float = 0.1
    hidden: tuple[int, ...] = (50, 50)
    first_bias_var: float = 0.5
    init: str = "glorot_normal"

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class Environment:
    params: MlpParams
    temperature: float

    @property
    def input_dim(self) -> int:
        return self.params.input_dim

    @property
    def num_classes(self) -> int:
        return self.params.num_classes

    def logits(self, inputs) -> np.ndarray:
        return nncore.forward(self.params, inputs)

    def class_probs(self, inputs) -> np.ndarray:
        return nncore.softmax(self.logits(inputs), self.temperature)

    def sample_inputs(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.input_dim))


def sample_mlp(config: GenerativeConfig, rng: np.random.Generator) -> MlpParams:
    """Glorot-distributed MLP whose first-layer biases are Gaussian."""
    sizes = (config.input_dim,) + tuple(config.hidden) + (config.num_classes,)
    params = nncore.init_mlp(sizes, rng, scheme=config.init)
    b0 = rng.normal(0.0, math.sqrt(config.first_bias_var), size=params.biases[0].shape)
    return MlpParams(params.weights, (b0,) + params.biases[1:])


def sample_environment(config: GenerativeConfig, seed) -> Environment:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Environment(sample_mlp(config, rng), config.temperature)


def class_probs(env, inputs) -> np.ndarray:
    return env.class_probs(inputs)


def _draw_labels(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((probs.shape[0], 1))
    labels = (u >= cdf).sum(axis=1)
    return np.minimum(labels, probs.shape[1] - 1)


def sample_data(env, n: int, seed) -> Dataset:
    """Draw ``n`` i.i.d. inputs and a label for each from the environment."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = env.sample_inputs(n, rng)
    y = _draw_labels(env.class_probs(x), rng)
    return Dataset(x, y)


def env_log_likelihood(env, sample: Dataset) -> float:
    """Sum over the block of log P(label | environment, input)."""
    p = env.class_probs(sample.inputs)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(p[np.arange(len(sample)), sample.labels])))


@dataclass(frozen=True)
class MlpPrior:
    config: GenerativeConfig = field(default_factory=GenerativeConfig)

    @property
    def input_dim(self) -> int:
        return self.config.input_dim

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    @property
    def temperature(self) -> float:
        return self.config.temperature

    def sample(self, rng: np.random.Generator) -> Environment:
        return sample_environment(self.config, rng)


# -- biased coin ------------------------------------------------------------

@dataclass(frozen=True)
class CoinEnvironment:
    """Coin with probability ``p_heads`` of label 1; inputs are a constant 0."""

    p_heads: float

    def __post_init__(self):
        if not 0.0 <= self.p_heads <= 1.0:
            raise ValueError("p_heads must lie in [0, 1]")

    input_dim = 1
    num_classes = 2

    def class_probs(self, inputs) -> np.ndarray:
        n = np.asarray(inputs).shape[0]
        return np.tile([1.0 - self.p_heads, self.p_heads], (n, 1))

    def sample_inputs(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.zeros((n, 1))


@dataclass(frozen=True)
class CoinPrior:
    """Discrete prior over coin biases; the default is fully biased coins,
    tails-only with probability 1/3 and heads-only with probability 2/3."""

    biases: tuple[float, ...] = (0.0, 1.0)
    weights: tuple[float, ...] = (1.0 / 3.0, 2.0 / 3.0)

    input_dim = 1
    num_classes = 2
    temperature = 1.0

    def sample(self, rng: np.random.Generator) -> CoinEnvironment:
        i = rng.choice(len(self.biases), p=np.asarray(self.weights) / np.sum(self.weights))
        return CoinEnvironment(float(self.biases[i]))


def coin_agent_likelihoods(tau: int) -> tuple[float, float]:
    """Log-probability that each of the two reference coin agents imagines
    ``tau`` tails in a row.

    The first agent treats each flip as an independent coin with heads
    probability 2/3; the second believes the coin always lands the same way,
    tails with probability 1/3.  Returns ``(-tau*ln 3, -ln 3)``.
    """
    if tau < 1:
        raise ValueError("tau must be at least 1")
    return -tau * math.log(3.0), -math.log(3.0)
