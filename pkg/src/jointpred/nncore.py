"""Small feed-forward networks in numpy: forward pass, analytic gradients, Adam.

Every trainable agent is built from these pieces.  Networks are ReLU MLPs
whose final layer produces class logits.  Parameters are held in an
immutable :class:`MlpParams`; training always returns a fresh copy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class MlpParams:
    """Weights ``(fan_in, fan_out)`` and biases ``(fan_out,)`` per layer.

    All hidden layers use ReLU; the last layer is linear (logits).
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} does not match bias {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(
                    f"layer {i}: fan_in {w.shape[0]} != previous fan_out "
                    f"{self.weights[i - 1].shape[1]}"
                )

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(w.shape[1] for w in self.weights)

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def unflatten(self, vector: np.ndarray) -> "MlpParams":
        """Build params of the same architecture from a flat vector."""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.num_params,):
            raise ShapeError(f"expected {self.num_params} values, got {vector.shape}")
        ws, bs, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vector[pos:pos + w.size].reshape(w.shape).copy())
            pos += w.size
            bs.append(vector[pos:pos + b.size].copy())
            pos += b.size
        return MlpParams(tuple(ws), tuple(bs))

    def map(self, fn, other: "MlpParams | None" = None) -> "MlpParams":
        if other is None:
            return MlpParams(tuple(fn(w) for w in self.weights), tuple(fn(b) for b in self.biases))
        return MlpParams(
            tuple(fn(w, v) for w, v in zip(self.weights, other.weights)),
            tuple(fn(b, c) for b, c in zip(self.biases, other.biases)),
        )

    def weight_sq_norm(self) -> float:
        return float(sum(np.sum(w * w) for w in self.weights))


def init_mlp(
    sizes: Sequence[int],
    rng: np.random.Generator,
    scheme: str = "glorot_normal",
) -> MlpParams:
    """Glorot-initialised MLP with zero biases.

    ``sizes`` runs from input width to number of classes, e.g. ``(2, 50, 50, 2)``.
    """
    if len(sizes) < 2 or min(sizes) < 1:
        raise ShapeError(f"invalid layer sizes {tuple(sizes)}")
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if scheme == "glorot_normal":
            w = rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))
        elif scheme == "glorot_uniform":
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-lim, lim, size=(fan_in, fan_out))
        else:
            raise ValueError(f"unknown init scheme {scheme!r}")
        ws.append(w)
        bs.append(np.zeros(fan_out))
    return MlpParams(tuple(ws), tuple(bs))


def _check_inputs(params: MlpParams, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"inputs of shape {x.shape} do not match input width {params.input_dim}")
    return x


def forward(params: MlpParams, inputs, masks: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """Logits for a batch of inputs.

    ``masks`` optionally multiplies each hidden activation (dropout).  A mask
    with a leading axis of size M, e.g. shape ``(M, 1, H)``, broadcasts the
    batch into M independently masked copies and the result is ``(M, B, K)``.
    """
    x = _check_inputs(params, inputs)
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
            if masks is not None:
                h = h * masks[i]
    return h


def hidden_features(params: MlpParams, inputs) -> np.ndarray:
    """Activations of the last hidden layer (the input to the logit layer)."""
    x = _check_inputs(params, inputs)
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    return h


_LOG_TINY = float(np.log(np.finfo(np.float64).tiny))


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of ``logits / temperature`` along the last axis."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    # floor at the smallest normal double so gaps up to 1000 never yield exact zeros
    z = np.maximum(z - z.max(axis=-1, keepdims=True), _LOG_TINY)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class TrainConfig:
    l2_decay_scale: float = 0.0
    learning_rate: float = 1e-3
    num_steps: int = 1000
    # None means full batch up to 256 examples, else minibatches of 128.
    batch_size: int | None = None
    per_example_weights: np.ndarray | None = field(default=None, compare=False)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.l2_decay_scale < 0:
            raise ValueError("l2_decay_scale must be nonnegative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if int(self.num_steps) < 1:
            raise ValueError("num_steps must be at least 1")
        if self.batch_size is not None and int(self.batch_size) < 1:
            raise ValueError("batch_size must be at least 1")
        if self.per_example_weights is not None and np.any(np.asarray(self.per_example_weights) < 0):
            raise ValueError("per_example_weights must be nonnegative")

    def effective_batch_size(self, n: int) -> int:
        if self.batch_size is not None:
            return min(int(self.batch_size), n)
        return n if n <= 256 else 128


def loss_and_grad(
    params: MlpParams,
    inputs,
    labels,
    config: TrainConfig,
    *,
    weights: np.ndarray | None = None,
    offset_logits: np.ndarray | None = None,
    masks: Sequence[np.ndarray] | None = None,
) -> tuple[float, MlpParams]:
    """Weighted mean cross-entropy plus ``l2_decay_scale * sum ||W||^2``.

    ``offset_logits`` is a fixed term added to the network logits (used for
    additive prior functions); it receives no gradient.  Biases are not
    decayed.
    """
    x = _check_inputs(params, inputs)
    y = np.asarray(labels)
    k = params.num_classes
    if y.shape != (x.shape[0],):
        raise ShapeError(f"labels shape {y.shape} does not match batch {x.shape[0]}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    n = x.shape[0]
    w_ex = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w_ex.shape != (n,):
        raise ShapeError("per-example weights not aligned with batch")

    # forward with cache
    acts = [x]
    pre = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
            if masks is not None:
                h = h * masks[i]
            acts.append(h)
        else:
            h = z
    logits = h if offset_logits is None else h + offset_logits
    logp = log_softmax(logits)
    rows = np.arange(n)
    ce = -logp[rows, y]
    decay = config.l2_decay_scale
    loss = float(np.dot(w_ex, ce) / n + decay * params.weight_sq_norm())

    # backward
    delta = np.exp(logp)
    delta[rows, y] -= 1.0
    delta *= (w_ex / n)[:, None]
    gws = [None] * len(params.weights)
    gbs = [None] * len(params.weights)
    for i in range(last, -1, -1):
        gws[i] = acts[i].T @ delta + 2.0 * decay * params.weights[i]
        gbs[i] = delta.sum(axis=0)
        if i:
            delta = delta @ params.weights[i].T
            if masks is not None:
                delta = delta * masks[i - 1]
            delta = delta * (pre[i - 1] > 0)
    return loss, MlpParams(tuple(gws), tuple(gbs))


def dropout_masks(
    params: MlpParams, rate: float, shape_prefix: tuple[int, ...], rng: np.random.Generator
) -> list[np.ndarray]:
    """Inverted-dropout masks for each hidden layer, shaped ``shape_prefix + (H,)``."""
    keep = 1.0 - rate
    return [
        (rng.random(shape_prefix + (w.shape[1],)) < keep) / keep
        for w in params.weights[:-1]
    ]


def train(
    params: MlpParams,
    dataset,
    config: TrainConfig,
    *,
    offset_logits: np.ndarray | None = None,
    dropout_rate: float = 0.0,
) -> MlpParams:
    """Adam on the regularised cross-entropy; returns new parameters.

    ``dataset`` needs ``inputs`` and ``labels`` attributes.  Minibatch order
    and dropout masks come from two independent streams derived from
    ``config.seed``, so a zero dropout rate leaves the optimisation path
    identical to plain training.
    """
    x = np.asarray(dataset.inputs, dtype=np.float64)
    y = np.asarray(dataset.labels)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError("dropout_rate must lie in [0, 1)")
    ex_w = config.per_example_weights
    if ex_w is not None:
        ex_w = np.asarray(ex_w, dtype=np.float64)
        if ex_w.shape != (n,):
            raise ShapeError("per_example_weights must match dataset length")
    batch_rng, mask_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))
    bs = config.effective_batch_size(n)
    full_batch = bs == n

    theta = [np.array(a, dtype=np.float64) for a in params.weights + params.biases]
    nl = len(params.weights)
    m1 = [np.zeros_like(a) for a in theta]
    m2 = [np.zeros_like(a) for a in theta]
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.adam_eps
    # views onto theta; the in-place Adam update below keeps them current
    cur = MlpParams(tuple(theta[:nl]), tuple(theta[nl:]))
    for step in range(1, int(config.num_steps) + 1):
        if full_batch:
            idx = slice(None)
        else:
            idx = batch_rng.choice(n, size=bs, replace=False)
        masks = None
        if dropout_rate > 0.0:
            masks = dropout_masks(cur, dropout_rate, (x[idx].shape[0],), mask_rng)
        _, g = loss_and_grad(
            cur,
            x[idx],
            y[idx],
            config,
            weights=None if ex_w is None else ex_w[idx],
            offset_logits=None if offset_logits is None else offset_logits[idx],
            masks=masks,
        )
        grads = g.weights + g.biases
        c1 = 1.0 - b1**step
        c2 = 1.0 - b2**step
        for a, gi, u, v in zip(theta, grads, m1, m2):
            u *= b1
            u += (1.0 - b1) * gi
            v *= b2
            v += (1.0 - b2) * gi * gi
            a -= lr * (u / c1) / (np.sqrt(v / c2) + eps)
    return MlpParams(tuple(a.copy() for a in theta[:nl]), tuple(a.copy() for a in theta[nl:]))


def dataset_loss(params: MlpParams, dataset, l2_decay_scale: float = 0.0) -> float:
    cfg = TrainConfig(l2_decay_scale=l2_decay_scale, num_steps=1)
    loss, _ = loss_and_grad(params, dataset.inputs, dataset.labels, cfg)
    return loss
