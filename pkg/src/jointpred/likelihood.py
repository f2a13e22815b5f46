"""Likelihood of a test block under an agent's belief.

An agent's belief is represented by a probability tensor of shape
``(M, tau, K)``: M sampled models, each giving class probabilities for the
tau inputs of the block.  Two estimators are provided:

* :func:`mc_log_likelihood` averages the joint likelihood over the sampled
  models (unbiased, but needs exponentially many samples as tau grows);
* :func:`partition_log_likelihood` groups models by the sign pattern of
  random hyperplanes applied to their probit vectors, averages predictions
  within each group, and mixes the group likelihoods.

Everything is returned as a natural log; products are never formed in
probability space.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels_py
from ._backend import kernels

MAX_ENUMERATION = 4096


class DomainError(ValueError):
    pass


def inverse_normal_cdf(p):
    """Standard normal quantile function.

    Accepts a scalar or array with every entry strictly inside (0, 1).
    """
    arr = np.asarray(p, dtype=np.float64)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError("inverse_normal_cdf needs 0 < p < 1")
    out = kernels.ndtri(arr)
    return float(out) if np.ndim(p) == 0 else out


def normal_cdf(x):
    out = kernels.normal_cdf(np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(x) == 0 else out


def check_prob_matrix(probs, labels=None, atol: float = 1e-9) -> tuple[np.ndarray, np.ndarray | None]:
    """Validate and normalise dtypes of an ``(M, tau, K)`` tensor and labels."""
    p = np.ascontiguousarray(probs, dtype=np.float64)
    if p.ndim != 3 or 0 in p.shape:
        raise ValueError(f"probabilities must be a nonempty (M, tau, K) array, got {p.shape}")
    if np.any(p < 0.0) or np.any(p > 1.0) or not np.allclose(p.sum(axis=2), 1.0, rtol=0, atol=atol):
        raise ValueError("each (model, step) row must be a probability distribution")
    y = None
    if labels is not None:
        y = np.ascontiguousarray(labels, dtype=np.int64)
        if y.shape != (p.shape[1],):
            raise ValueError(f"labels shape {y.shape} does not match tau={p.shape[1]}")
        if y.min() < 0 or y.max() >= p.shape[2]:
            raise ValueError(f"labels must lie in [0, {p.shape[2]})")
    return p, y


def mc_log_terms(probs, labels) -> np.ndarray:
    """Per-model joint log-likelihood of the labels, shape ``(M,)``."""
    p, y = check_prob_matrix(probs, labels)
    return np.asarray(kernels.mc_log_terms(p, y))


def mc_log_likelihood(probs, labels) -> float:
    """Log of the mean over models of the joint likelihood of ``labels``."""
    p, y = check_prob_matrix(probs, labels)
    return float(kernels.mc_log_likelihood(p, y))


@dataclass(frozen=True)
class PartitionConfig:
    num_hyperplanes: int = 7
    seed: int | np.random.SeedSequence = 0
    probit_clip: float = 1e-6

    def __post_init__(self):
        if self.num_hyperplanes < 0:
            raise ValueError("num_hyperplanes must be nonnegative")
        if not 0.0 < self.probit_clip < 0.5:
            raise ValueError("probit_clip must lie in (0, 0.5)")


def draw_hyperplanes(num_hyperplanes: int, dim: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Standard normal ``A`` of shape ``(d, dim)`` and offsets ``b`` of shape ``(d,)``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = rng.standard_normal((num_hyperplanes, dim))
    b = rng.standard_normal(num_hyperplanes)
    return a, b


def partition_log_likelihood(probs, labels, config: PartitionConfig = PartitionConfig()) -> float:
    """Random-partition estimate of the log-likelihood of ``labels``.

    Probit vectors are stacked step-major: ``[l(t0,k0), l(t0,k1), ...,
    l(t_last,k_last)]``.  Only occupied cells are materialised; empty cells
    carry zero weight and are skipped.
    """
    p, y = check_prob_matrix(probs, labels)
    _, tau, k = p.shape
    a, b = draw_hyperplanes(config.num_hyperplanes, tau * k, config.seed)
    # packed uint64 cell codes in the compiled path cap d at 63
    impl = kernels if config.num_hyperplanes <= 63 else _kernels_py
    return float(impl.partition_log_likelihood(p, y, a, b, config.probit_clip))


def brute_force_log_likelihood(probs, labels, weights=None) -> float:
    """Exact mixture likelihood by enumerating the full joint label table.

    ``probs`` lists the prob-tables of an explicit mixture, ``weights`` its
    mixing weights (uniform if omitted).  The joint distribution over all
    ``K**tau`` label sequences is built and the entry for ``labels`` is
    read off.
    """
    p, y = check_prob_matrix(probs, labels)
    m, tau, k = p.shape
    if k**tau > MAX_ENUMERATION:
        raise ValueError(f"K**tau = {k**tau} outcomes is too many to enumerate (max {MAX_ENUMERATION})")
    w = np.full(m, 1.0 / m) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (m,) or np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-12):
        raise ValueError("weights must be a probability vector over the models")
    table = {}
    for outcome in itertools.product(range(k), repeat=tau):
        total = 0.0
        for i in range(m):
            prod = w[i]
            for t, label in enumerate(outcome):
                prod *= p[i, t, label]
            total += prod
        table[outcome] = total
    mass = sum(table.values())
    if not math.isclose(mass, 1.0, abs_tol=1e-9):
        raise AssertionError(f"joint table sums to {mass}")
    value = table[tuple(int(v) for v in y)]
    return math.log(value) if value > 0 else -math.inf


def estimate_log_likelihood(
    probs,
    labels,
    method: str = "auto",
    num_hyperplanes: int = 7,
    seed=0,
    switch_tau: int = 10,
    probit_clip: float = 1e-6,
) -> float:
    """Dispatch to Monte Carlo below ``switch_tau`` and to partitioning at or above."""
    tau = np.shape(labels)[0]
    if method == "auto":
        method = "mc" if tau < switch_tau else "partition"
    if method == "mc":
        return mc_log_likelihood(probs, labels)
    if method == "partition":
        cfg = PartitionConfig(num_hyperplanes, seed, probit_clip)
        return partition_log_likelihood(probs, labels, cfg)
    raise ValueError(f"unknown estimator {method!r}")
