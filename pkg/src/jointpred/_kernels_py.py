"""Pure numpy implementation of the likelihood kernels.

Mirrors ``_kernels.pyx`` function for function; used when the compiled
extension is unavailable or ``JOINTPRED_PURE_PYTHON`` is set.
"""
from __future__ import annotations

import math

import numpy as np

# Acklam's rational approximation to the normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425
_SQRT_2PI = math.sqrt(2.0 * math.pi)

_erfc = np.frompyfunc(math.erfc, 1, 1)


def _tail(q):
    return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
        (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    )


def normal_cdf(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * _erfc(-x * math.sqrt(0.5)).astype(np.float64)


def ndtri(p: np.ndarray) -> np.ndarray:
    """Normal quantile for ``0 < p < 1``: Acklam's approximation plus one
    Halley step against the erfc-based CDF."""
    p = np.asarray(p, dtype=np.float64)
    # 1 - p is exact for p > 0.5, so refine in the lower half only
    upper = p > 0.5
    p = np.where(upper, 1.0 - p, p)
    x = np.empty_like(p)
    lo = p < _P_LOW
    mid = ~lo
    if lo.any():
        x[lo] = _tail(np.sqrt(-2.0 * np.log(p[lo])))
    if mid.any():
        q = p[mid] - 0.5
        r = q * q
        x[mid] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    e = normal_cdf(x) - p
    u = e * _SQRT_2PI * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    return np.where(upper, -x, x)


def _logsumexp(v: np.ndarray) -> float:
    top = np.max(v)
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.sum(np.exp(v - top))))


def label_probs(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """``probs[m, t, labels[t]]`` as an ``(M, tau)`` array."""
    return probs[:, np.arange(labels.shape[0]), labels]


def mc_log_terms(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(label_probs(probs, labels)).sum(axis=1)


def mc_log_likelihood(probs: np.ndarray, labels: np.ndarray) -> float:
    terms = mc_log_terms(probs, labels)
    return _logsumexp(terms) - math.log(terms.shape[0])


def cell_codes(probs: np.ndarray, A: np.ndarray, b: np.ndarray, eps: float) -> np.ndarray:
    """Hyperplane sign pattern of each model's probit vector, one row per model."""
    m = probs.shape[0]
    probits = ndtri(np.clip(probs.reshape(m, -1), eps, 1.0 - eps))
    return (probits @ A.T + b) >= 0.0


def partition_log_likelihood(
    probs: np.ndarray, labels: np.ndarray, A: np.ndarray, b: np.ndarray, eps: float
) -> float:
    m, tau, _ = probs.shape
    lp = label_probs(probs, labels)
    if A.shape[0] == 0:
        inverse = np.zeros(m, dtype=np.int64)
        counts = np.array([m])
    else:
        bits = cell_codes(probs, A, b, eps)
        _, inverse, counts = np.unique(bits, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
    sums = np.zeros((counts.shape[0], tau))
    np.add.at(sums, inverse, lp)
    with np.errstate(divide="ignore"):
        cell_ll = np.log(sums / counts[:, None]).sum(axis=1)
        return _logsumexp(np.log(counts / m) + cell_ll)
