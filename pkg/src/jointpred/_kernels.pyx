# cython: language_level=3
"""Compiled likelihood kernels.

Same contract as ``_kernels_py``; inputs are assumed validated and
C-contiguous float64 / int64 by the caller in ``likelihood``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, exp, erfc, frexp, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double _SQRT_2PI = 2.5066282746310002
cdef double _SQRT_HALF = 0.7071067811865476
cdef double _P_LOW = 0.02425
cdef double _LN2 = 0.6931471805599453


cdef inline double _tail(double q) noexcept nogil:
    return (((((-7.784894002430293e-03 * q - 3.223964580411365e-01) * q
               - 2.400758277161838e00) * q - 2.549732539343734e00) * q
             + 4.374664141464968e00) * q + 2.938163982698783e00) / (
        (((7.784695709041462e-03 * q + 3.224671290700398e-01) * q
          + 2.445134137142996e00) * q + 3.754408661907416e00) * q + 1.0)


cdef inline double _ndtri(double p) noexcept nogil:
    # 1 - p is exact for p > 0.5, so refine in the lower half only
    if p > 0.5:
        return -_ndtri_lower(1.0 - p)
    return _ndtri_lower(p)


cdef inline double _ndtri_lower(double p) noexcept nogil:
    cdef double x, q, r, e, u
    if p < _P_LOW:
        x = _tail(sqrt(-2.0 * log(p)))
    else:
        q = p - 0.5
        r = q * q
        x = (((((-3.969683028665376e01 * r + 2.209460984245205e02) * r
                - 2.759285104469687e02) * r + 1.383577518672690e02) * r
              - 3.066479806614716e01) * r + 2.506628277459239e00) * q / (
            ((((-5.447609879822406e01 * r + 1.615858368580409e02) * r
               - 1.556989798598866e02) * r + 6.680131188771972e01) * r
             - 1.328068155288572e01) * r + 1.0)
    e = 0.5 * erfc(-x * _SQRT_HALF) - p
    u = e * _SQRT_2PI * exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_cdf(x):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i, n = flat.shape[0]
    with nogil:
        for i in range(n):
            out[i] = 0.5 * erfc(-flat[i] * _SQRT_HALF)
    return out.reshape(np.shape(x))


def ndtri(p):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(p, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i, n = flat.shape[0]
    with nogil:
        for i in range(n):
            out[i] = _ndtri(flat[i])
    return out.reshape(np.shape(p))


cdef double _logsumexp(double[::1] v) noexcept nogil:
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double top = -INFINITY, acc = 0.0
    for i in range(n):
        if v[i] > top:
            top = v[i]
    if top == -INFINITY or top == INFINITY:
        return top
    for i in range(n):
        acc += exp(v[i] - top)
    return top + log(acc)


def label_probs(const double[:, :, ::1] probs, const int64_t[::1] labels):
    cdef Py_ssize_t m, t, M = probs.shape[0], T = probs.shape[1]
    out = np.empty((M, T))
    cdef double[:, ::1] o = out
    with nogil:
        for m in range(M):
            for t in range(T):
                o[m, t] = probs[m, t, labels[t]]
    return out


def mc_log_terms(const double[:, :, ::1] probs, const int64_t[::1] labels):
    # running product with its binary exponent split off whenever it gets
    # small: one log per model instead of one per step, and no underflow
    cdef Py_ssize_t m, t, M = probs.shape[0], T = probs.shape[1]
    out = np.empty(M)
    cdef double[::1] o = out
    cdef double prod
    cdef int e, shift
    with nogil:
        for m in range(M):
            prod = 1.0
            shift = 0
            for t in range(T):
                prod *= probs[m, t, labels[t]]
                if prod < 1e-280:
                    if prod == 0.0:
                        break
                    prod = frexp(prod, &e)
                    shift += e
            o[m] = log(prod) + shift * _LN2 if prod > 0.0 else -INFINITY
    return out


def mc_log_likelihood(const double[:, :, ::1] probs, const int64_t[::1] labels):
    cdef double[::1] terms = mc_log_terms(probs, labels)
    return _logsumexp(terms) - log(<double>terms.shape[0])


def cell_codes(const double[:, :, ::1] probs, const double[:, ::1] A,
               const double[::1] b, double eps):
    """Packed hyperplane sign pattern per model (bit j set when plane j is
    nonnegative).  Requires at most 63 hyperplanes."""
    cdef Py_ssize_t M = probs.shape[0], T = probs.shape[1], K = probs.shape[2]
    cdef Py_ssize_t d = A.shape[0], L = T * K
    cdef Py_ssize_t m, t, k, j, i
    cdef double p, s
    codes = np.zeros(M, dtype=np.uint64)
    cdef uint64_t[::1] c = codes
    probit_buf = np.empty(L)
    cdef double[::1] ell = probit_buf
    cdef double lo = eps, hi = 1.0 - eps
    with nogil:
        for m in range(M):
            for t in range(T):
                for k in range(K):
                    p = probs[m, t, k]
                    if p < lo:
                        p = lo
                    elif p > hi:
                        p = hi
                    ell[t * K + k] = _ndtri(p)
            for j in range(d):
                s = b[j]
                for i in range(L):
                    s += A[j, i] * ell[i]
                if s >= 0.0:
                    c[m] |= (<uint64_t>1) << j
    return codes


def partition_log_likelihood(const double[:, :, ::1] probs, const int64_t[::1] labels,
                             const double[:, ::1] A, const double[::1] b, double eps):
    cdef Py_ssize_t M = probs.shape[0], T = probs.shape[1]
    cdef Py_ssize_t m, t, start, stop, g, ncell = 0
    codes = cell_codes(probs, A, b, eps)
    cdef cnp.int64_t[::1] order = np.argsort(codes, kind="stable").astype(np.int64)
    cdef uint64_t[::1] c = codes
    acc_arr = np.zeros(T)
    cdef double[::1] acc = acc_arr
    cell_arr = np.empty(M)
    cdef double[::1] cell = cell_arr
    cdef double ll, n
    with nogil:
        start = 0
        while start < M:
            stop = start
            while stop < M and c[order[stop]] == c[order[start]]:
                stop += 1
            for t in range(T):
                acc[t] = 0.0
            for g in range(start, stop):
                m = order[g]
                for t in range(T):
                    acc[t] += probs[m, t, labels[t]]
            n = <double>(stop - start)
            ll = log(n / M)
            for t in range(T):
                if acc[t] > 0.0:
                    ll += log(acc[t] / n)
                else:
                    ll = -INFINITY
                    break
            cell[ncell] = ll
            ncell += 1
            start = stop
    return _logsumexp(cell[:ncell])
