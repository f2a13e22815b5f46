import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from jointpred import _backend, _kernels_py, likelihood
from jointpred.likelihood import DomainError, PartitionConfig

BACKENDS = [pytest.param(_kernels_py, id="numpy")]
if _backend.compiled is not None:
    BACKENDS.append(pytest.param(_backend.compiled, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def random_probs(rng, m, tau, k, concentration=1.0):
    return rng.dirichlet(np.full(k, concentration), size=(m, tau))


def partition_by_hand(probs, labels, a, b, eps):
    """Straight-line transcription: loop over every one of the 2**d cells."""
    m, tau, k = probs.shape
    d = a.shape[0]
    members = {}
    for i in range(m):
        ell = []
        for t in range(tau):
            for c in range(k):
                ell.append(stats.norm.ppf(min(max(probs[i, t, c], eps), 1 - eps)))
        psi = tuple(int(sum(a[j, r] * ell[r] for r in range(len(ell))) + b[j] >= 0) for j in range(d))
        members.setdefault(psi, []).append(i)
    total = 0.0
    for psi in itertools.product((0, 1), repeat=d):
        idx = members.get(psi, [])
        q = len(idx) / m
        joint = 1.0
        for t in range(tau):
            joint *= sum(probs[i, t, labels[t]] for i in idx) / len(idx) if idx else 1.0
        total += q * joint
    return math.log(total)


# -- inverse normal CDF --------------------------------------------------------

def test_ndtri_examples():
    assert likelihood.inverse_normal_cdf(0.5) == 0.0
    assert likelihood.inverse_normal_cdf(0.975) == pytest.approx(1.959964, abs=1e-6)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_ndtri_domain(p):
    with pytest.raises(DomainError):
        likelihood.inverse_normal_cdf(p)


def test_ndtri_round_trip_and_reference(backend):
    # log-spaced tails plus a uniform middle, 10^4 points in [1e-12, 1 - 1e-12]
    tail = np.logspace(-12, math.log10(0.05), 2500)
    p = np.concatenate([tail, np.linspace(0.05, 0.95, 5000), 1 - tail])
    x = np.asarray(backend.ndtri(p))
    assert np.max(np.abs(special.ndtr(x) - p)) <= 1e-9
    np.testing.assert_allclose(x, special.ndtri(p), rtol=1e-12, atol=1e-12)
    assert np.max(np.abs(np.asarray(backend.normal_cdf(x)) - p)) <= 1e-9


@settings(max_examples=300, deadline=None)
@given(st.floats(0.25, 0.75))
def test_ndtri_antisymmetry(p):
    # 1 - p is exact on [0.25, 0.75], so the identity can be checked tightly
    assert likelihood.inverse_normal_cdf(p) == pytest.approx(-likelihood.inverse_normal_cdf(1 - p), abs=1e-14)


@pytest.mark.parametrize("e", range(2, 40))
def test_ndtri_antisymmetry_dyadic(e):
    p = 2.0**-e
    assert likelihood.inverse_normal_cdf(p) == pytest.approx(-likelihood.inverse_normal_cdf(1 - p), rel=1e-12)


def test_normal_cdf_reference(backend):
    x = np.linspace(-30, 30, 2001)
    np.testing.assert_allclose(backend.normal_cdf(x), special.ndtr(x), rtol=1e-13, atol=1e-300)


# -- Monte Carlo ---------------------------------------------------------------

def test_mc_single_model():
    probs = np.array([[[0.25, 0.75], [0.75, 0.25]]])
    assert likelihood.mc_log_likelihood(probs, [1, 0]) == pytest.approx(math.log(0.5625), abs=1e-15)


def test_mc_hand_mixture():
    probs = np.array([
        [[0.2, 0.8], [0.6, 0.4]],
        [[0.5, 0.5], [0.5, 0.5]],
        [[0.9, 0.1], [0.3, 0.7]],
    ])
    expected = math.log((0.8 * 0.4 + 0.5 * 0.5 + 0.1 * 0.7) / 3)
    assert likelihood.mc_log_likelihood(probs, [1, 1]) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("tau", [1, 3, 8])
def test_mc_uniform_deterministic_belief(tau):
    rows = np.array(list(itertools.product((0, 1), repeat=tau)))
    probs = np.stack([1 - rows, rows], axis=2).astype(float)
    labels = np.random.default_rng(tau).integers(0, 2, tau)
    assert likelihood.mc_log_likelihood(probs, labels) == pytest.approx(-tau * math.log(2), abs=1e-12)


def test_mc_zero_probability_gives_minus_inf():
    probs = np.array([[[1.0, 0.0]], [[1.0, 0.0]]])
    assert likelihood.mc_log_likelihood(probs, [1]) == -math.inf


def test_mc_no_underflow_at_long_blocks():
    probs = np.full((4, 1000, 2), 0.5)
    assert likelihood.mc_log_likelihood(probs, np.zeros(1000, int)) == pytest.approx(1000 * math.log(0.5))


def test_mc_unbiased():
    rng = np.random.default_rng(0)
    belief = random_probs(rng, 5, 3, 2)
    labels = np.array([0, 1, 1])
    exact = math.exp(likelihood.brute_force_log_likelihood(belief, labels))
    draws = np.array([
        math.exp(likelihood.mc_log_likelihood(belief[rng.integers(0, 5, 100)], labels))
        for _ in range(1000)
    ])
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - exact) <= 3 * se


def test_backends_agree_mc(backend):
    rng = np.random.default_rng(3)
    probs = random_probs(rng, 50, 20, 3)
    y = rng.integers(0, 3, 20)
    assert backend.mc_log_likelihood(probs, y) == pytest.approx(_kernels_py.mc_log_likelihood(probs, y), rel=1e-13)


def test_check_prob_matrix_rejects():
    with pytest.raises(ValueError):
        likelihood.mc_log_likelihood(np.full((1, 2, 2), 0.6), [0, 0])
    with pytest.raises(ValueError):
        likelihood.mc_log_likelihood(np.full((1, 2, 2), 0.5), [0, 2])
    with pytest.raises(ValueError):
        likelihood.mc_log_likelihood(np.full((1, 2, 2), 0.5), [0])


# -- random partitioning ---------------------------------------------------------

def test_partition_matches_transcription(backend):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        probs = random_probs(rng, 8, 2, 2)
        y = rng.integers(0, 2, 2)
        a, b = likelihood.draw_hyperplanes(2, 4, seed)
        got = backend.partition_log_likelihood(probs, y, a, b, 1e-6)
        assert got == pytest.approx(partition_by_hand(probs, y, a, b, 1e-6), abs=1e-12)


def test_partition_transcription_public_api():
    rng = np.random.default_rng(42)
    probs = random_probs(rng, 8, 2, 2)
    y = np.array([1, 0])
    a, b = likelihood.draw_hyperplanes(2, 4, 5)
    got = likelihood.partition_log_likelihood(probs, y, PartitionConfig(2, 5))
    assert got == pytest.approx(partition_by_hand(probs, y, a, b, 1e-6), abs=1e-12)


def test_partition_zero_hyperplanes(backend):
    rng = np.random.default_rng(1)
    probs = random_probs(rng, 30, 6, 3)
    y = rng.integers(0, 3, 6)
    a, b = likelihood.draw_hyperplanes(0, 18, 0)
    expected = np.sum(np.log(probs[:, np.arange(6), y].mean(axis=0)))
    assert backend.partition_log_likelihood(probs, y, a, b, 1e-6) == pytest.approx(expected, abs=1e-12)


def test_partition_single_model_equals_mc(backend):
    rng = np.random.default_rng(2)
    probs = random_probs(rng, 1, 15, 2)
    y = rng.integers(0, 2, 15)
    a, b = likelihood.draw_hyperplanes(7, 30, 0)
    got = backend.partition_log_likelihood(probs, y, a, b, 1e-6)
    assert got == pytest.approx(likelihood.mc_log_likelihood(probs, y), abs=1e-12)


def test_backends_agree_partition(backend):
    rng = np.random.default_rng(4)
    for d in (1, 7, 10):
        probs = random_probs(rng, 400, 30, 2, 0.3)
        y = rng.integers(0, 2, 30)
        a, b = likelihood.draw_hyperplanes(d, 60, d)
        got = backend.partition_log_likelihood(probs, y, a, b, 1e-6)
        ref = _kernels_py.partition_log_likelihood(probs, y, a, b, 1e-6)
        assert got == pytest.approx(ref, rel=1e-12)


def test_partition_many_hyperplanes_falls_back():
    rng = np.random.default_rng(5)
    probs = random_probs(rng, 20, 40, 2)
    y = rng.integers(0, 2, 40)
    got = likelihood.partition_log_likelihood(probs, y, PartitionConfig(70, 1))
    # with 70 planes every model sits in its own cell, which is the MC estimate
    assert got == pytest.approx(likelihood.mc_log_likelihood(probs, y), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 6), st.integers(2, 4))
def test_permutation_invariance(seed, m, tau, k):
    rng = np.random.default_rng(seed)
    probs = random_probs(rng, m, tau, k)
    y = rng.integers(0, k, tau)
    perm = rng.permutation(m)
    cfg = PartitionConfig(5, seed)
    assert likelihood.partition_log_likelihood(probs[perm], y, cfg) == pytest.approx(
        likelihood.partition_log_likelihood(probs, y, cfg), abs=1e-12)
    assert likelihood.mc_log_likelihood(probs[perm], y) == pytest.approx(
        likelihood.mc_log_likelihood(probs, y), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 10))
def test_partition_finite_with_hard_zeros(seed, d):
    rng = np.random.default_rng(seed)
    probs = random_probs(rng, 20, 8, 2)
    probs[rng.random((20, 8)) < 0.3] = [1.0, 0.0]
    y = rng.integers(0, 2, 8)
    got = likelihood.partition_log_likelihood(probs, y, PartitionConfig(d, seed))
    assert not math.isnan(got) and got <= 0.0


def test_partition_close_to_exact_on_agreeing_mixtures():
    rng = np.random.default_rng(6)
    for tau in (2, 3, 5):
        # members are small perturbations of one center, so their disagreement is bounded
        center = rng.uniform(0.2, 0.8, size=tau)
        heads = np.clip(center + rng.uniform(-0.1, 0.1, size=(20, tau)), 0.05, 0.95)
        mixture = np.stack([1 - heads, heads], axis=2)
        samples = mixture[rng.integers(0, 20, 1000)]
        y = rng.integers(0, 2, tau)
        exact = likelihood.brute_force_log_likelihood(mixture, y)
        est = likelihood.partition_log_likelihood(samples, y, PartitionConfig(7, tau))
        assert abs(est - exact) <= 0.1


def test_partition_finite_on_uniform_deterministic_belief():
    rng = np.random.default_rng(7)
    rows = rng.integers(0, 2, size=(1000, 12))
    probs = np.stack([1 - rows, rows], axis=2).astype(float)
    y = rng.integers(0, 2, 12)
    assert math.isfinite(likelihood.partition_log_likelihood(probs, y, PartitionConfig(7, 0)))


def test_partition_config_validation():
    with pytest.raises(ValueError):
        PartitionConfig(-1)
    with pytest.raises(ValueError):
        PartitionConfig(7, 0, 0.5)


# -- exact enumeration -----------------------------------------------------------

def test_brute_force_coin_agents():
    chance = np.tile([1 / 3, 2 / 3], (1, 5, 1))
    assert likelihood.brute_force_log_likelihood(chance, [0] * 5) == pytest.approx(5 * math.log(1 / 3))
    biased = np.array([np.tile([1.0, 0.0], (5, 1)), np.tile([0.0, 1.0], (5, 1))])
    got = likelihood.brute_force_log_likelihood(biased, [0] * 5, [1 / 3, 2 / 3])
    assert got == pytest.approx(math.log(1 / 3))


def test_brute_force_two_model_direct_sum():
    probs = np.array([[[0.3, 0.7], [0.6, 0.4]], [[0.9, 0.1], [0.2, 0.8]]])
    got = likelihood.brute_force_log_likelihood(probs, [1, 0], [0.25, 0.75])
    assert got == pytest.approx(math.log(0.25 * 0.7 * 0.6 + 0.75 * 0.1 * 0.2), abs=1e-15)


def test_brute_force_too_large():
    with pytest.raises(ValueError):
        likelihood.brute_force_log_likelihood(np.full((1, 13, 2), 0.5), [0] * 13)


def test_estimate_dispatch():
    rng = np.random.default_rng(8)
    probs = random_probs(rng, 50, 12, 2)
    y = rng.integers(0, 2, 12)
    assert likelihood.estimate_log_likelihood(probs[:, :9], y[:9]) == likelihood.mc_log_likelihood(probs[:, :9], y[:9])
    assert likelihood.estimate_log_likelihood(probs, y, seed=3) == likelihood.partition_log_likelihood(
        probs, y, PartitionConfig(7, 3))
    with pytest.raises(ValueError):
        likelihood.estimate_log_likelihood(probs, y, method="bogus")


def test_mc_tiny_probabilities_no_underflow(backend):
    # per-model products near 1e-2000 are far below the smallest double
    probs = np.empty((3, 100, 2))
    probs[..., 0] = np.array([1e-20, 1e-5, 0.5])[:, None]
    probs[..., 1] = 1 - probs[..., 0]
    y = np.zeros(100, dtype=int)
    terms = np.asarray(backend.mc_log_terms(probs, y))
    np.testing.assert_allclose(terms, 100 * np.log([1e-20, 1e-5, 0.5]), rtol=1e-13)
    assert backend.mc_log_likelihood(probs, y) == pytest.approx(100 * math.log(0.5) - math.log(3), rel=1e-13)
