import math

import numpy as np
import pytest

from jointpred import generative as gen
from jointpred.generative import (
    CoinEnvironment,
    CoinPrior,
    Dataset,
    Environment,
    GenerativeConfig,
    MlpPrior,
)
from jointpred.nncore import MlpParams


def _zero_env(k=2, temperature=0.1):
    p = MlpParams((np.zeros((2, 3)), np.zeros((3, k))), (np.zeros(3), np.zeros(k)))
    return Environment(p, temperature)


def test_same_seed_same_environment():
    a = gen.sample_environment(GenerativeConfig(), 11)
    b = gen.sample_environment(GenerativeConfig(), 11)
    np.testing.assert_array_equal(a.params.flatten(), b.params.flatten())
    c = gen.sample_environment(GenerativeConfig(), 12)
    assert not np.array_equal(a.params.flatten(), c.params.flatten())


def test_first_layer_bias_variance():
    rng = np.random.default_rng(0)
    cfg = GenerativeConfig()
    b = np.concatenate([gen.sample_mlp(cfg, rng).biases[0] for _ in range(200)])  # 10k draws
    assert b.size == 10_000
    assert 0.45 <= b.var() <= 0.55


def test_later_biases_are_zero():
    p = gen.sample_mlp(GenerativeConfig(), np.random.default_rng(1))
    for b in p.biases[1:]:
        np.testing.assert_array_equal(b, 0.0)


def test_first_layer_weight_variance_is_glorot():
    rng = np.random.default_rng(2)
    w = np.concatenate([gen.sample_mlp(GenerativeConfig(), rng).weights[0].ravel() for _ in range(100)])
    assert w.size == 10_000
    assert abs(w.var() / (2 / 52) - 1) <= 0.10


def test_zero_env_is_uniform():
    env = _zero_env(k=3)
    p = gen.class_probs(env, np.random.default_rng(0).normal(size=(4, 2)))
    np.testing.assert_allclose(p, 1 / 3, atol=1e-15)


def test_halving_temperature_doubles_logits():
    env = gen.sample_environment(GenerativeConfig(temperature=0.2), 3)
    half = Environment(env.params, 0.1)
    x = np.random.default_rng(4).normal(size=(6, 2))
    z = env.logits(x)
    expected = np.exp(2 * z / 0.2)
    expected /= expected.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(half.class_probs(x), expected, rtol=1e-12)


def test_hand_set_one_hidden_unit():
    # x = 2: hidden relu(2*1.5 - 1) = 2; logits (2*1, 2*-1) = (2, -2); temp 2 -> (1, -1)
    p = MlpParams((np.array([[1.5]]), np.array([[1.0, -1.0]])), (np.array([-1.0]), np.zeros(2)))
    env = Environment(p, 2.0)
    s = 1 / (1 + math.exp(-2.0))
    np.testing.assert_allclose(env.class_probs([[2.0]]), [[s, 1 - s]], atol=1e-15)


def test_zero_env_label_frequency():
    data = gen.sample_data(_zero_env(), 10_000, 5)
    assert 0.49 <= np.mean(data.labels == 0) <= 0.51


def test_sample_data_basics():
    env = gen.sample_environment(GenerativeConfig(), 0)
    one = gen.sample_data(env, 1, 0)
    assert len(one) == 1 and one.inputs.shape == (1, 2)
    a, b = gen.sample_data(env, 50, 7), gen.sample_data(env, 50, 7)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.labels, b.labels)
    with pytest.raises(ValueError):
        gen.sample_data(env, 0, 0)


def test_labels_follow_probabilities():
    # a skewed 3-class environment: compare empirical frequencies to the mean probabilities
    env = gen.sample_environment(GenerativeConfig(num_classes=3, temperature=1.0), 9)
    data = gen.sample_data(env, 20_000, 1)
    p = env.class_probs(data.inputs)
    freq = np.bincount(data.labels, minlength=3) / len(data)
    np.testing.assert_allclose(freq, p.mean(axis=0), atol=0.015)


def test_env_log_likelihood_uniform():
    env = _zero_env()
    data = gen.sample_data(env, 100, 0)
    assert gen.env_log_likelihood(env, data) == pytest.approx(100 * math.log(0.5), abs=1e-10)


def test_env_log_likelihood_single_factor():
    p = MlpParams((np.zeros((1, 2)),), (np.array([math.log(0.9), math.log(0.1)]),))
    env = Environment(p, 1.0)
    ll = gen.env_log_likelihood(env, Dataset(np.zeros((1, 1)), [0]))
    assert ll == pytest.approx(math.log(0.9), abs=1e-12)


@pytest.mark.parametrize("tau", [1, 5, 100])
def test_coin_all_tails(tau):
    env = CoinEnvironment(2 / 3)
    block = Dataset(np.zeros((tau, 1)), np.zeros(tau, int))
    assert gen.env_log_likelihood(env, block) == pytest.approx(tau * math.log(1 / 3), rel=1e-12)


def test_coin_agent_likelihoods():
    a, b = gen.coin_agent_likelihoods(1)
    assert a == pytest.approx(math.log(1 / 3)) and b == pytest.approx(math.log(1 / 3))
    a, b = gen.coin_agent_likelihoods(2)
    assert math.exp(a) == pytest.approx(1 / 9) and math.exp(b) == pytest.approx(1 / 3)
    a, b = gen.coin_agent_likelihoods(100)
    assert a == pytest.approx(-100 * math.log(3)) and b == pytest.approx(-math.log(3))
    with pytest.raises(ValueError):
        gen.coin_agent_likelihoods(0)


def test_coin_prior_frequencies():
    rng = np.random.default_rng(0)
    heads = [CoinPrior().sample(rng).p_heads for _ in range(6000)]
    assert abs(np.mean(heads) - 2 / 3) < 0.02


def test_mlp_prior_properties():
    prior = MlpPrior(GenerativeConfig(input_dim=3, num_classes=4, temperature=0.5))
    env = prior.sample(np.random.default_rng(0))
    assert (env.input_dim, env.num_classes, env.temperature) == (3, 4, 0.5)


@pytest.mark.parametrize("bad", [dict(temperature=0.0), dict(num_classes=1), dict(input_dim=0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        GenerativeConfig(**bad)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2, int))
    with pytest.raises(ValueError):
        Dataset(np.zeros((1, 2)), [-1])
