import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corrdiff import mlp
from corrdiff.errors import ConfigurationError, DimensionError, NumericError
from corrdiff.schedule import forward_sample, make_schedule
from corrdiff.score import (
    GaussianMixtureOracle, TinyScoreMLP, epsilon_from_x0, predict_x0, score_from_x0, score_layer_sizes,
    timestep_embedding, tiny_score_forward, x0_from_score,
)

S = make_schedule("vp-cosine", 8)


def single_gaussian(mu0, s0):
    return GaussianMixtureOracle(S, [1.0], mu0[None], [s0**2])


def test_single_component_matches_closed_form_and_monte_carlo():
    rng = np.random.default_rng(0)
    mu0, s0, t = np.array([0.3, -0.2]), 0.7, 4
    oracle = single_gaussian(mu0, s0)
    a, sg = S.alpha[t], S.sigma[t]
    x_t = np.array([0.5, 0.1])
    closed = (a * s0**2 * x_t + sg**2 * mu0) / (a**2 * s0**2 + sg**2)
    np.testing.assert_allclose(oracle.predict_x0(x_t, None, t), closed, atol=1e-14)

    # joint draws, then average x0 over those whose x_t lands near the query point
    n = 100_000
    x0 = mu0 + s0 * rng.standard_normal((n, 2))
    xt = a * x0 + sg * rng.standard_normal((n, 2))
    pred = oracle.predict_x0(xt, None, t)
    resid = x0 - pred
    # E[x0 - E[x0|x_t]] = 0 and residual is uncorrelated with x_t
    se = resid.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(resid.mean(axis=0)) <= 3 * se)
    cov = (resid * (xt - xt.mean(axis=0))).mean(axis=0)
    se_cov = (resid * (xt - xt.mean(axis=0))).std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(cov) <= 3 * se_cov)


def test_t0_returns_input():
    rng = np.random.default_rng(1)
    oracle = GaussianMixtureOracle(S, [0.3, 0.7], rng.standard_normal((2, 5)), [0.2, 1.5])
    x = rng.standard_normal(5)
    np.testing.assert_allclose(oracle.predict_x0(x, None, 0), x, atol=1e-15)


def test_symmetric_mixture_at_origin():
    m = np.ones((1, 4))
    oracle = GaussianMixtureOracle(S, [0.5, 0.5], np.concatenate([m, -m]), [0.3, 0.3])
    for t in range(1, 9):
        np.testing.assert_allclose(oracle.predict_x0(np.zeros(4), None, t), 0.0, atol=1e-15)


def test_oracle_batched_matches_single():
    rng = np.random.default_rng(2)
    oracle = GaussianMixtureOracle(S, [0.2, 0.5, 0.3], rng.standard_normal((3, 2, 3)), [0.1, 0.4, 1.0])
    xs = rng.standard_normal((4, 2, 3))
    batched = oracle.predict_x0(xs, None, 5)
    for k in range(4):
        np.testing.assert_allclose(batched[k], oracle.predict_x0(xs[k], None, 5), atol=1e-14)


@pytest.mark.parametrize("weights, variances", [([1.0, -1.0], [1.0, 1.0]), ([1.0, 1.0], [1.0, 0.0]), ([1.0], [1.0, 2.0])])
def test_oracle_rejects_bad_components(weights, variances):
    with pytest.raises(ConfigurationError):
        GaussianMixtureOracle(S, weights, np.zeros((len(weights), 2)), variances)


def test_oracle_weights_normalized():
    oracle = GaussianMixtureOracle(S, [2.0, 6.0], np.zeros((2, 1)), [1.0, 1.0])
    assert abs(oracle.weights.sum() - 1) <= 1e-12


def test_predict_x0_rejects_nonfinite_and_shape():
    oracle = single_gaussian(np.zeros(3), 1.0)
    with pytest.raises(NumericError):
        predict_x0(oracle, np.array([0.0, np.nan, 1.0]), None, 3)
    with pytest.raises(DimensionError):
        predict_x0(oracle, np.zeros(4), None, 3)


def test_score_zero_when_xt_is_scaled_x0():
    x0 = np.array([0.4, -1.0, 2.0])
    np.testing.assert_array_equal(score_from_x0(S, S.alpha[3] * x0, x0, 3), 0.0)


def test_score_matches_analytic_marginal_gradient():
    mu0, s0 = np.array([0.5, -0.25, 1.0]), 0.8
    oracle = single_gaussian(mu0, s0)
    x_t = np.array([0.1, 0.9, -0.4])
    for t in range(1, 9):
        a, sg = S.alpha[t], S.sigma[t]
        # independent: grad of log N(x; a mu0, (a^2 s0^2 + sg^2) I)
        analytic = -(x_t - a * mu0) / (a**2 * s0**2 + sg**2)
        got = score_from_x0(S, x_t, oracle.predict_x0(x_t, None, t), t)
        np.testing.assert_allclose(got, analytic, rtol=1e-9, atol=1e-12)


def test_log_marginal_grad_against_finite_differences():
    rng = np.random.default_rng(3)
    means = rng.standard_normal((2, 3))
    var = np.array([0.3, 0.9])
    w = np.array([0.4, 0.6])
    oracle = GaussianMixtureOracle(S, w, means, var)
    t = 5
    a, sg = S.alpha[t], S.sigma[t]

    def log_q(x):
        v = a**2 * var + sg**2
        comp = np.log(w) - 0.5 * np.sum((x - a * means) ** 2, axis=1) / v - 1.5 * np.log(2 * np.pi * v)
        return np.log(np.sum(np.exp(comp)))

    x = rng.standard_normal(3)
    h = 1e-6
    fd = np.array([(log_q(x + h * e) - log_q(x - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(oracle.log_marginal_grad(x, t), fd, rtol=1e-6)


@settings(max_examples=100, deadline=None)
@given(t=st.integers(1, 7), seed=st.integers(0, 2**32 - 1))
def test_score_round_trip(t, seed):
    # t = T is excluded: cosine alpha(T) ~ 6e-17, so dividing by it amplifies rounding by 1e16
    rng = np.random.default_rng(seed)
    x_t, x0 = rng.standard_normal((2, 6))
    back = x0_from_score(S, x_t, score_from_x0(S, x_t, x0, t), t)
    np.testing.assert_allclose(back, x0, rtol=1e-12, atol=1e-12)


def test_score_guard_at_t0():
    with pytest.raises(NumericError):
        score_from_x0(S, np.zeros(2), np.zeros(2), 0)
    with pytest.raises(NumericError):
        epsilon_from_x0(S, np.zeros(2), np.zeros(2), 0)


@pytest.mark.parametrize("t", [1, 4, 8])
def test_epsilon_identities(t):
    rng = np.random.default_rng(t)
    x0, eps = rng.standard_normal((2, 7))
    x_t = forward_sample(S, x0, t, eps)
    np.testing.assert_allclose(epsilon_from_x0(S, x_t, x0, t), eps, atol=1e-12)
    np.testing.assert_allclose(epsilon_from_x0(S, x_t, x_t / S.alpha[t], t), 0.0, atol=1e-12)
    x0_hat = rng.standard_normal(7)
    rebuilt = S.alpha[t] * x0_hat + S.sigma[t] * epsilon_from_x0(S, x_t, x0_hat, t)
    np.testing.assert_allclose(rebuilt, x_t, atol=1e-12)


def test_timestep_embedding_shape_and_range():
    e = timestep_embedding([0.0, 0.5, 1.0])
    assert e.shape == (3, 16)
    np.testing.assert_array_equal(e[0, :8], 0.0)
    np.testing.assert_array_equal(e[0, 8:], 1.0)


def test_tiny_forward_zero_weights_gives_bias():
    hidden = (5, 4)
    sizes = score_layer_sizes(3, 2, hidden)
    params = np.zeros(mlp.n_params(sizes))
    bias = np.array([0.1, -0.2, 0.3])
    params[-3:] = bias
    out = tiny_score_forward(params, np.ones((2, 3)), np.ones((2, 2)), timestep_embedding([0.2, 0.7]), hidden)
    np.testing.assert_array_equal(out, np.tile(bias, (2, 1)))


def test_tiny_forward_deterministic():
    model = TinyScoreMLP(S, (2, 2), 3, hidden=(8, 8), seed=5)
    x = np.arange(4.0).reshape(2, 2) / 4
    y = np.array([0.1, 0.2, 0.3])
    np.testing.assert_array_equal(model.predict_x0(x, y, 3), model.predict_x0(x, y, 3))
    np.testing.assert_array_equal(
        TinyScoreMLP(S, (2, 2), 3, hidden=(8, 8), seed=5).predict_x0(x, y, 3), model.predict_x0(x, y, 3)
    )


def test_tiny_forward_dimension_mismatch():
    sizes = score_layer_sizes(3, 2, (4, 4))
    params = np.zeros(mlp.n_params(sizes))
    with pytest.raises(ConfigurationError):
        tiny_score_forward(params, np.ones((1, 3)), np.ones((1, 1)), timestep_embedding([0.1]), (4, 4))
    with pytest.raises(ConfigurationError):
        tiny_score_forward(params, np.ones((2, 3)), np.ones((2, 2)), timestep_embedding([0.1]), (4, 4))


def test_tiny_forward_param_gradient_matches_finite_differences():
    hidden = (6, 5)
    sizes = score_layer_sizes(3, 2, hidden)
    rng = np.random.default_rng(9)
    params = mlp.init_params(sizes, rng, gain=0.8)
    x, y = rng.standard_normal((2, 3)), rng.standard_normal((2, 2))
    te = timestep_embedding([0.3, 0.9])
    inp = np.concatenate([x, y, te], axis=1)
    out, acts = mlp.forward(params, sizes, inp)
    grad, _ = mlp.backward(params, sizes, acts, np.ones_like(out))
    h = 1e-5
    for i in range(params.size):
        e = np.zeros_like(params)
        e[i] = h
        fd = (tiny_score_forward(params + e, x, y, te, hidden).sum()
              - tiny_score_forward(params - e, x, y, te, hidden).sum()) / (2 * h)
        assert abs(fd - grad[i]) <= 1e-4 * max(abs(fd), abs(grad[i]), 1e-8)


def test_tiny_model_save_load(tmp_path):
    model = TinyScoreMLP(S, (3,), 2, hidden=(4, 4), seed=1)
    path = tmp_path / "w.bin"
    model.save(path)
    back = TinyScoreMLP.load(path, S, (3,))
    assert back.y_dim == 2 and back.hidden == (4, 4)
    np.testing.assert_array_equal(back.params, model.params.astype(np.float32).astype(np.float64))
    with pytest.raises(ConfigurationError):
        TinyScoreMLP.load(path, S, (5,))


def test_oracle_beats_perturbed_predictor():
    rng = np.random.default_rng(4)
    means = np.stack([np.full(3, 1.0), np.full(3, -1.0)])
    oracle = GaussianMixtureOracle(S, [0.5, 0.5], means, [0.2, 0.2])
    n, t = 10_000, 4
    comp = rng.integers(0, 2, n)
    x0 = means[comp] + np.sqrt(0.2) * rng.standard_normal((n, 3))
    xt = S.alpha[t] * x0 + S.sigma[t] * rng.standard_normal((n, 3))
    pred = oracle.predict_x0(xt, None, t)
    base = np.mean(np.sum((pred - x0) ** 2, axis=1))
    for _ in range(5):
        d = rng.standard_normal(3)
        other = np.mean(np.sum((pred + 0.1 * d / np.linalg.norm(d) - x0) ** 2, axis=1))
        assert base <= other
