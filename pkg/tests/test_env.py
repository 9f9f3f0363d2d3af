import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from metagap import ValidationError
from metagap.env import (
    LOG2,
    GaussianMean,
    LinearRegression,
    Method,
    Task,
    epsilon_js,
    epsilon_kl,
    from_dict,
    kl_dataset_distributions,
    kl_task_pairs_mc,
    sample_dataset,
    sample_task,
    to_dict,
)


def test_zero_variance_tasks_are_the_center():
    rng = np.random.default_rng(1)
    assert all(sample_task(GaussianMean(0.0, 0.0), rng).tau == 0.0 for _ in range(20))
    env = LinearRegression((2.0, 3.0), 0.0, 1.1)
    for _ in range(20):
        np.testing.assert_array_equal(sample_task(env, rng).w_bar, [2.0, 3.0])


def test_task_moments():
    env = GaussianMean(0.0, 1.0, 1.1)
    rng = np.random.default_rng(2)
    taus = np.array([sample_task(env, rng).tau for _ in range(100_000)])
    assert abs(taus.mean()) < 3 * np.sqrt(1e-5)
    assert abs(taus.var() - 1.0) < 0.05


def test_near_degenerate_noise():
    env = GaussianMean(0.0, 1.0, 1e-12)
    S = sample_dataset(env, Task([5.0]), 50, np.random.default_rng(0))
    assert np.all(np.abs(S.z - 5.0) < 1e-4)


@given(st.integers(1, 40), st.integers(1, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_regression_features_have_unit_norm(m, d, seed):
    env = LinearRegression(tuple(range(d)), 0.5, 1.1)
    rng = np.random.default_rng(seed)
    S = sample_dataset(env, sample_task(env, rng), m, rng)
    np.testing.assert_allclose(np.linalg.norm(S.x, axis=-1), 1.0, atol=1e-12)


def test_pooled_sample_variance():
    env = GaussianMean(0.0, 1.0, 1.1)
    S = sample_dataset(env, Task([0.0]), 6, np.random.default_rng(3))
    # many datasets at once through the batched sampler
    from metagap.env import draw_data

    z = draw_data(env, np.zeros((100_000, 1)), 6, np.random.default_rng(4)).z
    pooled = z.var(axis=-1, ddof=1).mean()
    assert abs(pooled - 1.1) < 0.02 * 1.1
    assert S.m == 6


def test_unit_sphere_second_moment():
    env = LinearRegression((0.0, 0.0, 0.0), 1.0, 1.0)
    from metagap.env import unit_sphere

    x = unit_sphere(np.random.default_rng(0), (200_000,), env.d)
    np.testing.assert_allclose(x.T @ x / len(x), np.eye(3) / 3, atol=5e-3)


def test_task_dimension_mismatch():
    with pytest.raises(ValidationError):
        sample_dataset(LinearRegression((1.0, 2.0)), Task([1.0]), 3, 0)
    with pytest.raises(ValidationError):
        kl_dataset_distributions(GaussianMean(), Task([0.0]), Task([0.0, 1.0]), 3)


@pytest.mark.parametrize("kwargs", [dict(nu_sq=0.0), dict(nu_sq=-1.0), dict(nu_bar_sq=-0.1)])
def test_invalid_variances_rejected(kwargs):
    with pytest.raises(ValidationError):
        GaussianMean(**kwargs)
    with pytest.raises(ValidationError):
        LinearRegression((1.0, 2.0), **kwargs)


def test_kl_examples():
    env = GaussianMean(0.0, 1.0, 1.1)
    assert kl_dataset_distributions(env, Task([0.0]), Task([0.0]), 6) == 0.0
    assert kl_dataset_distributions(env, Task([0.0]), Task([1.0]), 6) == pytest.approx(6 / 2.2, abs=1e-12)
    reg = LinearRegression((0.0, 0.0), 1.0, 1.0)
    assert kl_dataset_distributions(reg, Task([2.0, 0.0]), Task([0.0, 0.0]), 1) == pytest.approx(1.0, abs=1e-12)


def test_kl_matches_density_ratio_monte_carlo():
    env = GaussianMean(0.0, 1.0, 1.1)
    rng = np.random.default_rng(5)
    z = rng.normal(0.0, np.sqrt(1.1), size=(200_000, 6))
    log_ratio = (stats.norm.logpdf(z, 0.0, np.sqrt(1.1)) - stats.norm.logpdf(z, 1.0, np.sqrt(1.1))).sum(axis=1)
    se = log_ratio.std() / np.sqrt(len(log_ratio))
    assert abs(log_ratio.mean() - kl_dataset_distributions(env, Task([0.0]), Task([1.0]), 6)) < 3 * se


def test_regression_kl_matches_feature_average():
    # average the per-feature Gaussian KL over many x on the circle
    env = LinearRegression((0.0, 0.0), 1.0, 0.7)
    t, tp = Task([0.3, -1.2]), Task([1.1, 0.4])
    theta = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    x = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    per_x = (x @ (t.params - tp.params)) ** 2 / (2 * 0.7)
    assert kl_dataset_distributions(env, t, tp, 5) == pytest.approx(5 * per_x.mean(), rel=1e-12)


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(1, 50), st.floats(0.05, 5))
def test_kl_nonnegative_symmetric_tensorizes(a, b, m, nu_sq):
    env = GaussianMean(0.0, 1.0, nu_sq)
    ta, tb = Task([a]), Task([b])
    kl = kl_dataset_distributions(env, ta, tb, m)
    assert kl >= 0
    assert kl == kl_dataset_distributions(env, tb, ta, m)
    assert kl == pytest.approx(m * kl_dataset_distributions(env, ta, tb, 1), rel=1e-13, abs=0)
    if a == b:
        assert kl == 0
    elif abs(a - b) > 1e-150:  # below this the square underflows
        assert kl > 0


def test_epsilon_kl_examples():
    assert epsilon_kl(GaussianMean(0.0, 0.0, 1.1), 6) == 0.0
    assert epsilon_kl(GaussianMean(0.0, 0.5, 1.1), 6) == pytest.approx(2.7272727, abs=1e-6)
    reg = LinearRegression((2.0, 3.0), 0.5, 1.1)
    eps = epsilon_kl(reg, 6)
    assert eps == pytest.approx(2.7272727, abs=1e-6)
    mc, _ = kl_task_pairs_mc(reg, 6, 100_000, np.random.default_rng(6))
    assert abs(mc - eps) < 0.02 * eps


def test_kl_task_pairs_within_three_standard_errors():
    env = GaussianMean(0.0, 0.5, 1.1)
    mean, se = kl_task_pairs_mc(env, 6, 100_000, np.random.default_rng(7))
    assert abs(mean - epsilon_kl(env, 6)) < 3 * se


def test_epsilon_js_closed_form_cap():
    r = epsilon_js(GaussianMean(0.0, 0.1, 1.1), 6)
    assert r.method is Method.CLOSED_FORM and r.std_err == 0.0
    assert r.epsilon_js == pytest.approx(0.6 / 1.1 / 2, abs=1e-12)
    assert epsilon_js(GaussianMean(0.0, 0.5, 1.1), 6).epsilon_js == LOG2
    big = GaussianMean(0.0, 10 / 6 * 1.1, 1.1)
    assert epsilon_kl(big, 6) == pytest.approx(10.0)
    assert epsilon_js(big, 6).epsilon_js == LOG2


@pytest.mark.parametrize("env", [GaussianMean(0.0, 0.0, 1.1), LinearRegression((2.0, 3.0), 0.0, 1.1)])
def test_epsilon_js_identical_tasks(env):
    assert epsilon_js(env, 6, "lemma1").epsilon_js == 0.0
    assert epsilon_js(env, 6, "monte_carlo", 1000, 0).epsilon_js == 0.0


def _js_quadrature_m1():
    # E over delta ~ N(0, 2) of JS(N(0,1) || N(delta,1)), all by adaptive quadrature
    def js(delta):
        def integrand(z):
            p = stats.norm.pdf(z)
            q = stats.norm.pdf(z, delta)
            mix = 0.5 * (p + q)
            out = 0.0
            if p > 0:
                out += 0.5 * p * np.log(p / mix)
            if q > 0:
                out += 0.5 * q * np.log(q / mix)
            return out

        return integrate.quad(integrand, -12 + min(0, delta), 12 + max(0, delta), limit=200)[0]

    return integrate.quad(lambda d: js(d) * stats.norm.pdf(d, 0, np.sqrt(2)), -12, 12, limit=200)[0]


def test_epsilon_js_monte_carlo_matches_quadrature():
    oracle = _js_quadrature_m1()
    assert 0 < oracle < LOG2
    r = epsilon_js(GaussianMean(0.0, 1.0, 1.0), 1, "monte_carlo", 100_000, np.random.default_rng(8))
    assert r.method is Method.MONTE_CARLO
    assert abs(r.epsilon_js - oracle) < 3 * r.std_err


def test_epsilon_js_monte_carlo_respects_cap():
    for nu_bar_sq in (0.05, 0.5, 3.0):
        env = LinearRegression((2.0, 3.0), nu_bar_sq, 1.1)
        r = epsilon_js(env, 6, "monte_carlo", 20_000, np.random.default_rng(9))
        assert r.epsilon_js <= min(LOG2, r.epsilon_kl / 2) + 3 * r.std_err
        assert r.epsilon_js <= LOG2


def test_epsilon_js_deterministic_per_stream():
    env = LinearRegression((2.0, 3.0), 0.5, 1.1)
    a = epsilon_js(env, 6, "monte_carlo", 5000, 11)
    b = epsilon_js(env, 6, "monte_carlo", 5000, 11)
    assert a == b


def test_unknown_js_mode():
    with pytest.raises(ValidationError):
        epsilon_js(GaussianMean(), 6, "bogus")


@pytest.mark.parametrize("env", [GaussianMean(1.5, 0.2, 0.9), LinearRegression((2.0, 3.0, -1.0), 0.5, 1.1)])
def test_serialization_round_trip(env):
    assert from_dict(to_dict(env)) == env


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ValidationError, match="unknown"):
        from_dict({"kind": "gaussian_mean", "nu_bar_sq": 1.0, "oops": 1})
    with pytest.raises(ValidationError):
        from_dict({"kind": "poisson"})
