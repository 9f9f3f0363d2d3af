import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metagap import ValidationError
from metagap._validation import substream
from metagap.bounds import (
    Variant,
    b_term,
    bound_corollary_js,
    bound_corollary_kl,
    bound_mixture_relaxed,
    bound_theorem1,
    closed_form_bound_mean_estimation,
    kl_auxiliary_terms,
    mixture_auxiliary_terms,
)
from metagap.config import ScenarioConfig
from metagap.env import LOG2, GaussianMean, epsilon_js
from metagap.info import mi_hyper_dataset_closed_form, mi_model_sample_closed_form
from metagap.runner import scenario_bounds

C = 1.5
SIGMA_SQ = C**4 / 4
I_HYPER = 0.5 * math.log(4 / 3)
I_MODEL = 0.5 * math.log(15 / 13)

nonneg = st.floats(0, 50, allow_nan=False)


def test_kl_bound_examples():
    assert bound_corollary_kl(SIGMA_SQ, 0.0, [0.0] * 4, B=0.37).total == pytest.approx(0.37, abs=1e-15)
    got = bound_corollary_kl(SIGMA_SQ, 2.7273, [I_HYPER] * 4)
    assert got.total == pytest.approx(C**2 / math.sqrt(2) * math.sqrt(0.14384 + 2.7273), abs=1e-5)
    assert got.total == pytest.approx(2.696, abs=5e-4)
    # the same first term through the closed form with the within-task term switched off (alpha = 0)
    closed = closed_form_bound_mean_estimation(C, 0.0, 6, 4, 2.7273 * 1.1 / 6, 1.1, "KL")
    assert closed.B == 0.0
    assert got.total == pytest.approx(closed.total, abs=1e-12)
    assert bound_corollary_kl(SIGMA_SQ, 2 * 2.7273, [I_HYPER] * 4).total > got.total
    assert got.variant is Variant.KL


def test_breakdown_invariants():
    for bd in (bound_corollary_kl(SIGMA_SQ, 1.0, [0.1, 0.3], 0.2),
               bound_corollary_js(SIGMA_SQ, 0.4, [0.1, 0.3], 0.2),
               bound_theorem1(SIGMA_SQ, [0.1, 0.3], [0.2, 0.1], [0.5, 0.4], 0.2)):
        assert abs(bd.total - (np.mean(bd.env_terms) + bd.B)) < 1e-12
        assert all(t >= 0 for t in bd.env_terms)
        assert bd.sigma_sq == bd.delta_sq == SIGMA_SQ


def test_js_bound_collapse():
    for eps in (0.01, 0.3, LOG2):
        got = bound_corollary_js(SIGMA_SQ, eps, [0.0] * 3, B=0.1)
        assert got.total == pytest.approx(2 * math.sqrt(2 * SIGMA_SQ * eps) + 0.1, abs=1e-14)


def test_js_bound_domain():
    with pytest.raises(ValidationError):
        bound_corollary_js(SIGMA_SQ, 0.8, [0.1])
    with pytest.raises(ValidationError):
        bound_corollary_js(SIGMA_SQ, -0.1, [0.1])


def test_negative_inputs_rejected():
    with pytest.raises(ValidationError):
        bound_corollary_kl(SIGMA_SQ, -1.0, [0.1])
    with pytest.raises(ValidationError):
        bound_corollary_kl(0.0, 1.0, [0.1])
    with pytest.raises(ValidationError):
        bound_corollary_kl(SIGMA_SQ, 1.0, [0.1], B=-0.5)
    with pytest.raises(ValidationError):
        bound_theorem1(SIGMA_SQ, [0.1], [-0.2], [0.1])
    with pytest.raises(ValidationError):
        bound_theorem1(SIGMA_SQ, [0.1, 0.2], [0.2], [0.1])
    with pytest.raises(ValidationError):
        b_term(-1.0, [0.1])


def test_slightly_negative_mi_is_clamped():
    assert bound_corollary_kl(SIGMA_SQ, 0.0, [-1e-4]).total == 0.0
    assert b_term(SIGMA_SQ, [-1e-3, 0.0]) == 0.0


@given(st.lists(st.tuples(nonneg, nonneg), min_size=100, max_size=100))
def test_concavity_inequality(pairs):
    for c_, d_ in pairs:
        assert math.sqrt(2 * SIGMA_SQ * c_) + math.sqrt(2 * SIGMA_SQ * d_) <= 2 * math.sqrt(SIGMA_SQ * (c_ + d_)) + 1e-9


@given(st.floats(0.01, 10), st.floats(0, 5), st.floats(0, 2), st.floats(0, 5), st.floats(0, 2))
def test_monotonicity(sigma_sq, eps, mi, b, bump):
    kl = bound_corollary_kl(sigma_sq, eps, [mi, mi / 2], b).total
    assert bound_corollary_kl(sigma_sq, eps + bump, [mi, mi / 2], b).total >= kl
    assert bound_corollary_kl(sigma_sq, eps, [mi + bump, mi / 2], b).total >= kl
    assert bound_corollary_kl(sigma_sq, eps, [mi, mi / 2], b + bump).total >= kl
    e_js = min(eps, LOG2) / 2
    js = bound_corollary_js(sigma_sq, e_js, [mi], b).total
    assert bound_corollary_js(sigma_sq, min(e_js + bump, LOG2), [mi], b).total >= js
    assert bound_corollary_js(sigma_sq, e_js, [mi + bump], b).total >= js
    t1 = bound_theorem1(sigma_sq, [mi], [eps], [eps], b).total
    assert bound_theorem1(sigma_sq, [mi], [eps + bump], [eps], b).total >= t1
    assert bound_theorem1(sigma_sq, [mi], [eps], [eps + bump], b).total >= t1
    assert bound_theorem1(sigma_sq, [mi + bump], [eps], [eps], b).total >= t1


@given(st.lists(st.floats(0, 3), min_size=1, max_size=10), st.floats(0, 5), st.floats(0, 1))
def test_general_bound_kl_choice_equals_corollary(mi, eps, b):
    test, train = np.zeros(len(mi)), np.full(len(mi), eps)
    t1 = bound_theorem1(SIGMA_SQ, mi, test, train, b)
    assert abs(t1.total - bound_corollary_kl(SIGMA_SQ, eps, mi, b).total) <= 1e-12


def test_general_bound_zero_terms():
    assert bound_theorem1(SIGMA_SQ, [0.0] * 3, [0.0] * 3, [0.0] * 3, 0.25).total == 0.25


def test_kl_auxiliary_terms():
    test, train = kl_auxiliary_terms(GaussianMean(0.0, 0.5, 1.1), 6, 4)
    np.testing.assert_array_equal(test, 0.0)
    np.testing.assert_allclose(train, 6 * 0.5 / 1.1, rtol=1e-15)


@given(st.lists(st.tuples(st.floats(0, 2), st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=6))
def test_mixture_relaxation_dominates_general_bound(rows):
    mi, test, train = (list(c) for c in zip(*rows))
    assert bound_mixture_relaxed(SIGMA_SQ, mi, test, train).total >= bound_theorem1(SIGMA_SQ, mi, test, train).total - 1e-12


def test_mixture_path_agrees_with_js_corollary():
    env = GaussianMean(0.0, 0.5, 1.1)
    B = b_term(SIGMA_SQ, [I_MODEL] * 6)
    rel = epsilon_js(env, 6, "monte_carlo", 100_000, substream(0, "js"))
    test, train, se = mixture_auxiliary_terms(env, 6, 4, 100_000, substream(0, "mixture"))
    cor = bound_corollary_js(SIGMA_SQ, rel.epsilon_js, [I_HYPER] * 4, B)
    mix = bound_mixture_relaxed(SIGMA_SQ, [I_HYPER] * 4, test, train, B)
    # standard error of the JS estimates carried through the bound's slope in epsilon
    slope = 2 * SIGMA_SQ / math.sqrt(SIGMA_SQ * (I_HYPER + 2 * rel.epsilon_js))
    bound_se = slope * math.hypot(rel.std_err, se)
    assert abs(mix.total - cor.total) < 3 * bound_se
    t1 = bound_theorem1(SIGMA_SQ, [I_HYPER] * 4, test, train, B)
    assert t1.total <= cor.total + 3 * bound_se


def test_b_term():
    assert b_term(SIGMA_SQ, [0.0] * 6) == 0.0
    closed = mi_model_sample_closed_form(0.5, 6, 4).nats
    assert abs(b_term(SIGMA_SQ, [closed] * 6) - math.sqrt(2 * SIGMA_SQ * closed)) < 1e-12
    # sqrt(2 * 1.265625 * 0.5 ln(15/13)), evaluated separately
    assert b_term(SIGMA_SQ, [closed] * 6) == pytest.approx(0.42557256165397583, abs=1e-12)


def test_closed_form_mean_estimation_golden():
    kl = closed_form_bound_mean_estimation(C, 0.5, 6, 4, 0.5, 1.1, "KL")
    js = closed_form_bound_mean_estimation(C, 0.5, 6, 4, 0.5, 1.1, "JS")
    # both terms evaluated with plain math
    eps = 6 * 0.5 / 1.1
    first = C**2 / math.sqrt(2) * math.sqrt(I_HYPER + eps)
    second = math.sqrt(2 * SIGMA_SQ * I_MODEL)
    assert kl.total == pytest.approx(first + second, abs=1e-12)
    assert kl.total == pytest.approx(3.121403920225182, abs=1e-12)
    assert js.total == pytest.approx(2 * math.sqrt(SIGMA_SQ * (I_HYPER + 2 * LOG2)) + second, abs=1e-12)
    assert js.total == pytest.approx(3.2087920012711644, abs=1e-12)
    assert kl.variant is Variant.MEAN_ESTIMATION and kl.extra["divergence"] == "KL"


def test_closed_form_matches_assembled_bounds():
    for alpha, m, N, nb in [(0.5, 6, 4, 0.5), (0.2, 10, 3, 0.1), (0.9, 2, 7, 2.0)]:
        eps = m * nb / 1.1
        B = b_term(SIGMA_SQ, [mi_model_sample_closed_form(alpha, m, N).nats] * m)
        mi = [mi_hyper_dataset_closed_form(N).nats] * N
        closed = closed_form_bound_mean_estimation(C, alpha, m, N, nb, 1.1, "KL").total
        assert abs(closed - bound_corollary_kl(SIGMA_SQ, eps, mi, B).total) < 1e-12
        closed_js = closed_form_bound_mean_estimation(C, alpha, m, N, nb, 1.1, "JS").total
        assert abs(closed_js - bound_corollary_js(SIGMA_SQ, min(LOG2, eps / 2), mi, B).total) < 1e-12


def test_closed_form_limits():
    eps = 6 * 0.5 / 1.1
    n = 10**6
    assert closed_form_bound_mean_estimation(C, 0.5, n, n, 0.0, 1.1).total < 5e-3
    got = closed_form_bound_mean_estimation(1.0, 0.5, n, n, eps * 1.1 / n, 1.1).total
    assert abs(got - math.sqrt(eps) / math.sqrt(2)) < 1e-3


@given(st.integers(2, 200), st.integers(1, 200), st.floats(0.01, 3), st.floats(0.1, 2), st.floats(0, 1))
def test_closed_form_never_vanishes(N, m, nb, nu_sq, alpha):
    if alpha == 1.0 and m == 1:
        return
    got = closed_form_bound_mean_estimation(C, alpha, m, N, nb, nu_sq, "KL").total
    assert got >= C**2 * math.sqrt(m * nb / nu_sq) / math.sqrt(2) - 1e-12


def test_closed_form_errors():
    with pytest.raises(ValidationError):
        closed_form_bound_mean_estimation(C, 1.0, 1, 4, 0.5, 1.1)
    with pytest.raises(ValidationError):
        closed_form_bound_mean_estimation(C, 0.5, 6, 1, 0.5, 1.1)
    with pytest.raises(ValidationError):
        closed_form_bound_mean_estimation(C, 0.5, 6, 4, 0.5, 1.1, "TV")


def test_default_scenario_bound_golden():
    kl, js = scenario_bounds(ScenarioConfig())
    assert np.isfinite(js.total)
    assert js.total == 2.5417447071106682
    assert kl.total == 3.1784419620206616
