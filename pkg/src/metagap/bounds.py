"""Information-theoretic upper bounds on the average absolute meta-generalization gap."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._validation import ValidationError, check_nonnegative_array, check_positive
from .env import LOG2, epsilon_js, epsilon_kl, mixture_divergence_samples
from .info import mi_hyper_dataset_closed_form, mi_model_sample_closed_form


class Variant(str, Enum):
    THEOREM1 = "theorem1"
    KL = "corollary_kl"
    JS = "corollary_js"
    MEAN_ESTIMATION = "closed_form_mean_estimation"


@dataclass(frozen=True)
class BoundBreakdown:
    env_terms: tuple
    B: float
    epsilon: float
    sigma_sq: float
    delta_sq: float
    total: float
    variant: Variant
    extra: dict = field(default_factory=dict)

    @property
    def env_level(self) -> float:
        return float(np.mean(self.env_terms))

    def as_row(self) -> dict:
        return {"variant": self.variant.value, "total": self.total, "env_level": self.env_level, "B": self.B,
                "epsilon": self.epsilon, "sigma_sq": self.sigma_sq, "delta_sq": self.delta_sq}


def _root(x):
    # MI estimates may dip below zero; radicands are clamped at 0
    return np.sqrt(np.maximum(x, 0.0))


def _mi_terms(mi_terms):
    arr = np.asarray(mi_terms, dtype=float)
    if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ValidationError("mi_terms must be a non-empty sequence of finite reals")
    return np.maximum(arr, 0.0)


def _breakdown(terms, B, eps, sigma_sq, delta_sq, variant, **extra) -> BoundBreakdown:
    terms = tuple(float(t) for t in terms)
    total = float(np.mean(terms) + B)
    return BoundBreakdown(terms, float(B), float(eps), float(sigma_sq), float(delta_sq), total, variant, extra)


def bound_corollary_kl(sigma_sq, epsilon, mi_terms, B=0.0, delta_sq=None) -> BoundBreakdown:
    """``mean_i sqrt(2 sigma^2 (I_i + eps)) + B`` for an eps-KL related environment."""
    sigma_sq = check_positive("sigma_sq", sigma_sq)
    eps = check_positive("epsilon", epsilon, strict=False)
    B = check_positive("B", B, strict=False)
    terms = _root(2.0 * sigma_sq * (_mi_terms(mi_terms) + eps))
    return _breakdown(terms, B, eps, sigma_sq, sigma_sq if delta_sq is None else delta_sq, Variant.KL)


def bound_corollary_js(sigma_sq, epsilon_js, mi_terms, B=0.0, delta_sq=None) -> BoundBreakdown:
    """``(2/N) sum_i sqrt(sigma^2 (I_i + 2 eps)) + B`` for an eps-JS related environment.

    ``epsilon_js = 0`` (identical tasks) is accepted as the limit of the bound.
    """
    sigma_sq = check_positive("sigma_sq", sigma_sq)
    eps = float(epsilon_js)
    if not (0.0 <= eps <= LOG2 + 1e-12):
        raise ValidationError(f"epsilon_js must lie in [0, log 2], got {eps}")
    B = check_positive("B", B, strict=False)
    terms = 2.0 * _root(sigma_sq * (_mi_terms(mi_terms) + 2.0 * eps))
    return _breakdown(terms, B, eps, sigma_sq, sigma_sq if delta_sq is None else delta_sq, Variant.JS)


def bound_theorem1(sigma_sq, mi_terms, kl_test_terms, kl_train_terms, B=0.0, delta_sq=None) -> BoundBreakdown:
    """General bound for per-task auxiliary distributions ``R_i``.

    ``kl_test_terms[i]`` is ``E[KL(P_{S_i|T} || R_i)]`` and ``kl_train_terms[i]``
    is ``E[KL(P_{S_i|T_i} || R_i)]``; see :func:`kl_auxiliary_terms` and
    :func:`mixture_auxiliary_terms` for the two canonical choices of ``R_i``.
    """
    sigma_sq = check_positive("sigma_sq", sigma_sq)
    mi = _mi_terms(mi_terms)
    test = check_nonnegative_array("kl_test_terms", kl_test_terms)
    train = check_nonnegative_array("kl_train_terms", kl_train_terms)
    if not (len(mi) == len(test) == len(train)):
        raise ValidationError("mi_terms, kl_test_terms and kl_train_terms must have the same length")
    B = check_positive("B", B, strict=False)
    terms = _root(2.0 * sigma_sq * test) + _root(2.0 * sigma_sq * (mi + train))
    return _breakdown(terms, B, float(np.mean(train)), sigma_sq, sigma_sq if delta_sq is None else delta_sq,
                      Variant.THEOREM1)


def bound_mixture_relaxed(sigma_sq, mi_terms, kl_test_terms, kl_train_terms, B=0.0, delta_sq=None) -> BoundBreakdown:
    """Mixture-distribution terms of :func:`bound_theorem1` after ``sqrt(a) + sqrt(b) <= sqrt(2(a + b))``.

    Each term becomes ``2 sqrt(sigma^2 (I_i + KLtest_i + KLtrain_i))``. For the
    mixture choice ``(KLtest_i + KLtrain_i) / 2`` estimates the JS relatedness,
    so this is the JS corollary fed by the auxiliary terms.
    Never smaller than the unrelaxed :func:`bound_theorem1` value.
    """
    sigma_sq = check_positive("sigma_sq", sigma_sq)
    mi = _mi_terms(mi_terms)
    test = check_nonnegative_array("kl_test_terms", kl_test_terms)
    train = check_nonnegative_array("kl_train_terms", kl_train_terms)
    if not (len(mi) == len(test) == len(train)):
        raise ValidationError("mi_terms, kl_test_terms and kl_train_terms must have the same length")
    B = check_positive("B", B, strict=False)
    terms = 2.0 * _root(sigma_sq * (mi + test + train))
    return _breakdown(terms, B, float(np.mean(test + train) / 2.0), sigma_sq,
                      sigma_sq if delta_sq is None else delta_sq, Variant.JS, route="mixture")


def b_term(delta_sq, mi_model_sample_terms) -> float:
    """Within-task term ``(1/m) sum_j sqrt(2 delta^2 I_j)``."""
    delta_sq = check_positive("delta_sq", delta_sq)
    mi = _mi_terms(mi_model_sample_terms)
    return float(np.mean(_root(2.0 * delta_sq * mi)))


def kl_auxiliary_terms(env, m, N):
    """Auxiliary terms for ``R_i = P_{S_i|T}``: zero test divergence, eps-KL train divergence."""
    eps = epsilon_kl(env, m)
    return np.zeros(N), np.full(N, eps)


def mixture_auxiliary_terms(env, m, N, trials=100_000, rng=None):
    """Auxiliary terms for the mixture ``R_i = (P_{S_i|T} + P_{S_i|T_i}) / 2``.

    Returns ``(kl_test_terms, kl_train_terms, std_err)`` where ``std_err`` is the
    standard error of their average (an estimate of the JS relatedness).
    """
    a, b = mixture_divergence_samples(env, m, trials, rng)
    test = float(np.clip(a.mean(), 0.0, LOG2 * 2))
    train = float(np.clip(b.mean(), 0.0, LOG2 * 2))
    se = float((0.5 * (a + b)).std(ddof=1) / np.sqrt(trials))
    return np.full(N, test), np.full(N, train), se


def closed_form_bound_mean_estimation(c, alpha, m, N, nu_bar_sq, nu_sq, variant="KL") -> BoundBreakdown:
    """Both bounds for Gaussian mean estimation with a meta-learned bias, in closed form."""
    c = check_positive("c", c)
    sigma_sq = c**4 / 4.0
    i_hyper = mi_hyper_dataset_closed_form(N).nats
    i_model = mi_model_sample_closed_form(alpha, m, N).nats
    eps_kl = m * check_positive("nu_bar_sq", nu_bar_sq, strict=False) / check_positive("nu_sq", nu_sq)
    B = float(np.sqrt(2.0 * sigma_sq * i_model))
    variant = str(variant).upper()
    if variant == "KL":
        terms = np.full(N, c**2 / np.sqrt(2.0) * np.sqrt(i_hyper + eps_kl))
        eps = eps_kl
    elif variant == "JS":
        eps = min(LOG2, eps_kl / 2.0)
        terms = np.full(N, 2.0 * np.sqrt(sigma_sq * (i_hyper + 2.0 * eps)))
    else:
        raise ValidationError(f"variant must be 'KL' or 'JS', got {variant!r}")
    return _breakdown(terms, B, eps, sigma_sq, sigma_sq, Variant.MEAN_ESTIMATION, divergence=variant)


def relatedness(env, m, js_mode="lemma1", js_trials=100_000, rng=None):
    """Convenience pair ``(eps_kl, RelatednessReport)``."""
    return epsilon_kl(env, m), epsilon_js(env, m, js_mode, js_trials, rng)
