"""Mutual information: closed forms for mean estimation, KSG and Gaussian plug-in estimators.

The pipeline estimators condition on task tuples: for each conditioning draw
they simulate many independent (output, data) pairs, estimate MI on them, and
average the per-tuple estimates (conditional MI is an expectation over the
conditioning variable).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from ._validation import ValidationError, as_generator, check_int
from .env import Dataset, GaussianMean, draw_data, draw_task_params, stack_tasks
from .learn import check_compatible, fit_base_batch, fit_meta_batch

JITTER = 1e-10
FOLDS = 4


@dataclass(frozen=True)
class MIEstimate:
    nats: float
    method: str
    n_samples: int = 0
    std_err: float = 0.0
    k: int | None = None
    regularized: bool = False

    def as_row(self) -> dict:
        return {"method": self.method, "k": self.k if self.k is not None else "", "n_samples": self.n_samples,
                "nats": self.nats, "std_err": self.std_err, "regularized": int(self.regularized)}


# -- closed forms (Gaussian mean estimation) ---------------------------------

def mi_hyper_dataset_closed_form(N: int) -> MIEstimate:
    """``I(U; S_i | T_1..T_N) = 0.5 log(N / (N - 1))`` for the dataset-mean meta-learner."""
    if N < 2:
        raise ValidationError("hyperparameter/dataset MI is infinite for N < 2")
    return MIEstimate(0.5 * np.log(N / (N - 1.0)), "closed_form")


def mi_model_sample_closed_form(alpha: float, m: int, N: int) -> MIEstimate:
    """``I(W; Z_j | T, T_1..T_N)`` for the convex-combination base-learner."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    check_int("m", m)
    check_int("N", N)
    num = alpha**2 + (1 - alpha) ** 2 / N
    den = alpha**2 * (m - 1) / m + (1 - alpha) ** 2 / N
    if den <= 0:
        raise ValidationError("model/sample MI is infinite (alpha = 1 with m = 1)")
    return MIEstimate(0.5 * np.log(num / den), "closed_form")


# -- estimators ---------------------------------------------------------------

def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _prepare(a, rng) -> np.ndarray:
    # unit scale per column, then break ties with tiny uniform jitter
    a = a - a.mean(axis=0)
    scale = a.std(axis=0)
    scale[scale == 0] = 1.0
    a = a / scale
    return a + JITTER * rng.uniform(-1.0, 1.0, size=a.shape)


def _ksg(x, y, k) -> float:
    n = len(x)
    joint = np.hstack([x, y])
    dist, _ = cKDTree(joint).query(joint, k=k + 1, p=np.inf)
    radius = np.nextafter(dist[:, -1], 0)
    nx = cKDTree(x).query_ball_point(x, radius, p=np.inf, return_length=True) - 1
    ny = cKDTree(y).query_ball_point(y, radius, p=np.inf, return_length=True) - 1
    return float(digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1)))


def ksg_mutual_information(xs, ys, k: int = 5, rng=0) -> MIEstimate:
    """Kraskov-Stoegbauer-Grassberger estimator (type 1, max-norm neighbourhoods).

    The standard error comes from the spread of estimates on 4 disjoint folds.
    """
    x, y = _as_2d(xs), _as_2d(ys)
    n = len(x)
    if len(y) != n:
        raise ValidationError(f"xs and ys differ in length ({n} vs {len(y)})")
    check_int("k", k)
    if n < k + 1:
        raise ValidationError(f"KSG needs at least k + 1 = {k + 1} points, got {n}")
    rng = as_generator(rng)
    x, y = _prepare(x, rng), _prepare(y, rng)
    est = _ksg(x, y, k)
    se = 0.0
    fold = n // FOLDS
    if fold >= k + 1:
        parts = [_ksg(x[i * fold:(i + 1) * fold], y[i * fold:(i + 1) * fold], k) for i in range(FOLDS)]
        se = float(np.std(parts, ddof=1) / np.sqrt(FOLDS))
    return MIEstimate(est, "ksg", n, se, k)


def gaussian_plugin_mi(xs, ys) -> MIEstimate:
    """MI of a Gaussian with the sample covariance of the joint data."""
    x, y = _as_2d(xs), _as_2d(ys)
    n, dx = x.shape
    dy = y.shape[1]
    if len(y) != n:
        raise ValidationError(f"xs and ys differ in length ({n} vs {len(y)})")
    if n <= dx + dy + 2:
        raise ValidationError(f"Gaussian plug-in needs more than {dx + dy + 2} samples, got {n}")
    cov = np.cov(np.hstack([x, y]), rowvar=False)
    regularized = False
    if np.linalg.cond(cov) > 1e12:
        cov = cov + 1e-10 * np.eye(dx + dy)
        regularized = True
    _, ld_joint = np.linalg.slogdet(cov)
    _, ld_x = np.linalg.slogdet(cov[:dx, :dx])
    _, ld_y = np.linalg.slogdet(cov[dx:, dx:])
    nats = 0.5 * (ld_x + ld_y - ld_joint)
    # large-sample approximation: squared-correlation term plus the null-case spread
    rho_sq = max(1.0 - np.exp(-2.0 * nats), 0.0)
    se = float(np.sqrt(rho_sq * min(dx, dy) / n + dx * dy / (2.0 * n * n)))
    return MIEstimate(float(nats), "gaussian_plugin", n, se, None, regularized)


def estimate_mi(xs, ys, estimator="ksg", k=5, rng=0) -> MIEstimate:
    if estimator == "ksg":
        return ksg_mutual_information(xs, ys, k, rng)
    if estimator in ("gaussian", "gaussian_plugin"):
        return gaussian_plugin_mi(xs, ys)
    raise ValidationError(f"unknown MI estimator {estimator!r}")


# -- pipeline estimators ---------------------------------------------------

def sufficient_statistic(data: Dataset) -> np.ndarray:
    """Statistic of one dataset through which the meta-learner sees it.

    Scalar samples: the sample mean. Regression: the entries of ``X'X`` on and
    above the diagonal, minus the last diagonal entry (``trace X'X = m`` for
    unit-norm features), followed by ``X'Y``.
    """
    if not data.is_regression:
        return data.z.mean(axis=-1)[..., None]
    x, y = data.x, data.y
    d = x.shape[-1]
    gram = np.einsum("...md,...me->...de", x, x)
    iu = np.triu_indices(d)
    keep = [(i, j) for i, j in zip(*iu) if not (i == j == d - 1)]
    upper = np.stack([gram[..., i, j] for i, j in keep], axis=-1) if keep else np.zeros(gram.shape[:-2] + (0,))
    return np.concatenate([upper, np.einsum("...md,...m->...d", x, y)], axis=-1)


def _combine(estimates, k, method) -> MIEstimate:
    nats = np.array([e.nats for e in estimates])
    n = sum(e.n_samples for e in estimates)
    if len(estimates) > 1:
        se = float(nats.std(ddof=1) / np.sqrt(len(nats)))
    else:
        se = estimates[0].std_err
    return MIEstimate(float(nats.mean()), method, n, se, k)


def mi_hyper_dataset_empirical(env, base, meta_spec, N: int, m: int, trials: int = 10_000, k: int = 5, rng=None,
                               tasks_train=None, n_tuples: int = 4, estimator: str = "ksg", raw: bool = False) -> MIEstimate:
    """Estimate ``I(U; S_1 | T_1..T_N)`` by simulating the meta-learner.

    ``S_1`` enters through :func:`sufficient_statistic` unless ``raw`` is set,
    in which case the flattened samples are used.
    """
    check_compatible(env, base, meta_spec)
    check_int("N", N)
    rng = as_generator(rng)
    fixed = None if tasks_train is None else stack_tasks(tasks_train)
    ests = []
    for _ in range(1 if fixed is not None else n_tuples):
        params = fixed if fixed is not None else draw_task_params(env, rng, N)
        data = draw_data(env, np.broadcast_to(params, (trials,) + params.shape), m, rng)
        U = fit_meta_batch(meta_spec, base, data)
        first = data[:, 0]
        if raw:
            phi = first.z if not first.is_regression else np.concatenate([first.x.reshape(trials, -1), first.y], axis=-1)
        else:
            phi = sufficient_statistic(first)
        ests.append(estimate_mi(U, phi, estimator, k, rng))
    return _combine(ests, k if estimator == "ksg" else None, ests[0].method)


def mi_model_sample_empirical(env, base, meta_spec, N: int, m: int, trials: int = 10_000, k: int = 5, rng=None,
                              tau=None, tasks_train=None, n_tuples: int = 4, estimator: str = "ksg", j: int = 0) -> MIEstimate:
    """Estimate ``I(W; Z_j | T = tau, T_1..T_N)`` through the full pipeline.

    With ``tau``/``tasks_train`` omitted, conditioning tasks are drawn
    ``n_tuples`` times and the per-tuple estimates averaged.
    """
    check_compatible(env, base, meta_spec)
    rng = as_generator(rng)
    if not 0 <= j < m:
        raise ValidationError(f"sample index j={j} outside 0..{m - 1}")
    fixed = tau is not None and tasks_train is not None
    if tasks_train is not None:
        N = len(tasks_train)
    ests = []
    for _ in range(1 if fixed else n_tuples):
        t_par = tau.params if tau is not None else draw_task_params(env, rng)
        tr_par = stack_tasks(tasks_train) if tasks_train is not None else draw_task_params(env, rng, N)
        train = draw_data(env, np.broadcast_to(tr_par, (trials,) + tr_par.shape), m, rng)
        U = fit_meta_batch(meta_spec, base, train)
        test = draw_data(env, np.broadcast_to(t_par, (trials, env.dim)), m, rng)
        W = fit_base_batch(base, test, U)
        if isinstance(env, GaussianMean):
            Z = test.z[:, j]
        else:
            Z = np.concatenate([test.x[:, j], test.y[:, j, None]], axis=-1)
        ests.append(estimate_mi(W, Z, estimator, k, rng))
    return _combine(ests, k if estimator == "ksg" else None, ests[0].method)
