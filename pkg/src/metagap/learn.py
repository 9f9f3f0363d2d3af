"""Truncated squared loss, base-learners and meta-learners.

All fitting routines are deterministic and vectorised over leading batch
axes: a ``Dataset`` with batch shape ``B`` and a bias of shape ``B + (dim,)``
produce model parameters of shape ``B + (dim,)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from ._validation import ValidationError, as_generator, check_positive
from .env import Dataset, GaussianMean, LinearRegression, MetaDataset, Task, draw_data

COND_LIMIT = 1e12
# Nodes of the periodic trapezoid rule over the half circle (the integrand is
# even under x -> -x); converges geometrically for the smooth integrand.
CIRCLE_NODES = 48


@dataclass(frozen=True)
class LossSpec:
    """``l(w, z) = min((w - z)^2, c^2)``; bounded in ``[0, c^2]``."""

    c: float = 1.5

    def __post_init__(self):
        check_positive("loss.c", self.c)

    @property
    def sigma_sq(self) -> float:
        # sub-Gaussian parameter of a loss bounded in [0, c^2]
        return self.c**4 / 4.0

    @property
    def delta_sq(self) -> float:
        return self.c**4 / 4.0

    def __call__(self, residual):
        return np.minimum(np.square(residual), self.c**2)


@dataclass(frozen=True)
class ConvexCombination:
    """``W = alpha * mean(S) + (1 - alpha) * u``."""

    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"base.alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class Ridge:
    """Ridge regression biased towards ``u`` with strength ``lam``."""

    lam: float = 2.0

    def __post_init__(self):
        check_positive("base.lam", self.lam)


@dataclass(frozen=True)
class DatasetMean:
    """Bias = average of the per-dataset sample means."""


@dataclass(frozen=True)
class RidgeBiasClosedForm:
    """Bias minimising the average untruncated training loss of the ridge base-learner."""


@dataclass(frozen=True)
class FixedBias:
    """Data-independent meta-learner that always returns ``u``."""

    u: tuple = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(float(v) for v in np.atleast_1d(self.u)))


BaseLearnerSpec = Union[ConvexCombination, Ridge]
MetaLearnerSpec = Union[DatasetMean, RidgeBiasClosedForm, FixedBias]


def check_compatible(env, base, meta=None):
    if isinstance(base, ConvexCombination) and not isinstance(env, GaussianMean):
        raise ValidationError("the convex-combination base-learner needs a gaussian_mean environment")
    if isinstance(base, Ridge) and not isinstance(env, LinearRegression):
        raise ValidationError("the ridge base-learner needs a linear_regression environment")
    if isinstance(meta, DatasetMean) and not isinstance(base, ConvexCombination):
        raise ValidationError("the dataset-mean meta-learner pairs with the convex-combination base-learner")
    if isinstance(meta, RidgeBiasClosedForm) and not isinstance(base, Ridge):
        raise ValidationError("the ridge-bias meta-learner pairs with the ridge base-learner")
    if isinstance(meta, FixedBias) and len(meta.u) != env.dim:
        raise ValidationError(f"meta.u has {len(meta.u)} entries, environment dimension is {env.dim}")


# -- losses -------------------------------------------------------------------

def residuals(w, data: Dataset) -> np.ndarray:
    """Prediction residuals with shape ``batch + (m,)``."""
    w = np.asarray(w, dtype=float)
    if data.is_regression:
        if w.shape[-1] != data.x.shape[-1]:
            raise ValidationError(f"model dimension {w.shape[-1]} != feature dimension {data.x.shape[-1]}")
        return np.einsum("...md,...d->...m", data.x, w) - data.y
    if w.shape[-1] != 1:
        raise ValidationError(f"scalar samples need a 1-dimensional model, got {w.shape[-1]}")
    return w[..., :1] - data.z


def loss(w, z, spec: LossSpec) -> float:
    """Loss of model ``w`` on one sample: a scalar ``z`` or a pair ``(x, y)``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if isinstance(z, tuple):
        x, y = z
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != w.shape:
            raise ValidationError(f"model dimension {w.shape} != feature dimension {x.shape}")
        return float(spec(w @ x - y))
    if w.shape != (1,):
        raise ValidationError("scalar samples need a 1-dimensional model")
    return float(spec(w[0] - float(z)))


def training_loss_batch(w, data: Dataset, spec: LossSpec) -> np.ndarray:
    return spec(residuals(w, data)).mean(axis=-1)


def training_loss(w, S: Dataset, spec: LossSpec) -> float:
    return float(training_loss_batch(np.atleast_1d(w), S, spec))


def expected_truncated_square(mean, var, c) -> np.ndarray:
    """``E[min(D^2, c^2)]`` for ``D ~ N(mean, var)``, elementwise."""
    mean = np.asarray(mean, dtype=float)
    s = np.sqrt(var)
    a = (-c - mean) / s
    b = (c - mean) / s
    pa, pb = np.exp(-0.5 * a * a) / np.sqrt(2 * np.pi), np.exp(-0.5 * b * b) / np.sqrt(2 * np.pi)
    inside = special.ndtr(b) - special.ndtr(a)
    outside = special.ndtr(a) + special.ndtr(-b)
    second = mean**2 * inside + 2 * mean * s * (pa - pb) + var * (inside + a * pa - b * pb)
    return second + c**2 * outside


def _circle_directions(k=CIRCLE_NODES):
    theta = np.pi * (np.arange(k) + 0.5) / k
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def has_closed_form_population_loss(env) -> bool:
    return isinstance(env, GaussianMean) or env.d == 2


def population_loss_batch(w, task_params, env, spec: LossSpec, mode="auto", n_test=2000, rng=None) -> np.ndarray:
    """Population loss of models ``w`` (shape ``B + (dim,)``) on their tasks.

    ``closed_form`` is exact for scalar tasks and, for ``d = 2`` regression,
    integrates the scalar formula over the feature angle. ``monte_carlo``
    averages ``n_test`` fresh samples per model.
    """
    w = np.asarray(w, dtype=float)
    task_params = np.asarray(task_params, dtype=float)
    if mode == "auto":
        mode = "closed_form" if has_closed_form_population_loss(env) else "monte_carlo"
    if mode == "closed_form":
        if isinstance(env, GaussianMean):
            return expected_truncated_square(w[..., 0] - task_params[..., 0], env.nu_sq, spec.c)
        if env.d != 2:
            raise ValidationError("closed-form population loss is available for scalar tasks and d = 2 regression only")
        mu = (w - task_params) @ _circle_directions().T
        return expected_truncated_square(mu, env.nu_sq, spec.c).mean(axis=-1)
    if mode != "monte_carlo":
        raise ValidationError(f"unknown population-loss mode {mode!r}")
    rng = as_generator(rng)
    batch = np.broadcast_shapes(w.shape[:-1], task_params.shape[:-1])
    fresh = draw_data(env, np.broadcast_to(task_params, batch + (env.dim,)), n_test, rng)
    return training_loss_batch(np.broadcast_to(w, batch + (env.dim,)), fresh, spec)


def population_loss(w, task: Task, env, spec: LossSpec, mode="closed_form", n_test=100_000, rng=None) -> float:
    return float(population_loss_batch(np.atleast_1d(w), task.params, env, spec, mode, n_test, rng))


# -- base-learners ----------------------------------------------------------

def ridge_affine(x, y, lam):
    """Ridge solution as an affine map of the bias: ``W*(u) = p + Q u``.

    ``A = 2 X'X/m + lam I``, ``p = A^-1 (2 X'Y/m)``, ``Q = lam A^-1``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m, d = x.shape[-2:]
    A = 2.0 * np.einsum("...md,...me->...de", x, x) / m + lam * np.eye(d)
    A_inv = np.linalg.inv(A)
    p = np.einsum("...de,...e->...d", A_inv, 2.0 * np.einsum("...md,...m->...d", x, y) / m)
    return p, lam * A_inv


def fit_base_batch(spec: BaseLearnerSpec, data: Dataset, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if isinstance(spec, ConvexCombination):
        if data.is_regression:
            raise ValidationError("convex-combination base-learner needs scalar samples")
        return spec.alpha * data.z.mean(axis=-1, keepdims=True) + (1.0 - spec.alpha) * u
    if isinstance(spec, Ridge):
        if not data.is_regression:
            raise ValidationError("ridge base-learner needs (x, y) samples")
        p, Q = ridge_affine(data.x, data.y, spec.lam)
        return p + np.einsum("...de,...e->...d", Q, np.broadcast_to(u, p.shape))
    raise ValidationError(f"unknown base-learner {spec!r}")


def fit_base(spec: BaseLearnerSpec, S: Dataset, u) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return fit_base_batch(spec, S, u)


def ridge_objective(w, S: Dataset, u, lam) -> float:
    """Untruncated biased-ridge objective minimised by the base-learner."""
    r = residuals(np.asarray(w, dtype=float), S)
    diff = np.asarray(w, dtype=float) - np.asarray(u, dtype=float)
    return float(np.mean(r**2) + 0.5 * lam * diff @ diff)


# -- meta-learners ----------------------------------------------------------

def solve_normal_equations(H, g) -> np.ndarray:
    """Batched ``H u = g`` with minimum-norm least squares for ill-conditioned ``H``."""
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    d = g.shape[-1]
    Hf, gf = H.reshape(-1, d, d), g.reshape(-1, d)
    out = np.empty_like(gf)
    cond = np.linalg.cond(Hf)
    good = cond < COND_LIMIT
    if good.any():
        out[good] = np.linalg.solve(Hf[good], gf[good][..., None])[..., 0]
    for i in np.flatnonzero(~good):
        out[i] = np.linalg.lstsq(Hf[i], gf[i], rcond=None)[0]
    return out.reshape(g.shape)


def fit_meta_batch(spec: MetaLearnerSpec, base: BaseLearnerSpec, data: Dataset) -> np.ndarray:
    """Hyperparameters for a batch of meta-datasets (task axis is ``-2`` of ``z``/``y``)."""
    if isinstance(spec, FixedBias):
        return np.broadcast_to(np.array(spec.u), data.batch_shape[:-1] + (len(spec.u),)).copy()
    if isinstance(spec, DatasetMean):
        if not isinstance(base, ConvexCombination):
            raise ValidationError("dataset-mean meta-learner pairs with the convex-combination base-learner")
        return data.z.mean(axis=-1).mean(axis=-1)[..., None]
    if isinstance(spec, RidgeBiasClosedForm):
        if not isinstance(base, Ridge):
            raise ValidationError("ridge-bias meta-learner pairs with the ridge base-learner")
        x, y = data.x, data.y
        p, Q = ridge_affine(x, y, base.lam)
        M = np.einsum("...nmd,...nde->...nme", x, Q)
        r = y - np.einsum("...nmd,...nd->...nm", x, p)
        H = np.einsum("...nmd,...nme->...de", M, M)
        g = np.einsum("...nmd,...nm->...d", M, r)
        return solve_normal_equations(H, g)
    raise ValidationError(f"unknown meta-learner {spec!r}")


def fit_meta(spec: MetaLearnerSpec, meta: MetaDataset, base: BaseLearnerSpec) -> np.ndarray:
    return fit_meta_batch(spec, base, meta.stacked())


def ridge_meta_objective(u, meta: MetaDataset, lam) -> float:
    """Average untruncated training loss of the ridge base-learner fitted with bias ``u``."""
    total = 0.0
    for S in meta.datasets:
        w = fit_base(Ridge(lam), S, u)
        total += np.mean(residuals(w, S) ** 2)
    return float(total / meta.N)

