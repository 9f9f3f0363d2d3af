"""Task environments: task and dataset sampling, KL/JS relatedness.

Two environment families are supported:

* ``GaussianMean`` -- tasks are means ``tau ~ N(mu_bar, nu_bar_sq)`` and a
  task's samples are ``z ~ N(tau, nu_sq)``.
* ``LinearRegression`` -- tasks are weight vectors ``w_bar ~ N(mu_w,
  nu_bar_sq I_d)``; samples are pairs ``(x, y)`` with ``x`` uniform on the
  unit sphere and ``y | x ~ N(w_bar' x, nu_sq)``.

Every random operation takes its generator explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Union

import numpy as np

from ._validation import ValidationError, as_generator

LOG2 = float(np.log(2.0))


@dataclass(frozen=True)
class GaussianMean:
    mu_bar: float = 0.0
    nu_bar_sq: float = 1.0
    nu_sq: float = 1.1

    def __post_init__(self):
        _check_variances(self.nu_bar_sq, self.nu_sq)
        if not np.isfinite(self.mu_bar):
            raise ValidationError("environment.mu_bar must be finite")

    @property
    def dim(self) -> int:
        return 1

    @property
    def center(self) -> np.ndarray:
        return np.array([float(self.mu_bar)])


@dataclass(frozen=True)
class LinearRegression:
    mu_w: tuple = (2.0, 3.0)
    nu_bar_sq: float = 1.0
    nu_sq: float = 1.1

    def __post_init__(self):
        mu = tuple(float(v) for v in np.atleast_1d(np.asarray(self.mu_w, dtype=float)))
        object.__setattr__(self, "mu_w", mu)
        _check_variances(self.nu_bar_sq, self.nu_sq)
        if not 1 <= len(mu) <= 16:
            raise ValidationError(f"environment.mu_w must have 1..16 entries, got {len(mu)}")
        if not np.all(np.isfinite(mu)):
            raise ValidationError("environment.mu_w must be finite")

    @property
    def d(self) -> int:
        return len(self.mu_w)

    @property
    def dim(self) -> int:
        return self.d

    @property
    def center(self) -> np.ndarray:
        return np.array(self.mu_w)


EnvironmentSpec = Union[GaussianMean, LinearRegression]


def _check_variances(nu_bar_sq, nu_sq):
    if not (np.isfinite(nu_bar_sq) and nu_bar_sq >= 0):
        raise ValidationError(f"environment.nu_bar_sq must be >= 0, got {nu_bar_sq}")
    if not (np.isfinite(nu_sq) and nu_sq > 0):
        raise ValidationError(f"environment.nu_sq must be > 0, got {nu_sq}")


@dataclass(frozen=True)
class Task:
    """A task: ``params`` is ``[tau]`` for mean estimation, ``w_bar`` otherwise."""

    params: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "params", np.atleast_1d(np.asarray(self.params, dtype=float)))

    @property
    def tau(self) -> float:
        if self.params.shape != (1,):
            raise AttributeError("tau is only defined for scalar-mean tasks")
        return float(self.params[0])

    @property
    def w_bar(self) -> np.ndarray:
        return self.params


@dataclass
class Dataset:
    """Samples of one task, or a batch of them (leading axes are batch axes).

    Scalar samples live in ``z`` with shape ``(..., m)``; regression samples in
    ``x`` with shape ``(..., m, d)`` and ``y`` with shape ``(..., m)``.
    """

    z: np.ndarray | None = None
    x: np.ndarray | None = None
    y: np.ndarray | None = None

    def __post_init__(self):
        if (self.z is None) == (self.y is None) or (self.x is None) != (self.y is None):
            raise ValidationError("a dataset holds either z, or both x and y")
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=float)
        else:
            self.x = np.asarray(self.x, dtype=float)
            self.y = np.asarray(self.y, dtype=float)
            if self.x.shape[:-1] != self.y.shape:
                raise ValidationError(f"x shape {self.x.shape} does not match y shape {self.y.shape}")
        if self.m < 1:
            raise ValidationError("a dataset needs at least one sample")

    @property
    def is_regression(self) -> bool:
        return self.z is None

    @property
    def m(self) -> int:
        return (self.z if self.z is not None else self.y).shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return (self.z if self.z is not None else self.y).shape[:-1]

    def __getitem__(self, idx) -> "Dataset":
        if self.z is not None:
            return Dataset(z=self.z[idx])
        return Dataset(x=self.x[idx], y=self.y[idx])

    def sample_means(self) -> np.ndarray:
        return self.z.mean(axis=-1)


@dataclass
class MetaDataset:
    tasks: list
    datasets: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.tasks) != len(self.datasets):
            raise ValidationError("tasks and datasets must be aligned")
        if len({d.m for d in self.datasets}) > 1:
            raise ValidationError("all datasets of a meta-dataset must share m")

    @property
    def N(self) -> int:
        return len(self.datasets)

    def stacked(self) -> Dataset:
        if self.datasets[0].is_regression:
            return Dataset(x=np.stack([d.x for d in self.datasets]), y=np.stack([d.y for d in self.datasets]))
        return Dataset(z=np.stack([d.z for d in self.datasets]))


class Method(str, Enum):
    CLOSED_FORM = "closed_form"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class RelatednessReport:
    epsilon_kl: float
    epsilon_js: float
    method: Method
    std_err: float = 0.0


# -- array-level samplers (batched, used by the simulation engines) ----------

def draw_task_params(env: EnvironmentSpec, rng, size=()) -> np.ndarray:
    """Task parameters with shape ``size + (dim,)``.

    Always consumes the same number of normals regardless of ``nu_bar_sq`` so
    that sweeps over the task variance share random numbers.
    """
    rng = as_generator(rng)
    size = tuple(np.atleast_1d(size)) if size != () else ()
    g = rng.standard_normal(size + (env.dim,))
    return env.center + np.sqrt(env.nu_bar_sq) * g


def unit_sphere(rng, size, d) -> np.ndarray:
    g = rng.standard_normal(tuple(size) + (d,))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def draw_data(env: EnvironmentSpec, params: np.ndarray, m: int, rng) -> Dataset:
    """``m`` samples for each task in the batch ``params`` of shape ``(..., dim)``."""
    rng = as_generator(rng)
    params = np.asarray(params, dtype=float)
    batch = params.shape[:-1]
    sd = np.sqrt(env.nu_sq)
    if isinstance(env, GaussianMean):
        return Dataset(z=params[..., :1] + sd * rng.standard_normal(batch + (m,)))
    x = unit_sphere(rng, batch + (m,), env.d)
    y = np.einsum("...md,...d->...m", x, params) + sd * rng.standard_normal(batch + (m,))
    return Dataset(x=x, y=y)


# -- public operations --------------------------------------------------------

def _check_task(env, task: Task):
    if task.params.shape != (env.dim,):
        raise ValidationError(
            f"task of dimension {task.params.shape[0]} does not match environment dimension {env.dim}"
        )


def sample_task(env: EnvironmentSpec, rng=None) -> Task:
    return Task(draw_task_params(env, as_generator(rng)))


def sample_dataset(env: EnvironmentSpec, task: Task, m: int, rng=None) -> Dataset:
    _check_task(env, task)
    if m < 1:
        raise ValidationError("m must be >= 1")
    return draw_data(env, task.params, int(m), as_generator(rng))


def _second_moment_scale(env) -> float:
    # E[x x'] = I/d for x uniform on the unit sphere; z is "x = 1" in the scalar case
    return 1.0 if isinstance(env, GaussianMean) else 1.0 / env.d


def kl_dataset_distributions(env: EnvironmentSpec, tau: Task, tau_prime: Task, m: int) -> float:
    """KL(P_{S|tau} || P_{S|tau'}) for datasets of ``m`` i.i.d. samples."""
    _check_task(env, tau)
    _check_task(env, tau_prime)
    diff = tau.params - tau_prime.params
    return float(m * _second_moment_scale(env) * diff @ diff / (2.0 * env.nu_sq))


def epsilon_kl(env: EnvironmentSpec, m: int) -> float:
    """Expected dataset-level KL between two independent tasks, ``m nu_bar^2 / nu^2``."""
    return m * env.nu_bar_sq / env.nu_sq


def kl_task_pairs_mc(env: EnvironmentSpec, m: int, trials: int, rng=None) -> tuple[float, float]:
    """Monte Carlo mean and standard error of KL over independent task pairs."""
    rng = as_generator(rng)
    a = draw_task_params(env, rng, trials)
    b = draw_task_params(env, rng, trials)
    diff = a - b
    kl = m * _second_moment_scale(env) * np.einsum("nd,nd->n", diff, diff) / (2.0 * env.nu_sq)
    return float(kl.mean()), float(kl.std(ddof=1) / np.sqrt(trials))


def _log_ratio(env, data: Dataset, p_params, q_params) -> np.ndarray:
    """log p(S)/q(S) for per-trial task parameters; the feature marginal cancels."""
    if data.is_regression:
        mp = np.einsum("...md,...d->...m", data.x, p_params)
        mq = np.einsum("...md,...d->...m", data.x, q_params)
        obs = data.y
    else:
        mp, mq, obs = p_params[..., :1], q_params[..., :1], data.z
    return ((obs - mq) ** 2 - (obs - mp) ** 2).sum(axis=-1) / (2.0 * env.nu_sq)


def mixture_divergence_samples(env: EnvironmentSpec, m: int, trials: int, rng=None, chunk: int = 20000):
    """Per-trial single-sample estimates of KL(P_T || M) and KL(P_T' || M).

    ``M = (P_{S|T} + P_{S|T'})/2`` for independent tasks ``T, T'``. Each
    estimate is ``log 2 - softplus(-log-ratio)`` evaluated at one dataset
    drawn from the respective task. Returns two arrays of length ``trials``.
    """
    rng = as_generator(rng)
    out_p, out_q = [], []
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        tp = draw_task_params(env, rng, n)
        tq = draw_task_params(env, rng, n)
        sp = draw_data(env, tp, m, rng)
        sq = draw_data(env, tq, m, rng)
        r_p = _log_ratio(env, sp, tp, tq)
        r_q = _log_ratio(env, sq, tp, tq)
        out_p.append(LOG2 - np.logaddexp(0.0, -r_p))
        out_q.append(LOG2 - np.logaddexp(0.0, r_q))
        done += n
    return np.concatenate(out_p), np.concatenate(out_q)


def epsilon_js(env: EnvironmentSpec, m: int, mode: str = "lemma1", trials: int = 100_000, rng=None) -> RelatednessReport:
    """JS relatedness of the environment.

    ``mode="lemma1"`` returns ``min(log 2, eps_kl / 2)``; ``mode="monte_carlo"``
    estimates ``E[D_JS(P_{S|T} || P_{S|T'})]`` with exact density ratios.
    """
    eps = epsilon_kl(env, m)
    mode = str(getattr(mode, "value", mode)).lower()
    if mode in ("lemma1", "closed_form"):
        return RelatednessReport(eps, min(LOG2, eps / 2.0), Method.CLOSED_FORM, 0.0)
    if mode != "monte_carlo":
        raise ValidationError(f"unknown epsilon_js mode {mode!r}")
    if trials < 2:
        raise ValidationError("monte_carlo mode needs at least 2 trials")
    a, b = mixture_divergence_samples(env, m, trials, rng)
    js = 0.5 * (a + b)
    est = float(np.clip(js.mean(), 0.0, LOG2))
    return RelatednessReport(eps, est, Method.MONTE_CARLO, float(js.std(ddof=1) / np.sqrt(trials)))


def to_dict(env: EnvironmentSpec) -> dict:
    if isinstance(env, GaussianMean):
        return {"kind": "gaussian_mean", "mu_bar": env.mu_bar, "nu_bar_sq": env.nu_bar_sq, "nu_sq": env.nu_sq}
    return {"kind": "linear_regression", "mu_w": list(env.mu_w), "nu_bar_sq": env.nu_bar_sq, "nu_sq": env.nu_sq}


def from_dict(d: dict) -> EnvironmentSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "gaussian_mean":
        cls = GaussianMean
    elif kind == "linear_regression":
        cls = LinearRegression
        if "d" in d:
            dim = d.pop("d")
            if "mu_w" not in d:
                d["mu_w"] = (0.0,) * int(dim)
            elif len(d["mu_w"]) != dim:
                raise ValidationError(f"environment.d={dim} does not match len(mu_w)={len(d['mu_w'])}")
    else:
        raise ValidationError(f"environment.kind must be 'gaussian_mean' or 'linear_regression', got {kind!r}")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise ValidationError(f"unknown environment key(s): {', '.join(sorted(unknown))}")
    return cls(**d)


def stack_tasks(tasks: Sequence[Task]) -> np.ndarray:
    return np.stack([t.params for t in tasks])
