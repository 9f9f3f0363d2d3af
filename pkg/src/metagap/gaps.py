"""Monte Carlo estimation of meta-generalization gaps.

The estimators are nested: outer trials draw a meta-test task and ``N``
meta-training tasks, inner trials draw the meta-training datasets and one
meta-test dataset. Each outer trial owns a random sub-stream spawned from
the budget seed, so runs that share a seed share their random numbers
(common random numbers across parameter sweeps) and results do not depend on
evaluation order.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._validation import ValidationError, as_generator, check_int
from .env import Task, draw_data, draw_task_params, stack_tasks
from .learn import (
    LossSpec,
    check_compatible,
    fit_base_batch,
    fit_meta_batch,
    population_loss_batch,
    training_loss_batch,
)


class Metric(str, Enum):
    ABS_AVG = "abs_avg"
    AVG_ABS = "avg_abs"
    PER_TASK = "per_task"
    WITHIN_TASK = "within_task"
    ENV_LEVEL = "env_level"


@dataclass(frozen=True)
class MCBudget:
    """Monte Carlo budget.

    outer_trials
        Task tuples ``(T, T_1..T_N)``.
    inner_trials
        Meta-training datasets per tuple, each paired with one fresh dataset
        of the meta-test task.
    test_samples
        Test draws per model when a population loss has no closed form; also
        the number of fresh datasets in :func:`meta_population_loss`.
    """

    outer_trials: int = 2000
    inner_trials: int = 50
    test_samples: int = 2000
    seed: int = 0

    def __post_init__(self):
        for name in ("outer_trials", "inner_trials", "test_samples"):
            check_int(f"budget.{name}", getattr(self, name))
        check_int("budget.seed", self.seed, minimum=0)


@dataclass(frozen=True)
class GapEstimate:
    mean: float
    std_err: float
    trials: int
    metric: Metric

    @classmethod
    def from_samples(cls, samples, metric: Metric) -> "GapEstimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        se = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(float(samples.mean()), se, n, Metric(metric))

    def as_row(self) -> dict:
        return {"metric": self.metric.value, "mean": self.mean, "std_err": self.std_err, "trials": self.trials}


@dataclass(frozen=True)
class GapDecomposition:
    within: GapEstimate
    env_level: GapEstimate
    total: GapEstimate
    within_samples: np.ndarray
    env_level_samples: np.ndarray
    total_samples: np.ndarray


def _seed_sequence(budget: MCBudget, rng) -> np.random.SeedSequence:
    if rng is None:
        return np.random.SeedSequence(budget.seed)
    if isinstance(rng, (int, np.integer)):
        return np.random.SeedSequence(int(rng))
    return np.random.SeedSequence(int(as_generator(rng).integers(2**63)))


def meta_training_loss_batch(u, data, base, loss_spec: LossSpec) -> np.ndarray:
    """Average per-task training loss; ``data`` has the task axis second to last."""
    u = np.asarray(u, dtype=float)
    w = fit_base_batch(base, data, u[..., None, :])
    return training_loss_batch(w, data, loss_spec).mean(axis=-1)


def meta_training_loss(u, meta, base, loss_spec: LossSpec) -> float:
    return float(meta_training_loss_batch(np.atleast_1d(u), meta.stacked(), base, loss_spec))


def meta_population_loss(u, task: Task, env, base, loss_spec: LossSpec, m: int, budget: MCBudget = MCBudget(), rng=None) -> GapEstimate:
    """Average population loss of the base-learner trained on fresh data of ``task``."""
    rng = as_generator(budget.seed if rng is None else rng)
    n = budget.test_samples
    data = draw_data(env, np.broadcast_to(task.params, (n, env.dim)), m, rng)
    w = fit_base_batch(base, data, np.atleast_1d(u))
    vals = population_loss_batch(w, task.params, env, loss_spec, "auto", budget.test_samples, rng)
    return GapEstimate.from_samples(vals, Metric.PER_TASK)


def _inner_gaps(env, base, meta_spec, loss_spec, tau_params, train_params, m, budget, rng) -> np.ndarray:
    """Gap samples ``L_g(U|tau) - L_t(U|S_1..S_N)`` for ``inner_trials`` draws."""
    R = budget.inner_trials
    train = draw_data(env, np.broadcast_to(train_params, (R,) + train_params.shape), m, rng)
    U = fit_meta_batch(meta_spec, base, train)
    lt = meta_training_loss_batch(U, train, base, loss_spec)
    test = draw_data(env, np.broadcast_to(tau_params, (R, env.dim)), m, rng)
    w = fit_base_batch(base, test, U)
    lg = population_loss_batch(w, tau_params, env, loss_spec, "auto", budget.test_samples, rng)
    return lg - lt


def per_task_gap(task: Task, tasks_train, env, base, meta_spec, loss_spec: LossSpec, m: int,
                 budget: MCBudget = MCBudget(), rng=None) -> GapEstimate:
    """Average meta-generalization gap for fixed meta-test and meta-training tasks."""
    check_compatible(env, base, meta_spec)
    rng = as_generator(budget.seed if rng is None else rng)
    samples = _inner_gaps(env, base, meta_spec, loss_spec, task.params, stack_tasks(tasks_train), m, budget, rng)
    return GapEstimate.from_samples(samples, Metric.PER_TASK)


def tuple_gaps(env, base, meta_spec, loss_spec: LossSpec, N: int, m: int, budget: MCBudget = MCBudget(), rng=None) -> np.ndarray:
    """Per-tuple gap estimates, one entry per outer trial."""
    check_compatible(env, base, meta_spec)
    check_int("N", N)
    check_int("m", m)
    children = _seed_sequence(budget, rng).spawn(budget.outer_trials)
    out = np.empty(budget.outer_trials)
    for o, child in enumerate(children):
        g = np.random.default_rng(child)
        tau = draw_task_params(env, g)
        train = draw_task_params(env, g, N)
        out[o] = _inner_gaps(env, base, meta_spec, loss_spec, tau, train, m, budget, g).mean()
    return out


def gap_metrics(env, base, meta_spec, loss_spec, N, m, budget=MCBudget(), rng=None) -> tuple[GapEstimate, GapEstimate]:
    """``(abs_avg, avg_abs)`` computed from the same per-tuple draws."""
    per_tuple = tuple_gaps(env, base, meta_spec, loss_spec, N, m, budget, rng)
    return _abs_avg(per_tuple), _avg_abs(per_tuple)


def _abs_avg(per_tuple) -> GapEstimate:
    return GapEstimate.from_samples(np.abs(per_tuple), Metric.ABS_AVG)


def _avg_abs(per_tuple) -> GapEstimate:
    est = GapEstimate.from_samples(per_tuple, Metric.AVG_ABS)
    return GapEstimate(abs(est.mean), est.std_err, est.trials, Metric.AVG_ABS)


def abs_avg_gap(env, base, meta_spec, loss_spec, N, m, budget=MCBudget(), rng=None) -> GapEstimate:
    """Average over task tuples of the absolute per-tuple gap."""
    return _abs_avg(tuple_gaps(env, base, meta_spec, loss_spec, N, m, budget, rng))


def avg_abs_gap(env, base, meta_spec, loss_spec, N, m, budget=MCBudget(), rng=None) -> GapEstimate:
    """Absolute value of the gap averaged over task tuples."""
    return _avg_abs(tuple_gaps(env, base, meta_spec, loss_spec, N, m, budget, rng))


def gap_decomposition(u, task: Task, tasks_train, env, base, loss_spec: LossSpec, m: int,
                      budget: MCBudget = MCBudget(), rng=None) -> GapDecomposition:
    """Split the gap of a fixed hyperparameter into within-task and environment-level parts.

    Per inner trial, with ``W`` trained on a fresh meta-test dataset ``S``:
    within = ``L_g(W|tau) - L_t(W|S)`` and env-level = ``L_t(W|S) - L_t(u|S_1..S_N)``,
    so both parts sum to the total gap sample by sample.
    """
    if len(tasks_train) < 1:
        raise ValidationError("need at least one meta-training task")
    rng = as_generator(budget.seed if rng is None else rng)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    R = budget.inner_trials
    train_params = stack_tasks(tasks_train)
    train = draw_data(env, np.broadcast_to(train_params, (R,) + train_params.shape), m, rng)
    lt = meta_training_loss_batch(np.broadcast_to(u, (R, env.dim)), train, base, loss_spec)
    test = draw_data(env, np.broadcast_to(task.params, (R, env.dim)), m, rng)
    w = fit_base_batch(base, test, u)
    lg = population_loss_batch(w, task.params, env, loss_spec, "auto", budget.test_samples, rng)
    lgt = training_loss_batch(w, test, loss_spec)
    within, env_level, total = lg - lgt, lgt - lt, lg - lt
    return GapDecomposition(
        GapEstimate.from_samples(within, Metric.WITHIN_TASK),
        GapEstimate.from_samples(env_level, Metric.ENV_LEVEL),
        GapEstimate.from_samples(total, Metric.PER_TASK),
        within, env_level, total,
    )
