"""End-to-end scenario runs: gaps, mutual information and bounds for one configuration or a sweep."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ._validation import ValidationError, substream
from .bounds import (
    b_term,
    bound_corollary_js,
    bound_corollary_kl,
    closed_form_bound_mean_estimation,
)
from .config import ScenarioConfig
from .env import GaussianMean, epsilon_js, epsilon_kl
from .gaps import gap_metrics
from .info import (
    MIEstimate,
    mi_hyper_dataset_closed_form,
    mi_hyper_dataset_empirical,
    mi_model_sample_closed_form,
    mi_model_sample_empirical,
)
from .learn import ConvexCombination, DatasetMean, FixedBias

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepRow:
    parameter: str
    swept_value: float
    abs_avg_gap: float
    abs_avg_gap_se: float
    avg_abs_gap: float
    avg_abs_gap_se: float
    bound_kl: float
    bound_js: float
    epsilon_kl: float
    epsilon_js: float
    epsilon_js_se: float
    B: float
    mi_hyper: float
    mi_model: float
    seed: int

    def as_dict(self) -> dict:
        return asdict(self)


COLUMNS = tuple(f.name for f in fields(SweepRow))


def _has_closed_form_mi(cfg: ScenarioConfig) -> bool:
    return (isinstance(cfg.environment, GaussianMean) and isinstance(cfg.base, ConvexCombination)
            and isinstance(cfg.meta, DatasetMean))


def scenario_information(cfg: ScenarioConfig) -> tuple[MIEstimate, MIEstimate]:
    """``(I(U; S_i | T_1..T_N), I(W; Z_j | T, T_1..T_N))`` for a scenario."""
    seed, est = cfg.budget.seed, cfg.estimators
    if _has_closed_form_mi(cfg):
        return mi_hyper_dataset_closed_form(cfg.N), mi_model_sample_closed_form(cfg.base.alpha, cfg.m, cfg.N)
    common = dict(trials=est.mi_trials, k=est.k, n_tuples=est.mi_tuples, estimator=est.mi_estimator)
    if isinstance(cfg.meta, FixedBias):
        hyper = MIEstimate(0.0, "closed_form")  # constant hyperparameter
    else:
        hyper = mi_hyper_dataset_empirical(cfg.environment, cfg.base, cfg.meta, cfg.N, cfg.m,
                                           rng=substream(seed, "mi-hyper"), **common)
    model = mi_model_sample_empirical(cfg.environment, cfg.base, cfg.meta, cfg.N, cfg.m,
                                      rng=substream(seed, "mi-model"), **common)
    return hyper, model


def scenario_relatedness(cfg: ScenarioConfig):
    """JS relatedness: the exact cap min(log 2, eps_kl / 2) for mean estimation, Monte Carlo otherwise."""
    if isinstance(cfg.environment, GaussianMean):
        return epsilon_js(cfg.environment, cfg.m, "lemma1")
    return epsilon_js(cfg.environment, cfg.m, "monte_carlo", cfg.estimators.js_trials, substream(cfg.budget.seed, "js"))


def scenario_bounds(cfg: ScenarioConfig, hyper: MIEstimate = None, model: MIEstimate = None, rel=None):
    """KL and JS bound breakdowns for a scenario."""
    if hyper is None or model is None:
        hyper, model = scenario_information(cfg)
    rel = rel if rel is not None else scenario_relatedness(cfg)
    sigma_sq = cfg.loss.sigma_sq
    B = b_term(cfg.loss.delta_sq, [model.nats] * cfg.m)
    mi = [hyper.nats] * cfg.N
    kl = bound_corollary_kl(sigma_sq, epsilon_kl(cfg.environment, cfg.m), mi, B)
    js = bound_corollary_js(sigma_sq, rel.epsilon_js, mi, B)
    return kl, js


def _check_finite(row: SweepRow):
    bad = [k for k, v in row.as_dict().items() if isinstance(v, float) and not math.isfinite(v)]
    if bad:
        raise RuntimeError(f"non-finite value(s) in result row: {', '.join(bad)}")


def run_scenario(cfg: ScenarioConfig, parameter: str = "nu_bar_sq") -> SweepRow:
    """Gaps, relatedness, MI terms and both bounds for one configuration."""
    abs_avg, avg_abs = gap_metrics(cfg.environment, cfg.base, cfg.meta, cfg.loss, cfg.N, cfg.m, cfg.budget)
    hyper, model = scenario_information(cfg)
    rel = scenario_relatedness(cfg)
    kl, js = scenario_bounds(cfg, hyper, model, rel)
    value = cfg.sweep_value(parameter) if parameter else float("nan")
    row = SweepRow(parameter, value, abs_avg.mean, abs_avg.std_err, avg_abs.mean, avg_abs.std_err,
                   kl.total, js.total, rel.epsilon_kl, rel.epsilon_js, rel.std_err, kl.B,
                   hyper.nats, model.nats, cfg.budget.seed)
    _check_finite(row)
    log.info("%s=%g abs_avg=%.4f avg_abs=%.4f bound_kl=%.4f bound_js=%.4f", parameter, value,
             row.abs_avg_gap, row.avg_abs_gap, row.bound_kl, row.bound_js)
    return row


def run_sweep(cfg: ScenarioConfig, parameter: str | None = None, values=None, out_dir=None) -> list[SweepRow]:
    """One row per swept value; all points share the seed (common random numbers).

    With ``out_dir`` set, writes ``results.csv``, ``fig2.svg`` and ``report.txt``.
    """
    from .report import write_sweep_outputs

    if parameter is None or values is None:
        if cfg.sweep is None:
            raise ValidationError("no sweep given: set [sweep] in the config or pass parameter and values")
        parameter = parameter or cfg.sweep.parameter
        values = values if values is not None else cfg.sweep.values
    values = tuple(float(v) for v in values)
    if len(values) < 2:
        raise ValidationError("a sweep needs at least 2 values")
    rows = [run_scenario(cfg.with_value(parameter, v), parameter) for v in values]
    if out_dir is not None:
        write_sweep_outputs(rows, cfg, Path(out_dir))
    return rows


MEAN_STUDY_COLUMNS = (
    "label", "N", "m", "alpha", "c", "epsilon_kl", "mi_hyper_closed", "mi_hyper_ksg", "mi_hyper_ksg_se",
    "mi_model_closed", "mi_model_ksg", "mi_model_ksg_se", "bound_kl_closed_form", "bound_kl_assembled",
    "bound_js_closed_form", "bound_js_assembled", "limit_target", "limit_deviation",
)


def run_mean_estimation_study(cfg: ScenarioConfig, out_dir=None, limit_size: int = 10**6) -> list[dict]:
    """Closed forms vs estimators and assembled bounds for Gaussian mean estimation.

    The second row evaluates the closed-form KL bound at ``N = m = limit_size``
    with the relatedness held at the configured value.
    """
    from .report import write_mean_study

    env = cfg.environment
    if not (isinstance(env, GaussianMean) and isinstance(cfg.base, ConvexCombination) and isinstance(cfg.meta, DatasetMean)):
        raise ValidationError("the mean-estimation study needs gaussian_mean / convex_combination / dataset_mean")
    c, alpha, N, m = cfg.loss.c, cfg.base.alpha, cfg.N, cfg.m
    est = cfg.estimators
    seed = cfg.budget.seed
    common = dict(trials=est.mi_trials, k=est.k, n_tuples=est.mi_tuples)
    hyper_ksg = mi_hyper_dataset_empirical(env, cfg.base, cfg.meta, N, m, rng=substream(seed, "mi-hyper"), **common)
    if alpha > 0:
        model_ksg = mi_model_sample_empirical(env, cfg.base, cfg.meta, N, m, rng=substream(seed, "mi-model"), **common)
    else:
        model_ksg = MIEstimate(0.0, "closed_form")  # model ignores the data
    hyper, model = mi_hyper_dataset_closed_form(N).nats, mi_model_sample_closed_form(alpha, m, N).nats
    eps = epsilon_kl(env, m)
    B = b_term(cfg.loss.delta_sq, [model] * m)
    rows = [{
        "label": "config",
        "N": N, "m": m, "alpha": alpha, "c": c, "epsilon_kl": eps,
        "mi_hyper_closed": hyper, "mi_hyper_ksg": hyper_ksg.nats, "mi_hyper_ksg_se": hyper_ksg.std_err,
        "mi_model_closed": model, "mi_model_ksg": model_ksg.nats, "mi_model_ksg_se": model_ksg.std_err,
        "bound_kl_closed_form": closed_form_bound_mean_estimation(c, alpha, m, N, env.nu_bar_sq, env.nu_sq, "KL").total,
        "bound_kl_assembled": bound_corollary_kl(cfg.loss.sigma_sq, eps, [hyper] * N, B).total,
        "bound_js_closed_form": closed_form_bound_mean_estimation(c, alpha, m, N, env.nu_bar_sq, env.nu_sq, "JS").total,
        "bound_js_assembled": bound_corollary_js(cfg.loss.sigma_sq, epsilon_js(env, m).epsilon_js, [hyper] * N, B).total,
        "limit_target": "", "limit_deviation": "",
    }]
    big = int(limit_size)
    nu_bar_big = eps * env.nu_sq / big
    limit = closed_form_bound_mean_estimation(c, alpha, big, big, nu_bar_big, env.nu_sq, "KL").total
    target = c**2 * np.sqrt(eps) / np.sqrt(2.0)
    rows.append({
        "label": "limit", "N": big, "m": big, "alpha": alpha, "c": c, "epsilon_kl": eps,
        "mi_hyper_closed": mi_hyper_dataset_closed_form(big).nats, "mi_hyper_ksg": "", "mi_hyper_ksg_se": "",
        "mi_model_closed": mi_model_sample_closed_form(alpha, big, big).nats, "mi_model_ksg": "", "mi_model_ksg_se": "",
        "bound_kl_closed_form": limit, "bound_kl_assembled": "", "bound_js_closed_form": "", "bound_js_assembled": "",
        "limit_target": float(target), "limit_deviation": float(abs(limit - target)),
    })
    if out_dir is not None:
        write_mean_study(rows, cfg, Path(out_dir))
    return rows
