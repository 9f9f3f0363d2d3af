"""Command-line entry point: ``metagap <subcommand> ...``.

Exit codes: 0 on success, 1 on invalid input or configuration, 2 on runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from ._validation import ValidationError, substream
from .bounds import bound_theorem1, kl_auxiliary_terms, mixture_auxiliary_terms
from .config import ScenarioConfig, load_config, mean_estimation_defaults, parse_values
from .env import GaussianMean
from .info import (
    mi_hyper_dataset_closed_form,
    mi_hyper_dataset_empirical,
    mi_model_sample_closed_form,
    mi_model_sample_empirical,
)
from .learn import ConvexCombination, DatasetMean
from .report import rows_to_csv, write_single_row
from .runner import (
    MEAN_STUDY_COLUMNS,
    run_mean_estimation_study,
    run_scenario,
    run_sweep,
    scenario_bounds,
    scenario_information,
)

log = logging.getLogger("metagap")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _config(args, fallback=ScenarioConfig) -> ScenarioConfig:
    if getattr(args, "config", None):
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc.strerror or exc}") from None
    else:
        cfg = fallback()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _config(args)
    param = cfg.sweep.parameter if cfg.sweep is not None else "nu_bar_sq"
    row = run_scenario(cfg, param)
    out = Path(args.out or cfg.output_dir)
    write_single_row(row, cfg, out)
    sys.stdout.write(rows_to_csv([row]))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = parse_values(args.values) if args.values else None
    param = args.param or (cfg.sweep.parameter if cfg.sweep is not None else "nu_bar_sq")
    if values is None and cfg.sweep is None:
        raise ValidationError("no sweep values: pass --values a:b:n or add a [sweep] section")
    rows = run_sweep(cfg, param, values if values is not None else cfg.sweep.values, Path(args.out or cfg.output_dir))
    sys.stdout.write(rows_to_csv(rows))
    return 0


BOUND_COLUMNS = ("variant", "total", "env_level", "B", "epsilon", "sigma_sq", "delta_sq")


def cmd_bounds(args) -> int:
    cfg = _config(args)
    hyper, model = scenario_information(cfg)
    kl, js = scenario_bounds(cfg, hyper, model)
    mi = [hyper.nats] * cfg.N
    test, train = kl_auxiliary_terms(cfg.environment, cfg.m, cfg.N)
    t1 = bound_theorem1(cfg.loss.sigma_sq, mi, test, train, kl.B, cfg.loss.delta_sq)
    mtest, mtrain, _ = mixture_auxiliary_terms(cfg.environment, cfg.m, cfg.N, cfg.estimators.js_trials,
                                               substream(cfg.budget.seed, "mixture"))
    t1m = bound_theorem1(cfg.loss.sigma_sq, mi, mtest, mtrain, kl.B, cfg.loss.delta_sq)
    rows = [kl.as_row(), js.as_row(), {**t1.as_row(), "variant": "theorem1_kl_choice"},
            {**t1m.as_row(), "variant": "theorem1_mixture"}]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(BOUND_COLUMNS)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else repr(float(r[c])) for c in BOUND_COLUMNS])
    return 0


MI_COLUMNS = ("pipeline", "target", "estimator", "k", "n_samples", "tuples", "nats", "std_err", "closed_form", "seed")


def cmd_estimate_mi(args) -> int:
    mean = args.pipeline == "mean"
    cfg = _config(args, mean_estimation_defaults if mean else ScenarioConfig)
    if mean != isinstance(cfg.environment, GaussianMean):
        raise ValidationError(f"--pipeline {args.pipeline} does not match the environment in {args.config}")
    seed = cfg.budget.seed
    common = dict(trials=args.n, k=args.k, n_tuples=args.tuples, estimator=args.estimator)
    if args.target == "hyper":
        est = mi_hyper_dataset_empirical(cfg.environment, cfg.base, cfg.meta, cfg.N, cfg.m,
                                         rng=substream(seed, "mi-hyper"), **common)
    else:
        est = mi_model_sample_empirical(cfg.environment, cfg.base, cfg.meta, cfg.N, cfg.m,
                                        rng=substream(seed, "mi-model"), **common)
    closed = ""
    if isinstance(cfg.base, ConvexCombination) and isinstance(cfg.meta, DatasetMean):
        closed = (mi_hyper_dataset_closed_form(cfg.N) if args.target == "hyper"
                  else mi_model_sample_closed_form(cfg.base.alpha, cfg.m, cfg.N)).nats
    row = [args.pipeline, args.target, est.method, args.k if args.estimator == "ksg" else "", est.n_samples,
           args.tuples, repr(float(est.nats)), repr(float(est.std_err)), repr(float(closed)) if closed != "" else "", seed]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(MI_COLUMNS)
    w.writerow(row)
    return 0


def cmd_mean_study(args) -> int:
    cfg = _config(args, mean_estimation_defaults)
    rows = run_mean_estimation_study(cfg, Path(args.out or cfg.output_dir))
    sys.stdout.write(rows_to_csv(rows, MEAN_STUDY_COLUMNS))
    return 0


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="metagap", description="Meta-generalization gaps and information-theoretic bounds.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one scenario and print its result row")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=_seed)
    s.add_argument("--out", help="output directory (default: [output] dir of the config)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="sweep one parameter; writes results.csv, fig2.svg and report.txt")
    s.add_argument("--config", required=True)
    s.add_argument("--param", help="parameter to sweep (default: [sweep] parameter)")
    s.add_argument("--values", help="'a:b:n' or 'v1,v2,...' (default: [sweep] values)")
    s.add_argument("--seed", type=_seed)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("bounds", help="print bound breakdowns as CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=_seed)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("estimate-mi", help="estimate one mutual-information term; prints one CSV row")
    s.add_argument("--pipeline", choices=("mean", "ridge"), required=True)
    s.add_argument("--target", choices=("hyper", "model"), required=True)
    s.add_argument("-n", type=_positive_int, default=10_000, help="samples per conditioning tuple")
    s.add_argument("-k", type=_positive_int, default=5, help="KSG neighbour count")
    s.add_argument("--estimator", choices=("ksg", "gaussian"), default="ksg")
    s.add_argument("--tuples", type=_positive_int, default=4, help="conditioning task tuples to average over")
    s.add_argument("--seed", type=_seed)
    s.add_argument("--config")
    s.set_defaults(func=cmd_estimate_mi)

    s = sub.add_parser("mean-study", help="closed forms vs estimates for Gaussian mean estimation")
    s.add_argument("--config")
    s.add_argument("--seed", type=_seed)
    s.add_argument("--out")
    s.set_defaults(func=cmd_mean_study)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"metagap: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - map everything else to the runtime exit code
        print(f"metagap: runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
