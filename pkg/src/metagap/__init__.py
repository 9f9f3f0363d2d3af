"""Meta-generalization gaps of meta-learners and their information-theoretic upper bounds."""
from .bounds import (
    BoundBreakdown,
    b_term,
    bound_corollary_js,
    bound_corollary_kl,
    bound_theorem1,
    closed_form_bound_mean_estimation,
    kl_auxiliary_terms,
    mixture_auxiliary_terms,
)
from .config import ConfigError, ScenarioConfig, load_config
from .env import (
    Dataset,
    GaussianMean,
    LinearRegression,
    MetaDataset,
    RelatednessReport,
    Task,
    epsilon_js,
    epsilon_kl,
    kl_dataset_distributions,
    sample_dataset,
    sample_task,
)
from .estimators import BiasedRidgeRegression, MetaBiasedRidge, MetaShrunkMean, ShrunkMeanEstimator
from .gaps import MCBudget, GapEstimate, abs_avg_gap, avg_abs_gap, gap_decomposition, gap_metrics, per_task_gap
from .info import (
    MIEstimate,
    ksg_mutual_information,
    mi_hyper_dataset_closed_form,
    mi_hyper_dataset_empirical,
    mi_model_sample_closed_form,
    mi_model_sample_empirical,
)
from .learn import (
    ConvexCombination,
    DatasetMean,
    FixedBias,
    LossSpec,
    Ridge,
    RidgeBiasClosedForm,
    fit_base,
    fit_meta,
    population_loss,
    training_loss,
)
from ._validation import ValidationError
from .runner import SweepRow, run_mean_estimation_study, run_scenario, run_sweep

__version__ = "0.1.0"
