"""Calibrated treatment-effect estimation for the few-placebo regime:
per-arm Gaussian-process posteriors, the meta-learners they are compared
against, and the benchmark harness that measures bias, coverage, and
accuracy."""

from fewcate.dataset import Dataset
from fewcate.designs import (
    DesignSpec,
    LabeledSample,
    design_truth,
    gen_synthetic,
    ihdp_few_placebo,
    ihdp_load,
    stratified_few_placebo,
)
from fewcate.gp import (
    GpHyperparams,
    GpModel,
    LatentPosterior,
    OptimizerConfig,
    fit_gp,
    kernel_matrix,
    latent_posterior,
    log_marginal_likelihood,
)
from fewcate.gpcate import (
    CatePosterior,
    GpCateModel,
    cate_posterior,
    gpcate_fit,
    posterior_diagnostics,
)
from fewcate.boosting import GbrtConfig, fit_gbrt, fit_propensity
from fewcate.metalearners import (
    DrScores,
    LinearPosterior,
    PseudoOutcomes,
    baseline_st_learners,
    basis_for_design,
    bayes_second_stage,
    dr_learner,
    dr_score,
    x_learner_bayes,
    x_learner_point,
    x_pseudo_outcomes,
)
from fewcate.metrics import (
    BiasSpreadReport,
    IntervalSet,
    bias_spread_decomposition,
    interval_metrics,
    rpehe,
    verify_dr_remainder,
)
from fewcate.nuisance import NuisanceModels, cross_fit
from fewcate.harness import SweepConfig, SweepReport, emit_report, parse_config, run_sweep

__version__ = "0.1.0"
