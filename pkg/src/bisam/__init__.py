"""Bayesian step-shift break detection in short panels.

Break selection is cast as variable selection over an exhaustive set of
step indicators under a Dirac-spike / inverse-moment-slab prior, sampled
with a single-site Gibbs sweep that also flags and downweights outliers.
An adaptive-LASSO baseline and a Monte Carlo benchmark harness round out
the toolbox.
"""

from .alasso import AlassoConfig, alasso_detect
from .imom import IMomParams, calibrate_tau, imom_density, imom_log_density, imom_moment, imom_sample
from .inference import BreakReport, build_report, compute_pips, select_breaks, summarize_breaks, window_break_prob
from .panel import BreakCandidate, PanelData, SaturatedDesign, build_design, restrict_candidates
from .sampler import (
    PosteriorDraws,
    PriorConfig,
    SamplerConfig,
    SamplerState,
    empirical_bayes_init,
    run_chain,
)
from .simlab import MetricsReport, SimDesign, StudyConfig, generate, run_study, score

__version__ = "0.1.0"

__all__ = [
    "AlassoConfig",
    "alasso_detect",
    "IMomParams",
    "calibrate_tau",
    "imom_density",
    "imom_log_density",
    "imom_moment",
    "imom_sample",
    "BreakReport",
    "build_report",
    "compute_pips",
    "select_breaks",
    "summarize_breaks",
    "window_break_prob",
    "BreakCandidate",
    "PanelData",
    "SaturatedDesign",
    "build_design",
    "restrict_candidates",
    "PosteriorDraws",
    "PriorConfig",
    "SamplerConfig",
    "SamplerState",
    "empirical_bayes_init",
    "run_chain",
    "MetricsReport",
    "SimDesign",
    "StudyConfig",
    "generate",
    "run_study",
    "score",
    "__version__",
]
