"""Numerical laboratory for measures of statistical evidence and their
asymptotic consistency under two-level sampling."""

__version__ = "0.1.0"

from .consistency import (
    ConsistencyEstimate,
    ConvergenceCurve,
    Experiment,
    TolerancePolicy,
    build_convergence_curve,
    estimate_conditional_prob,
    exact_conditional_prob,
    gaussian_pvalue_strong_prob,
    gaussian_rl_strong_prob,
    pvalue_limit,
    verdict,
)
from .measures import (
    EvidenceResult,
    MeasureConfig,
    StrongEvidenceRegion,
    bayes_factor_log,
    categorize,
    coherence_audit,
    extended_ratio_of_likelihoods_log,
    p_value,
    posterior_odds_log,
    ratio_of_likelihoods_log,
)
from .model import GaussianMeanModel, HypothesisPair, ParameterRegion, Sample
from .numerics import RandomStream
from .priors import (
    PointMass,
    PriorWithinRegions,
    TruncatedGaussianPrior,
    TwoLevelPrior,
    UniformPrior,
)
from .sampler import ReplicationBatch, ReplicationRecord, run_replications
