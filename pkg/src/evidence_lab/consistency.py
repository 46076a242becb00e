"""Pr(H1 | evidence against H1 is strong): Monte Carlo estimates, closed
forms for the Gaussian point-hypothesis example, and convergence verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .exceptions import DomainError, UndefinedConditionalError
from .measures import MeasureConfig
from .model import GaussianMeanModel, HypothesisPair
from .numerics import std_normal_quantile, std_normal_sf
from .priors import PointMass, TwoLevelPrior
from .sampler import ReplicationBatch, run_replications

__all__ = [
    "ConsistencyEstimate",
    "ConvergenceCurve",
    "CurveRow",
    "TolerancePolicy",
    "Experiment",
    "estimate_conditional_prob",
    "pvalue_limit",
    "gaussian_pvalue_strong_prob",
    "gaussian_rl_strong_prob",
    "exact_conditional_prob",
    "gaussian_oracle",
    "limit_for",
    "build_convergence_curve",
    "verdict",
    "CONSISTENT",
    "INCONSISTENT",
    "INCONCLUSIVE",
]

CONSISTENT = "consistent-with-limit"
INCONSISTENT = "inconsistent-with-limit"
INCONCLUSIVE = "inconclusive"

#: Stream ids of the batch for the k-th grid point start at k << STREAM_BLOCK_BITS.
STREAM_BLOCK_BITS = 40


@dataclass(frozen=True)
class ConsistencyEstimate:
    measure_id: str
    n: int
    M: int
    count_S: int
    count_S_and_H1: int

    def __post_init__(self):
        if not 0 <= self.count_S_and_H1 <= self.count_S <= self.M:
            raise DomainError("counts must satisfy 0 <= count_S_and_H1 <= count_S <= M")

    @property
    def defined(self):
        return self.count_S > 0

    @property
    def estimate(self) -> Optional[float]:
        return self.count_S_and_H1 / self.count_S if self.defined else None

    @property
    def std_error(self) -> Optional[float]:
        if not self.defined:
            return None
        p = self.estimate
        return math.sqrt(p * (1.0 - p) / self.count_S)

    def merge(self, other: "ConsistencyEstimate") -> "ConsistencyEstimate":
        """Pool counts from two disjoint batches of the same configuration."""
        if (other.measure_id, other.n) != (self.measure_id, self.n):
            raise DomainError("can only merge estimates of the same measure and n")
        return ConsistencyEstimate(
            self.measure_id,
            self.n,
            self.M + other.M,
            self.count_S + other.count_S,
            self.count_S_and_H1 + other.count_S_and_H1,
        )


def estimate_conditional_prob(records, measure_id) -> ConsistencyEstimate:
    """Count-based estimate of Pr(H1 | measure in S).

    ``records`` is a :class:`ReplicationBatch` or an iterable of
    :class:`ReplicationRecord` sharing one sample size.
    """
    if isinstance(records, ReplicationBatch):
        strong = records.strong[measure_id]
        return ConsistencyEstimate(
            measure_id,
            records.n,
            len(records),
            int(np.count_nonzero(strong)),
            int(np.count_nonzero(strong & records.in_theta1)),
        )
    records = list(records)
    sizes = {r.n for r in records}
    if len(sizes) > 1:
        raise DomainError(f"records mix sample sizes {sorted(sizes)}")
    count_s = count_s_h1 = 0
    for r in records:
        if r.result(measure_id).in_strong_region:
            count_s += 1
            count_s_h1 += r.true_region == "Theta1"
    n = sizes.pop() if sizes else 0
    return ConsistencyEstimate(measure_id, n, len(records), count_s, count_s_h1)


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------


def pvalue_limit(alpha_s, w):
    """Large-n limit of Pr(H1 | p < alpha_S) when the test's power tends to 1."""
    if not 0.0 < alpha_s < 1.0:
        raise DomainError("alpha_S must lie in (0, 1)")
    if not 0.0 <= w <= 1.0:
        raise DomainError("w must lie in [0, 1]")
    return alpha_s * w / (1.0 - w * (1.0 - alpha_s))


def _check_region_label(region):
    if region not in ("Theta1", "Theta2"):
        raise DomainError(f"region must be 'Theta1' or 'Theta2', got {region!r}")


def gaussian_pvalue_strong_prob(region, n, delta, alpha_s):
    """Pr(p < alpha_S | region) for theta1 versus theta1 + delta, unit variance."""
    _check_region_label(region)
    if not delta > 0.0:
        raise DomainError("delta must be positive")
    if region == "Theta1":
        return float(alpha_s)
    return std_normal_sf(std_normal_quantile(1.0 - alpha_s) - math.sqrt(n) * delta)


def _rl_strong_prob(region, n, delta, k_s):
    root_n = math.sqrt(n)
    shift = root_n * delta / 2.0
    base = math.log(k_s) / (delta * root_n)
    return std_normal_sf(base + shift if region == "Theta1" else base - shift)


def gaussian_rl_strong_prob(region, n, delta, k_s):
    """Pr(r21 >= k_S | region) for theta1 versus theta1 + delta, unit variance."""
    _check_region_label(region)
    if not delta > 0.0:
        raise DomainError("delta must be positive")
    if not k_s > 1.0:
        raise DomainError("k_S must exceed 1")
    return _rl_strong_prob(region, n, delta, k_s)


def exact_conditional_prob(strong_prob_h1, strong_prob_h2, w):
    """Bayes' rule: w p1 / (w p1 + (1 - w) p2)."""
    if not 0.0 < w < 1.0:
        raise DomainError("w must lie in (0, 1)")
    for p in (strong_prob_h1, strong_prob_h2):
        if not 0.0 <= p <= 1.0:
            raise DomainError("strong-evidence probabilities must lie in [0, 1]")
    num = w * strong_prob_h1
    den = num + (1.0 - w) * strong_prob_h2
    if den == 0.0:
        raise UndefinedConditionalError("strong evidence has probability 0 under both hypotheses")
    return num / den


def gaussian_oracle(measure_id, n, *, model, hypotheses, prior, config):
    """Finite-n Pr(H1 | S) in closed form, or ``None`` when none applies.

    Closed forms exist for the Gaussian mean model with point hypotheses
    theta2 > theta1 and point-mass within-region priors (the Bayes
    factor and posterior odds then reduce to the ratio of likelihoods
    with a shifted threshold).
    """
    if not isinstance(model, GaussianMeanModel) or not hypotheses.is_point_pair:
        return None
    if not (isinstance(prior.within1, PointMass) and isinstance(prior.within2, PointMass)):
        return None
    theta1 = hypotheses.theta1_region.point_value
    theta2 = hypotheses.theta2_region.point_value
    if prior.within1.value != theta1 or prior.within2.value != theta2 or theta2 <= theta1:
        return None
    delta = (theta2 - theta1) / model.sd
    w = prior.w
    if measure_id == "pvalue":
        p1 = gaussian_pvalue_strong_prob("Theta1", n, delta, config.alpha_s)
        p2 = gaussian_pvalue_strong_prob("Theta2", n, delta, config.alpha_s)
    else:
        if measure_id in ("rl", "erl"):
            k = config.k_s
        elif measure_id == "bf":
            k = config.bf_threshold
        else:
            # log p21 >= log c  <=>  log r21 >= log c - log((1 - w) / w)
            k = config.odds_threshold * w / (1.0 - w)
        p1 = _rl_strong_prob("Theta1", n, delta, k)
        p2 = _rl_strong_prob("Theta2", n, delta, k)
    try:
        return exact_conditional_prob(p1, p2, w)
    except UndefinedConditionalError:
        return None


def limit_for(measure_id, *, hypotheses, prior, config):
    """The large-n value of Pr(H1 | S) each measure is expected to reach.

    The p-value tends to ``pvalue_limit`` when H1 is a point (uniform
    p-values under H1); every likelihood or Bayesian measure tends to 0.
    ``None`` when no limit is available.
    """
    if measure_id == "pvalue":
        if hypotheses.theta1_region.is_point:
            return pvalue_limit(config.alpha_s, prior.w)
        return None
    return 0.0


# --------------------------------------------------------------------------
# curves
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CurveRow:
    n: int
    estimate: ConsistencyEstimate
    oracle: Optional[float] = None


@dataclass(frozen=True)
class ConvergenceCurve:
    measure_id: str
    rows: tuple

    def __post_init__(self):
        ns = [r.n for r in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise DomainError("curve rows must have strictly increasing n")


@dataclass(frozen=True)
class Experiment:
    """Everything a convergence run needs apart from the grid and seed."""

    model: object
    prior: TwoLevelPrior
    hypotheses: HypothesisPair
    measures: MeasureConfig
    analyst_prior: object = None
    full_path: bool = False


def stream_offset_for(index):
    return index << STREAM_BLOCK_BITS


def build_convergence_curve(experiment: Experiment, n_grid: Iterable[int], M, master_seed, *,
                            workers=1, first_block=0):
    """One :class:`ConvergenceCurve` per configured measure.

    The batch at grid position ``k`` uses streams starting at
    ``(first_block + k) << 40``, so every batch is independent and
    reproducible on its own.
    """
    n_grid = [int(n) for n in n_grid]
    if not n_grid:
        raise DomainError("n_grid must not be empty")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise DomainError("n_grid must be strictly increasing")
    rows = {m: [] for m in experiment.measures.measures}
    for k, n in enumerate(n_grid):
        batch = run_replications(
            experiment.model,
            experiment.prior,
            experiment.hypotheses,
            experiment.measures,
            n,
            M,
            master_seed,
            analyst_prior=experiment.analyst_prior,
            stream_offset=stream_offset_for(first_block + k),
            workers=workers,
            full_path=experiment.full_path,
        )
        for m in rows:
            oracle = gaussian_oracle(
                m,
                n,
                model=experiment.model,
                hypotheses=experiment.hypotheses,
                prior=experiment.prior,
                config=experiment.measures,
            )
            rows[m].append(CurveRow(n, estimate_conditional_prob(batch, m), oracle))
    return {m: ConvergenceCurve(m, tuple(r)) for m, r in rows.items()}


@dataclass(frozen=True)
class TolerancePolicy:
    """Agreement band: ``max(n_se * SE, abs_tol)``."""

    n_se: float = 3.0
    abs_tol: float = 0.0

    def band(self, est: ConsistencyEstimate):
        return max(self.n_se * est.std_error, self.abs_tol)


def verdict(curve: ConvergenceCurve, oracle_limit, policy: TolerancePolicy = TolerancePolicy()):
    """Judge whether a curve is heading to ``oracle_limit``.

    Consistent when the largest-n estimate is within the tolerance band of
    the limit and no step moves away from it by more than the combined
    bands of the two estimates.  Inconclusive when the largest-n estimate
    is undefined or there is no limit to compare with.
    """
    if not curve.rows:
        raise DomainError("curve is empty")
    last = curve.rows[-1].estimate
    if oracle_limit is None or not last.defined:
        return INCONCLUSIVE
    if abs(last.estimate - oracle_limit) > policy.band(last):
        return INCONSISTENT
    defined = [r.estimate for r in curve.rows if r.estimate.defined]
    for a, b in zip(defined, defined[1:]):
        gap_a = abs(a.estimate - oracle_limit)
        gap_b = abs(b.estimate - oracle_limit)
        if gap_b > gap_a + policy.band(a) + policy.band(b):
            return INCONSISTENT
    return CONSISTENT
