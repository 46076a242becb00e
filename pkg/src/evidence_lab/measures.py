"""Measures of statistical evidence and their strong-evidence calibrations.

Every likelihood-based value is returned on the log scale.  Inside the
replication engine each measure is oriented as evidence *against* H1
(relative to H2): the p-value of H1, ``log r21``, ``log r21^e``,
``log b21`` and ``log p21``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .exceptions import DomainError, NumericalError, UnsupportedConfigurationError
from .model import GaussianMeanModel, HypothesisPair, ParameterRegion, Sample
from .priors import PriorWithinRegions, TruncatedGaussianPrior

__all__ = [
    "MEASURE_IDS",
    "StrongEvidenceRegion",
    "EvidenceResult",
    "MeasureConfig",
    "test_statistic",
    "p_value",
    "p_value_grid_search",
    "ratio_of_likelihoods_log",
    "extended_ratio_of_likelihoods_log",
    "log_marginal_likelihood",
    "bayes_factor_log",
    "posterior_odds_log",
    "categorize",
    "coherence_audit",
    "evaluate_evidence",
]

MEASURE_IDS = ("pvalue", "rl", "erl", "bf", "posterior_odds")

QUADRATURE_ORDER = 64
QUADRATURE_RTOL = 1e-8
# Nodes are placed where the likelihood is within this many nats of its
# maximum over the integration range; the rest is below double precision.
_WINDOW_DEPTH = 80.0


@dataclass(frozen=True)
class StrongEvidenceRegion:
    """The category S of strongest evidence.

    ``low-is-strong``: S = [0, threshold), compared on the natural scale.
    ``high-is-strong``: S = [threshold, inf) for a ratio whose *log* is
    the value being categorised.
    """

    orientation: str
    threshold: float

    def __post_init__(self):
        if self.orientation == "low-is-strong":
            if not 0.0 < self.threshold < 1.0:
                raise DomainError("p-value threshold alpha_S must lie in (0, 1)")
        elif self.orientation == "high-is-strong":
            if not self.threshold > 0.0:
                raise DomainError("ratio threshold must be positive")
        else:
            raise DomainError(f"unknown orientation {self.orientation!r}")

    @classmethod
    def for_pvalue(cls, alpha_s=0.01):
        return cls("low-is-strong", alpha_s)

    @classmethod
    def for_ratio(cls, k_s=30.0):
        if not k_s > 1.0:
            raise DomainError("k_S must exceed 1")
        return cls("high-is-strong", k_s)

    @property
    def log_threshold(self):
        return math.log(self.threshold)


def categorize(value, region: StrongEvidenceRegion):
    """S-membership of ``value`` (elementwise for arrays)."""
    v = np.asarray(value, dtype=float)
    if region.orientation == "low-is-strong":
        out = v < region.threshold
    else:
        out = v >= region.log_threshold
    return bool(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EvidenceResult:
    measure_id: str
    value: float
    in_strong_region: bool


@dataclass(frozen=True)
class MeasureConfig:
    """Which measures to evaluate and their calibration thresholds.

    The defaults are conventions: p < 0.01, ratio of likelihoods >= 30,
    Bayes factor >= 150.  The posterior-odds threshold reuses the Bayes
    factor value.
    """

    measures: tuple = ("pvalue", "rl")
    alpha_s: float = 0.01
    k_s: float = 30.0
    bf_threshold: float = 150.0
    odds_threshold: float = 150.0

    def __post_init__(self):
        measures = tuple(self.measures)
        object.__setattr__(self, "measures", measures)
        if not measures:
            raise DomainError("at least one measure must be configured")
        unknown = [m for m in measures if m not in MEASURE_IDS]
        if unknown:
            raise DomainError(f"unknown measures {unknown}")
        if len(set(measures)) != len(measures):
            raise DomainError("duplicate measures configured")
        self.region("pvalue")
        self.region("rl")
        if not (self.bf_threshold > 1.0 and self.odds_threshold > 1.0):
            raise DomainError("Bayes factor and odds thresholds must exceed 1")

    def region(self, measure_id) -> StrongEvidenceRegion:
        if measure_id == "pvalue":
            return StrongEvidenceRegion.for_pvalue(self.alpha_s)
        if measure_id in ("rl", "erl"):
            return StrongEvidenceRegion.for_ratio(self.k_s)
        if measure_id == "bf":
            return StrongEvidenceRegion.for_ratio(self.bf_threshold)
        if measure_id == "posterior_odds":
            return StrongEvidenceRegion.for_ratio(self.odds_threshold)
        raise DomainError(f"unknown measure {measure_id!r}")


# --------------------------------------------------------------------------
# p-value of the one-sided Gaussian mean test
# --------------------------------------------------------------------------


def test_statistic(sample: Sample, theta1):
    """sqrt(n) * (xbar - theta1)."""
    out = math.sqrt(sample.n) * (np.asarray(sample.mean) - theta1)
    return float(out) if np.ndim(out) == 0 else out


test_statistic.__test__ = False  # not a pytest test despite the name


def _pvalue_reference(theta1_region: ParameterRegion):
    if theta1_region.is_point:
        return theta1_region.point_value
    if math.isinf(theta1_region.upper):
        raise UnsupportedConfigurationError(
            f"p-value for H1 region {theta1_region}: region unbounded above, supremum is 1"
        )
    # Pr(T > t | theta) increases in theta, so the sup sits at the upper end.
    return theta1_region.upper


def _require_gaussian(model):
    if not isinstance(model, GaussianMeanModel):
        raise UnsupportedConfigurationError(
            "the p-value is implemented for the one-sided Gaussian mean test only"
        )


def p_value(model, sample: Sample, theta1_region: ParameterRegion):
    """p-value of H1 for the test that rejects when sqrt(n)(xbar - theta1) is large."""
    _require_gaussian(model)
    ref = _pvalue_reference(theta1_region)
    out = special.ndtr(-test_statistic(sample, ref) / model.sd)
    return float(out) if np.ndim(out) == 0 else out


def p_value_grid_search(model, sample: Sample, theta1_region: ParameterRegion, points=1000, refine=10):
    """Brute-force ``sup_{theta in H1} Pr(T > t | theta)`` for one sample.

    Searches ``points`` grid values over the region (a window of 10 sds of
    the mean below a finite upper end when the region is unbounded below),
    then refines ``refine``-fold around the best grid point.  Used as a
    cross-check of :func:`p_value`.
    """
    _require_gaussian(model)
    ref = _pvalue_reference(theta1_region)
    if theta1_region.is_point:
        grid_lo = grid_hi = ref
    else:
        grid_hi = ref
        scale = 10.0 * model.sd
        grid_lo = theta1_region.lower if math.isfinite(theta1_region.lower) else grid_hi - scale
    t = test_statistic(sample, ref) / model.sd
    root_n = math.sqrt(sample.n) / model.sd

    def tail(theta):
        return special.ndtr(-(t - root_n * (theta - ref)))

    grid = np.linspace(grid_lo, grid_hi, points)
    best = int(np.argmax(tail(grid)))
    step = (grid_hi - grid_lo) / max(points - 1, 1)
    fine = np.linspace(max(grid_lo, grid[best] - step), min(grid_hi, grid[best] + step), points * refine)
    return float(np.max(tail(fine)))


# --------------------------------------------------------------------------
# likelihood ratios
# --------------------------------------------------------------------------


def ratio_of_likelihoods_log(model, sample: Sample, theta1, theta2):
    """log r12 = log f(X | theta1) - log f(X | theta2)."""
    if theta1 == theta2:
        raise DomainError("hypotheses must be distinct (theta1 == theta2)")
    out = model.log_likelihood_kernel(theta1, sample) - model.log_likelihood_kernel(theta2, sample)
    return float(out) if np.ndim(out) == 0 else out


def _sup_log_likelihood(model, sample, regions):
    """Sup of the kernel over a union of regions."""
    best = None
    for region in regions:
        value = np.asarray(model.log_likelihood_kernel(model.restricted_mle(sample, region), sample))
        best = value if best is None else np.maximum(best, value)
    return best


def extended_ratio_of_likelihoods_log(model, sample: Sample, theta1_region, theta2_region):
    """log r12^e: ratio of the likelihood suprema over the two regions."""
    if theta1_region.overlaps(theta2_region):
        raise DomainError(f"regions {theta1_region} and {theta2_region} overlap")
    sup1 = model.log_likelihood_kernel(model.restricted_mle(sample, theta1_region), sample)
    sup2 = model.log_likelihood_kernel(model.restricted_mle(sample, theta2_region), sample)
    out = np.asarray(sup1) - np.asarray(sup2)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# marginal likelihoods, Bayes factor, posterior odds
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _gauss_legendre(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, np.log(w)


def _gl_log_integral(model, sample, dist, lo, hi, order):
    a, b = model.kernel_window(sample, lo, hi, _WINDOW_DEPTH)
    a = np.atleast_1d(a)
    b = np.atleast_1d(b)
    nodes, log_w = _gauss_legendre(order)
    half = 0.5 * (b - a)
    theta = (0.5 * (a + b))[:, None] + half[:, None] * nodes[None, :]
    batch = Sample.from_summary(sample.n, np.atleast_1d(np.asarray(sample.mean, dtype=float))[:, None])
    terms = model.log_likelihood_kernel(theta, batch) + dist.log_density(theta) + log_w[None, :]
    top = np.max(terms, axis=1)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.exp(terms - safe[:, None]), axis=1)) + safe + np.log(half)


def log_marginal_likelihood(model, sample: Sample, dist, lower=None, upper=None, order=QUADRATURE_ORDER):
    """log of the integral of the likelihood kernel against ``dist``.

    Integration runs over ``[lower, upper]`` intersected with the
    (truncated) support of ``dist``.  Gauss-Legendre of ``order`` nodes is
    compared with ``2 * order``; disagreement beyond ``QUADRATURE_RTOL``
    raises :class:`NumericalError`.  Point masses evaluate the kernel
    directly.  The result omits the same theta-free constant as
    ``model.log_likelihood_kernel``.
    """
    shape = np.shape(sample.mean)
    if dist.is_point:
        v = dist.value
        inside = (lower is None or v >= lower) and (upper is None or v <= upper)
        out = np.broadcast_to(
            np.asarray(model.log_likelihood_kernel(v, sample)) if inside else -np.inf, shape
        )
        return float(out) if out.ndim == 0 else np.array(out)
    lo, hi, _ = dist.support()
    if lower is not None:
        lo = max(lo, lower)
    if upper is not None:
        hi = min(hi, upper)
    if not lo < hi:
        out = np.full(shape, -np.inf)
        return float(out) if out.ndim == 0 else out
    coarse = _gl_log_integral(model, sample, dist, lo, hi, order)
    fine = _gl_log_integral(model, sample, dist, lo, hi, 2 * order)
    err = np.abs(coarse - fine)
    bad = ~(err <= QUADRATURE_RTOL)
    if np.any(bad & np.isfinite(fine)):
        worst = int(np.nanargmax(np.where(np.isfinite(err), err, -1.0)))
        raise NumericalError(
            "Gauss-Legendre order doubling disagreed beyond tolerance",
            {
                "order": order,
                "max_abs_log_difference": float(err.flat[worst]),
                "sample_mean": float(np.ravel(sample.mean)[worst]),
                "n": sample.n,
                "range": (lo, hi),
            },
        )
    return float(fine[0]) if len(shape) == 0 else fine.reshape(shape)


def _check_prior_regions(prior: PriorWithinRegions, theta1_region, theta2_region):
    if prior.q1.region != theta1_region or prior.q2.region != theta2_region:
        raise DomainError("prior regions must match the hypothesis regions")


def bayes_factor_log(model, sample: Sample, prior: PriorWithinRegions, theta1_region, theta2_region):
    """log b12: ratio of the q-weighted marginal likelihoods of H1 and H2."""
    _check_prior_regions(prior, theta1_region, theta2_region)
    out = np.asarray(log_marginal_likelihood(model, sample, prior.q1)) - np.asarray(
        log_marginal_likelihood(model, sample, prior.q2)
    )
    return float(out) if out.ndim == 0 else out


def posterior_odds_log(bf21_log, prior):
    """log p21 = log b21 + log(q(Theta2) / q(Theta1)).

    ``prior`` is a :class:`PriorWithinRegions` or the bare mass q(Theta1).
    """
    q1 = prior.q_theta1_mass if isinstance(prior, PriorWithinRegions) else float(prior)
    if not 0.0 < q1 < 1.0:
        raise DomainError("q(Theta1) must lie in (0, 1)")
    out = np.asarray(bf21_log) + (math.log1p(-q1) - math.log(q1))
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# evaluation over a batch
# --------------------------------------------------------------------------


def evaluate_evidence(model, sample: Sample, hypotheses: HypothesisPair, config: MeasureConfig, prior=None):
    """Evidence against H1 for every configured measure.

    Returns ``{measure_id: (values, in_strong_region)}``; arrays when
    ``sample`` is a batch.  ``prior`` (a :class:`PriorWithinRegions`) is
    required for ``bf`` and ``posterior_odds``.
    """
    r1, r2 = hypotheses.theta1_region, hypotheses.theta2_region
    out = {}
    bf21 = None
    for m in config.measures:
        if m == "pvalue":
            value = p_value(model, sample, r1)
        elif m == "rl":
            if not hypotheses.is_point_pair:
                raise UnsupportedConfigurationError(
                    "ratio of likelihoods needs point hypotheses; use 'erl' for composite regions"
                )
            value = ratio_of_likelihoods_log(model, sample, r2.point_value, r1.point_value)
        elif m == "erl":
            value = extended_ratio_of_likelihoods_log(model, sample, r2, r1)
        else:
            if prior is None:
                raise UnsupportedConfigurationError(f"measure {m!r} needs a prior q")
            if bf21 is None:
                bf21 = np.asarray(-np.asarray(bayes_factor_log(model, sample, prior, r1, r2)))
            value = bf21 if m == "bf" else posterior_odds_log(bf21, prior)
        value = np.asarray(value, dtype=float)
        out[m] = (value, np.asarray(categorize(value, config.region(m))))
    return out


# --------------------------------------------------------------------------
# coherence
# --------------------------------------------------------------------------


def _cells(regions):
    """Split the real line at every finite endpoint of ``regions``."""
    cuts = sorted({e for r in regions for e in (r.lower, r.upper) if math.isfinite(e)})
    edges = [-math.inf] + cuts + [math.inf]
    return list(zip(edges[:-1], edges[1:]))


def _log_cell_masses(model, sample, prior_dist, cells):
    return np.stack(
        [np.atleast_1d(log_marginal_likelihood(model, sample, prior_dist, lo, hi)) for lo, hi in cells]
    )


def _masked_sum(scaled, mask):
    # Sum cell by cell in a fixed order: with non-negative terms every
    # rounded partial sum is monotone in the set of cells included.
    total = np.zeros(scaled.shape[1])
    for row, keep in zip(scaled, mask):
        if keep:
            total = total + row
    return total


def _group_by_n(samples):
    groups = {}
    for s in samples:
        groups.setdefault(s.n, []).append(float(s.mean))
    return {n: Sample.from_summary(n, np.array(means)) for n, means in groups.items()}


def coherence_audit(measure_id, nested_pair, samples, *, model=None, prior=None):
    """Count samples where a measure's evidence for Θ exceeds that for Θ'.

    ``nested_pair`` is ``(Θ, Θ')`` with Θ strictly inside Θ'.  Evidence for
    a region is measured against its complement in the real line:

    * ``posterior_odds``: log posterior odds of the region under ``prior``
      (a distribution on the whole line, default N(0, 1));
    * ``bf``: log Bayes factor of the region versus its complement under
      the same prior;
    * ``erl``: log extended ratio of likelihoods, numerator sup over the
      region, denominator sup over the complement.

    A coherent measure yields 0.
    """
    inner, outer = nested_pair
    if not (inner.is_subset_of(outer) and inner != outer):
        raise DomainError(f"{inner} must be strictly contained in {outer}")
    if measure_id == "pvalue":
        raise UnsupportedConfigurationError(
            "p-value coherence audit: nested regions are not expressible in the one-sided test"
        )
    if measure_id == "rl":
        raise UnsupportedConfigurationError("ratio of likelihoods is defined for point regions only")
    if measure_id not in MEASURE_IDS:
        raise DomainError(f"unknown measure {measure_id!r}")
    model = model or GaussianMeanModel()
    samples = list(samples)
    if not samples:
        return 0
    violations = 0
    for batch in _group_by_n(samples).values():
        if measure_id == "erl":
            ev = []
            for region in (inner, outer):
                num = _sup_log_likelihood(model, batch, [region])
                den = _sup_log_likelihood(model, batch, region.complement())
                ev.append(num - den)
        else:
            if inner.is_point or outer.is_point:
                raise UnsupportedConfigurationError("posterior audits need interval regions")
            dist = prior or TruncatedGaussianPrior(ParameterRegion.interval(), 0.0, 1.0)
            cells = _cells([inner, outer])
            mids = [0.5 * (lo + hi) if math.isfinite(lo + hi) else (hi - 1 if math.isinf(lo) else lo + 1)
                    for lo, hi in cells]
            logm = _log_cell_masses(model, batch, dist, cells)
            shift = np.max(logm, axis=0)
            scaled = np.exp(logm - shift)
            prior_mass = np.array([float(dist.cdf(hi) - dist.cdf(lo)) for lo, hi in cells])
            ev = []
            for region in (inner, outer):
                mask = [bool(region.contains(m)) for m in mids]
                num = _masked_sum(scaled, mask)
                den = _masked_sum(scaled, [not k for k in mask])
                with np.errstate(divide="ignore"):
                    log_odds = np.log(num) - np.log(den)
                if measure_id == "bf":
                    q_in = sum(p for p, k in zip(prior_mass, mask) if k)
                    q_out = sum(p for p, k in zip(prior_mass, mask) if not k)
                    log_odds = log_odds - (math.log(q_in) - math.log(q_out))
                ev.append(log_odds)
        violations += int(np.count_nonzero(ev[0] > ev[1]))
    return violations
