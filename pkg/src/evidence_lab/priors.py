"""Distributions over parameter regions and the priors built from them.

Two prior objects exist for two different roles:

* :class:`TwoLevelPrior` is the *data-generating* mixture ``p(theta)`` of
  the replication engine (weight ``w`` on the first region).
* :class:`PriorWithinRegions` is the *analyst's* prior ``q(theta)`` used
  by the Bayes factor and posterior odds.

They share the region distributions defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special, stats

from .exceptions import DomainError
from .model import ParameterRegion

__all__ = [
    "PointMass",
    "UniformPrior",
    "TruncatedGaussianPrior",
    "PriorWithinRegions",
    "TwoLevelPrior",
    "TRUNCATION_SDS",
]

#: Infinite-support densities are integrated over mean +/- this many sds.
TRUNCATION_SDS = 8.0
_LOG_2PI = math.log(2.0 * math.pi)


def _nudge_inside(theta, region):
    # ppf can round onto an open endpoint; step one ulp inward.
    if not region.lower_closed and math.isfinite(region.lower):
        theta = np.where(theta <= region.lower, np.nextafter(region.lower, math.inf), theta)
    if not region.upper_closed and math.isfinite(region.upper):
        theta = np.where(theta >= region.upper, np.nextafter(region.upper, -math.inf), theta)
    return theta


@dataclass(frozen=True)
class PointMass:
    region: ParameterRegion

    is_point = True

    def __post_init__(self):
        if not self.region.is_point:
            raise DomainError("PointMass needs a point region")

    @classmethod
    def at(cls, value):
        return cls(ParameterRegion.point(value))

    @property
    def value(self):
        return self.region.point_value

    def ppf(self, u):
        return np.full(np.shape(u), self.value)

    def describe(self):
        return {"family": "point", "value": self.value}


@dataclass(frozen=True)
class UniformPrior:
    """Uniform density on a bounded interval region."""

    region: ParameterRegion

    is_point = False

    def __post_init__(self):
        lo, hi = self.region.bounds
        if self.region.is_point or not (math.isfinite(lo) and math.isfinite(hi)):
            raise DomainError("uniform prior needs a bounded interval")

    def log_density(self, theta):
        lo, hi = self.region.bounds
        theta = np.asarray(theta, dtype=float)
        return np.where((theta >= lo) & (theta <= hi), -math.log(hi - lo), -np.inf)

    def support(self):
        return self.region.lower, self.region.upper, 0.0

    def cdf(self, theta):
        lo, hi = self.region.bounds
        return np.clip((np.asarray(theta, dtype=float) - lo) / (hi - lo), 0.0, 1.0)

    def ppf(self, u):
        lo, hi = self.region.bounds
        return _nudge_inside(lo + np.asarray(u) * (hi - lo), self.region)

    def describe(self):
        return {"family": "uniform", "lower": self.region.lower, "upper": self.region.upper}


@dataclass(frozen=True)
class TruncatedGaussianPrior:
    """N(mean, sd^2) restricted and renormalised to ``region``."""

    region: ParameterRegion
    mean: float = 0.0
    sd: float = 1.0

    is_point = False

    def __post_init__(self):
        if self.region.is_point:
            raise DomainError("truncated Gaussian needs an interval region")
        if not self.sd > 0.0:
            raise DomainError("sd must be positive")
        if not math.isfinite(self.mean):
            raise DomainError("mean must be finite")

    @cached_property
    def _dist(self):
        a = (self.region.lower - self.mean) / self.sd
        b = (self.region.upper - self.mean) / self.sd
        return stats.truncnorm(a, b, loc=self.mean, scale=self.sd)

    @cached_property
    def _log_norm(self):
        # log(Phi(b) - Phi(a)), reflected into the lower tail for accuracy
        a = (self.region.lower - self.mean) / self.sd
        b = (self.region.upper - self.mean) / self.sd
        if a > 0.0:
            a, b = -b, -a
        hi = float(special.log_ndtr(b))
        lo = float(special.log_ndtr(a))
        return hi + math.log1p(-math.exp(lo - hi)) + math.log(self.sd)

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        z = (theta - self.mean) / self.sd
        out = -0.5 * (z * z + _LOG_2PI) - self._log_norm
        return np.where(self.region.contains(theta), out, -np.inf)

    def support(self):
        """Integration range and the prior mass it leaves out."""
        lo = max(self.region.lower, self.mean - TRUNCATION_SDS * self.sd)
        hi = min(self.region.upper, self.mean + TRUNCATION_SDS * self.sd)
        dist = self._dist
        dropped = float(dist.cdf(lo) + dist.sf(hi))
        return lo, hi, dropped

    def cdf(self, theta):
        return self._dist.cdf(theta)

    def ppf(self, u):
        return _nudge_inside(self._dist.ppf(u), self.region)

    def describe(self):
        return {
            "family": "truncated_gaussian",
            "mean": self.mean,
            "sd": self.sd,
            "lower": self.region.lower,
            "upper": self.region.upper,
        }


def _check_weight(value, name):
    if not (0.0 < value < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {value}")


@dataclass(frozen=True)
class PriorWithinRegions:
    """Analyst prior q: ``q1`` on the H1 region, ``q2`` on the H2 region,
    and prior mass ``q_theta1_mass`` on the H1 region."""

    q1: object
    q2: object
    q_theta1_mass: float = 0.5

    def __post_init__(self):
        _check_weight(self.q_theta1_mass, "q(Theta1)")

    @property
    def log_prior_odds21(self):
        return math.log1p(-self.q_theta1_mass) - math.log(self.q_theta1_mass)


@dataclass(frozen=True)
class TwoLevelPrior:
    """Mixture p(theta) = w * within1 + (1 - w) * within2."""

    w: float
    within1: object
    within2: object

    def __post_init__(self):
        _check_weight(self.w, "w")

    @classmethod
    def points(cls, w, theta1, theta2):
        return cls(w, PointMass.at(theta1), PointMass.at(theta2))

    def as_analyst_prior(self):
        """The same mixture, read as the analyst's prior q."""
        return PriorWithinRegions(self.within1, self.within2, self.w)

    def describe(self):
        return {"w": self.w, "within1": self.within1.describe(), "within2": self.within2.describe()}

