"""Parametric models, parameter regions and restricted maximum likelihood."""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DomainError
from .numerics import RandomStream, gaussian_log_density, stream_normals

__all__ = [
    "ParameterRegion",
    "HypothesisPair",
    "Sample",
    "Model",
    "GaussianMeanModel",
]

_INF = math.inf


@dataclass(frozen=True)
class ParameterRegion:
    """A point or an interval of the (scalar) parameter space.

    Use the :meth:`point` and :meth:`interval` constructors.  Infinite
    endpoints are always stored as open.
    """

    kind: str
    point_value: Optional[float] = None
    lower: float = -_INF
    upper: float = _INF
    lower_closed: bool = False
    upper_closed: bool = False

    def __post_init__(self):
        if self.kind == "point":
            if self.point_value is None or not math.isfinite(self.point_value):
                raise DomainError("point region needs a finite value")
            object.__setattr__(self, "lower", float(self.point_value))
            object.__setattr__(self, "upper", float(self.point_value))
            object.__setattr__(self, "lower_closed", True)
            object.__setattr__(self, "upper_closed", True)
        elif self.kind == "interval":
            if math.isnan(self.lower) or math.isnan(self.upper) or not self.lower < self.upper:
                raise DomainError(f"interval needs lower < upper, got [{self.lower}, {self.upper}]")
            if math.isinf(self.lower):
                object.__setattr__(self, "lower_closed", False)
            if math.isinf(self.upper):
                object.__setattr__(self, "upper_closed", False)
        else:
            raise DomainError(f"unknown region kind {self.kind!r}")

    @classmethod
    def point(cls, value):
        return cls("point", point_value=float(value))

    @classmethod
    def interval(cls, lower=-_INF, upper=_INF, *, lower_closed=True, upper_closed=True):
        return cls(
            "interval",
            lower=float(lower),
            upper=float(upper),
            lower_closed=lower_closed,
            upper_closed=upper_closed,
        )

    @property
    def is_point(self):
        return self.kind == "point"

    @property
    def bounds(self):
        return self.lower, self.upper

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        above = theta >= self.lower if self.lower_closed else theta > self.lower
        below = theta <= self.upper if self.upper_closed else theta < self.upper
        out = above & below
        return bool(out) if out.ndim == 0 else out

    def is_subset_of(self, other: "ParameterRegion") -> bool:
        lo_ok = self.lower > other.lower or (
            self.lower == other.lower and (other.lower_closed or not self.lower_closed)
        )
        hi_ok = self.upper < other.upper or (
            self.upper == other.upper and (other.upper_closed or not self.upper_closed)
        )
        return lo_ok and hi_ok

    def overlaps(self, other: "ParameterRegion") -> bool:
        if self.upper < other.lower or other.upper < self.lower:
            return False
        if self.upper == other.lower:
            return self.upper_closed and other.lower_closed
        if other.upper == self.lower:
            return other.upper_closed and self.lower_closed
        return True

    def complement(self):
        """The complement in the real line, as a tuple of regions (0 to 2 pieces)."""
        pieces = []
        if math.isfinite(self.lower):
            pieces.append(
                ParameterRegion.interval(-_INF, self.lower, upper_closed=not self.lower_closed)
            )
        if math.isfinite(self.upper):
            pieces.append(
                ParameterRegion.interval(self.upper, _INF, lower_closed=not self.upper_closed)
            )
        return tuple(pieces)

    def __str__(self):
        if self.is_point:
            return f"{{{self.point_value:g}}}"
        left = "[" if self.lower_closed else "("
        right = "]" if self.upper_closed else ")"
        return f"{left}{self.lower:g}, {self.upper:g}{right}"


@dataclass(frozen=True)
class HypothesisPair:
    """H1: theta in ``theta1_region``; H2: theta in ``theta2_region``."""

    theta1_region: ParameterRegion
    theta2_region: ParameterRegion

    def __post_init__(self):
        if self.theta1_region.overlaps(self.theta2_region):
            raise DomainError(
                f"hypothesis regions {self.theta1_region} and {self.theta2_region} overlap"
            )

    @classmethod
    def points(cls, theta1, theta2):
        return cls(ParameterRegion.point(theta1), ParameterRegion.point(theta2))

    @property
    def is_point_pair(self):
        return self.theta1_region.is_point and self.theta2_region.is_point


@dataclass(frozen=True)
class Sample:
    """Observed data, or a summary of it.

    ``mean`` and ``sumsq`` may be arrays; such a ``Sample`` stands for a
    batch of datasets sharing the size ``n`` and is what the replication
    engine passes to the measures.  ``sumsq`` is ``None`` for
    mean-only summaries.
    """

    n: int
    mean: object
    sumsq: object = None
    observations: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n) < 1:
            raise DomainError("sample size must be at least 1")

    @classmethod
    def from_observations(cls, observations):
        x = np.asarray(observations, dtype=float).ravel()
        if x.size == 0:
            raise DomainError("sample must contain at least one observation")
        x.setflags(write=False)
        return cls(n=x.size, mean=float(np.mean(x)), sumsq=float(np.dot(x, x)), observations=x)

    @classmethod
    def from_summary(cls, n, mean, sumsq=None):
        return cls(n=int(n), mean=mean, sumsq=sumsq)

    @property
    def is_batch(self):
        return np.ndim(self.mean) > 0

    def __len__(self):
        return self.n


class Model(abc.ABC):
    """Interface a statistical model must provide to the measures and sampler."""

    #: True when every log-likelihood difference depends on the data only
    #: through ``Sample.mean``; enables the summary-only simulation path.
    mean_sufficient: bool = False

    @abc.abstractmethod
    def log_likelihood(self, theta, sample: Sample):
        """Full log-likelihood."""

    @abc.abstractmethod
    def log_likelihood_kernel(self, theta, sample: Sample):
        """Log-likelihood up to an additive term that does not depend on theta."""

    @abc.abstractmethod
    def restricted_mle(self, sample: Sample, region: ParameterRegion, *, return_attained=False):
        """Maximiser of the likelihood over ``region`` (supremum point if not attained)."""

    @abc.abstractmethod
    def kernel_window(self, sample: Sample, lower, upper, depth):
        """Sub-interval of [lower, upper] on which the kernel is within
        ``depth`` nats of its maximum over [lower, upper]."""

    @abc.abstractmethod
    def simulate_sample(self, theta, n, stream: RandomStream, *, start=0) -> Sample:
        """Draw a full dataset of size ``n``."""

    @abc.abstractmethod
    def simulate_sufficient_stat(self, theta, n, stream: RandomStream, *, start=0) -> Sample:
        """Draw only the sufficient summary of a dataset of size ``n``."""


@dataclass(frozen=True)
class GaussianMeanModel(Model):
    """Univariate N(theta, variance) with known variance; theta is the mean."""

    variance: float = 1.0
    sample_space_dim: int = 1

    mean_sufficient = True

    def __post_init__(self):
        if not (self.variance > 0.0 and math.isfinite(self.variance)):
            raise DomainError("variance must be positive and finite")
        if self.sample_space_dim != 1:
            raise DomainError("only univariate observations are supported")

    @property
    def sd(self):
        return math.sqrt(self.variance)

    # -- likelihood -------------------------------------------------------

    def log_likelihood(self, theta, sample):
        if sample.observations is not None and not sample.is_batch:
            return float(np.sum(gaussian_log_density(sample.observations, theta, self.variance)))
        if sample.sumsq is None:
            raise DomainError("full log-likelihood needs sum of squares; sample is mean-only")
        n = sample.n
        # sum (x_i - theta)^2 = (sumsq - n xbar^2) + n (xbar - theta)^2
        within = np.asarray(sample.sumsq) - n * np.square(sample.mean)
        out = -0.5 * n * math.log(2.0 * math.pi * self.variance) - (
            within + n * np.square(np.asarray(sample.mean) - theta)
        ) / (2.0 * self.variance)
        return float(out) if np.ndim(out) == 0 else out

    def log_likelihood_kernel(self, theta, sample):
        d = np.asarray(sample.mean) - np.asarray(theta)
        out = -sample.n * (d * d) / (2.0 * self.variance)
        return float(out) if np.ndim(out) == 0 else out

    # -- estimation -------------------------------------------------------

    def restricted_mle(self, sample, region, *, return_attained=False):
        """Projection of the sample mean onto ``region``.

        The log-likelihood is concave in theta with unrestricted maximiser
        ``sample.mean``, so clamping gives the restricted maximiser.  When
        the clamp lands on an open endpoint the supremum is not attained;
        ``return_attained=True`` additionally returns that flag.
        """
        if region.is_point:
            theta = np.full(np.shape(sample.mean), region.point_value)
            attained = np.ones(np.shape(sample.mean), dtype=bool)
        else:
            xbar = np.asarray(sample.mean, dtype=float)
            theta = np.clip(xbar, region.lower, region.upper)
            attained = region.contains(theta) | np.zeros(np.shape(xbar), dtype=bool)
        theta = float(theta) if np.ndim(theta) == 0 else theta
        if return_attained:
            return theta, (bool(attained) if np.ndim(attained) == 0 else attained)
        return theta

    def kernel_window(self, sample, lower, upper, depth):
        xbar = np.asarray(sample.mean, dtype=float)
        best = np.clip(xbar, lower, upper)
        radius = np.sqrt(np.square(xbar - best) + 2.0 * self.variance * depth / sample.n)
        return np.maximum(lower, xbar - radius), np.minimum(upper, xbar + radius)

    # -- simulation -------------------------------------------------------

    def simulate_sample(self, theta, n, stream, *, start=0):
        if n < 1:
            raise DomainError("n must be at least 1")
        x = theta + self.sd * stream.normals(n, start=start)
        return Sample.from_observations(x)

    def simulate_sufficient_stat(self, theta, n, stream, *, start=0):
        if n < 1:
            raise DomainError("n must be at least 1")
        z = float(stream.normals(1, start=start)[0])
        return Sample.from_summary(n, theta + self.sd / math.sqrt(n) * z)

    def simulate_batch(self, theta, n, master_seed, stream_ids, *, start=0, full=False):
        """Vectorised simulation for many streams at once.

        Stream ``stream_ids[i]`` gets parameter ``theta[i]`` and uses draws
        ``start, start + 1, ...`` exactly as :meth:`simulate_sample` and
        :meth:`simulate_sufficient_stat` would, so a single entry can be
        regenerated on its own.
        """
        if n < 1:
            raise DomainError("n must be at least 1")
        theta = np.asarray(theta, dtype=float)
        sids = np.asarray(stream_ids, dtype=np.uint64)
        if not full:
            z = stream_normals(master_seed, sids, start)
            return Sample.from_summary(n, theta + self.sd / math.sqrt(n) * z)
        draws = np.arange(start, start + n, dtype=np.uint64)
        x = theta[:, None] + self.sd * stream_normals(master_seed, sids[:, None], draws[None, :])
        return Sample.from_summary(n, x.mean(axis=1), np.einsum("ij,ij->i", x, x))
