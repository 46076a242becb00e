"""Two-level sampling: theta ~ p(theta), then data ~ f(x | theta), then evidence.

Replication ``i`` of a batch reads only its own random stream
``stream_offset + i``: draw 0 picks the region, draw 1 the parameter
within it, draws 2, 3, ... the data.  Records are therefore identical no
matter how replications are chunked or spread over workers.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .exceptions import DomainError
from .measures import EvidenceResult, MeasureConfig, evaluate_evidence
from .numerics import RandomStream, stream_uniforms

__all__ = [
    "ReplicationRecord",
    "ReplicationBatch",
    "draw_theta",
    "draw_theta_batch",
    "run_replications",
    "CHUNK_SIZE",
]

THETA1, THETA2 = "Theta1", "Theta2"
DATA_START = 2
#: Replications are generated in fixed-size chunks; the size affects only
#: memory use, never results.
CHUNK_SIZE = 1 << 16


@dataclass(frozen=True)
class ReplicationRecord:
    replication_id: int
    true_region: str
    theta: float
    n: int
    evidence: tuple

    def __post_init__(self):
        ids = [e.measure_id for e in self.evidence]
        if len(set(ids)) != len(ids):
            raise DomainError("duplicate measures in replication record")

    def result(self, measure_id) -> EvidenceResult:
        for e in self.evidence:
            if e.measure_id == measure_id:
                return e
        raise KeyError(measure_id)


@dataclass
class ReplicationBatch:
    """Column store for the records of one ``(n, configuration)`` run.

    ``values[m]`` and ``strong[m]`` hold measure ``m``'s value and
    S-membership for every replication.  Indexing yields
    :class:`ReplicationRecord` objects.
    """

    n: int
    replication_id: np.ndarray
    in_theta1: np.ndarray
    theta: np.ndarray
    values: Dict[str, np.ndarray]
    strong: Dict[str, np.ndarray]
    fast_path: bool = True

    @property
    def measures(self):
        return tuple(self.values)

    def __len__(self):
        return len(self.replication_id)

    def __getitem__(self, i) -> ReplicationRecord:
        return ReplicationRecord(
            replication_id=int(self.replication_id[i]),
            true_region=THETA1 if self.in_theta1[i] else THETA2,
            theta=float(self.theta[i]),
            n=self.n,
            evidence=tuple(
                EvidenceResult(m, float(self.values[m][i]), bool(self.strong[m][i]))
                for m in self.values
            ),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def records(self) -> List[ReplicationRecord]:
        return list(self)

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        first = parts[0]
        return cls(
            n=first.n,
            replication_id=np.concatenate([p.replication_id for p in parts]),
            in_theta1=np.concatenate([p.in_theta1 for p in parts]),
            theta=np.concatenate([p.theta for p in parts]),
            values={m: np.concatenate([p.values[m] for p in parts]) for m in first.values},
            strong={m: np.concatenate([p.strong[m] for p in parts]) for m in first.values},
            fast_path=first.fast_path,
        )


def draw_theta_batch(prior, master_seed, stream_ids):
    """Vectorised :func:`draw_theta`: returns ``(theta, in_theta1)`` arrays."""
    sids = np.asarray(stream_ids, dtype=np.uint64)
    in_theta1 = stream_uniforms(master_seed, sids, 0) < prior.w
    u = stream_uniforms(master_seed, sids, 1)
    theta = np.where(in_theta1, prior.within1.ppf(u), prior.within2.ppf(u))
    return theta.astype(float), in_theta1


def draw_theta(prior, stream: RandomStream):
    """Draw ``(theta, region_label)`` from the mixture prior."""
    theta, in1 = draw_theta_batch(prior, stream.master_seed, np.array([stream.stream_id]))
    return float(theta[0]), THETA1 if in1[0] else THETA2


def _simulate_chunk(args):
    model, prior, hypotheses, config, analyst_prior, n, master_seed, stream_offset, ids, full = args
    sids = np.uint64(stream_offset) + ids.astype(np.uint64)
    theta, in_theta1 = draw_theta_batch(prior, master_seed, sids)
    sample = model.simulate_batch(theta, n, master_seed, sids, start=DATA_START, full=full)
    evidence = evaluate_evidence(model, sample, hypotheses, config, analyst_prior)
    return ReplicationBatch(
        n=n,
        replication_id=ids,
        in_theta1=in_theta1,
        theta=theta,
        values={m: v for m, (v, _) in evidence.items()},
        strong={m: s for m, (_, s) in evidence.items()},
        fast_path=not full,
    )


def run_replications(
    model,
    prior,
    hypotheses,
    config: MeasureConfig,
    n,
    M,
    master_seed,
    *,
    analyst_prior=None,
    stream_offset=0,
    workers=1,
    full_path=False,
) -> ReplicationBatch:
    """Run ``M`` replications of the two-level mechanism at sample size ``n``.

    Parameters
    ----------
    model : Model
    prior : TwoLevelPrior
        Data-generating prior.
    hypotheses : HypothesisPair
    config : MeasureConfig
    n, M : int
    master_seed : int
    analyst_prior : PriorWithinRegions, optional
        Prior for the Bayesian measures; defaults to ``prior`` itself.
    stream_offset : int
        Replication ``i`` uses stream ``stream_offset + i``.
    workers : int
        Process count.  Results do not depend on it.
    full_path : bool
        Simulate every observation instead of the sample mean.  The mean-only
        path is used whenever the model allows it and this is False.

    Returns
    -------
    ReplicationBatch
    """
    if M < 1:
        raise DomainError("M must be at least 1")
    if n < 1:
        raise DomainError("n must be at least 1")
    full = bool(full_path) or not getattr(model, "mean_sufficient", False)
    if analyst_prior is None:
        analyst_prior = prior.as_analyst_prior()
    # Surface configuration errors before spawning anything.
    _simulate_chunk((model, prior, hypotheses, config, analyst_prior, n, master_seed,
                     stream_offset, np.arange(1, dtype=np.int64), full))
    jobs = [
        (model, prior, hypotheses, config, analyst_prior, n, master_seed, stream_offset,
         np.arange(lo, min(lo + CHUNK_SIZE, M), dtype=np.int64), full)
        for lo in range(0, M, CHUNK_SIZE)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk, jobs))
    else:
        parts = [_simulate_chunk(job) for job in jobs]
    parts.sort(key=lambda p: int(p.replication_id[0]))
    return ReplicationBatch.concatenate(parts)
