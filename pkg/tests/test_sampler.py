import math

import numpy as np
import pytest
from scipy import stats

from evidence_lab.exceptions import DomainError
from evidence_lab.measures import MeasureConfig, evaluate_evidence
from evidence_lab.model import HypothesisPair, ParameterRegion, Sample
from evidence_lab.numerics import RandomStream
from evidence_lab.priors import PriorWithinRegions, TruncatedGaussianPrior, TwoLevelPrior
from evidence_lab.sampler import ReplicationBatch, draw_theta, draw_theta_batch, run_replications

INF = math.inf
LEFT = ParameterRegion.interval(-INF, 0.0)
RIGHT = ParameterRegion.interval(0.0, INF, lower_closed=False)
PVAL_RL = MeasureConfig(("pvalue", "rl"))


def composite_prior(w=0.5):
    return TwoLevelPrior(w, TruncatedGaussianPrior(LEFT), TruncatedGaussianPrior(RIGHT))


class TestDrawTheta:
    def test_region_fraction(self):
        _, in1 = draw_theta_batch(TwoLevelPrior.points(0.5, 0.0, 1.0), 3, np.arange(100_000))
        assert abs(in1.mean() - 0.5) < 0.0047

    def test_region_fraction_extreme_w(self):
        _, in1 = draw_theta_batch(TwoLevelPrior.points(0.999, 0.0, 1.0), 4, np.arange(1_000_000))
        assert abs(in1.mean() - 0.999) < 1e-4

    def test_theta_lies_in_its_region(self):
        theta, in1 = draw_theta_batch(composite_prior(), 5, np.arange(1000))
        assert np.all(LEFT.contains(theta[in1]))
        assert np.all(RIGHT.contains(theta[~in1]))

    def test_within_region_law(self):
        theta, in1 = draw_theta_batch(composite_prior(), 6, np.arange(20_000))
        # a half-normal on each side
        assert stats.kstest(np.abs(theta), "halfnorm").statistic < 1.63 / math.sqrt(len(theta))

    def test_single_stream_matches_batch(self):
        prior = composite_prior(0.3)
        theta, in1 = draw_theta_batch(prior, 9, np.array([17]))
        assert draw_theta(prior, RandomStream(9, 17)) == (theta[0], "Theta1" if in1[0] else "Theta2")


class TestRunReplications:
    def test_golden_record(self, model, point_pair):
        batch = run_replications(model, TwoLevelPrior.points(0.5, 0.0, 1.0), point_pair, PVAL_RL, 16, 1, 1)
        rec = batch[0]
        assert (rec.replication_id, rec.true_region, rec.theta, rec.n) == (0, "Theta2", 1.0, 16)
        # xbar = 1 + z / 4 with z the third draw of stream (1, 0)
        xbar = 1.0 + 0.4454377145517092 / 4
        assert rec.result("rl").value == pytest.approx(16 * (xbar - 0.5), abs=1e-12)
        assert rec.result("pvalue").value == pytest.approx(stats.norm.sf(4 * xbar), rel=1e-9)
        assert rec.result("rl").in_strong_region and rec.result("pvalue").in_strong_region

    def test_theta1_count_in_binomial_band(self, model, point_pair):
        m, w = 50_000, 0.9
        batch = run_replications(model, TwoLevelPrior.points(w, 0.0, 1.0), point_pair, PVAL_RL, 4, m, 7)
        k = int(batch.in_theta1.sum())
        assert abs(k - m * w) < 4 * math.sqrt(m * w * (1 - w))

    def test_worker_count_does_not_change_records(self, model, point_pair):
        prior = TwoLevelPrior.points(0.5, 0.0, 1.0)
        m = 3 * (1 << 16) + 11
        one = run_replications(model, prior, point_pair, PVAL_RL, 16, m, 8, workers=1)
        many = run_replications(model, prior, point_pair, PVAL_RL, 16, m, 8, workers=8)
        assert np.array_equal(one.replication_id, np.arange(m))
        for name in ("replication_id", "in_theta1", "theta"):
            assert getattr(one, name).tobytes() == getattr(many, name).tobytes()
        for key in one.values:
            assert one.values[key].tobytes() == many.values[key].tobytes()
            assert one.strong[key].tobytes() == many.strong[key].tobytes()

    def test_records_reproducible_in_isolation(self, model):
        prior = composite_prior()
        hyp = HypothesisPair(LEFT, RIGHT)
        config = MeasureConfig(("pvalue", "erl", "bf"))
        batch = run_replications(model, prior, hyp, config, 9, 100, 10, stream_offset=500)
        for i in range(100):
            alone = run_replications(model, prior, hyp, config, 9, 1, 10, stream_offset=500 + i)[0]
            rec = batch[i]
            assert (alone.true_region, alone.theta, alone.evidence) == (rec.true_region, rec.theta, rec.evidence)

    def test_batch_values_match_direct_evaluation(self, model, point_pair):
        prior = TwoLevelPrior.points(0.5, 0.0, 1.0)
        batch = run_replications(model, prior, point_pair, PVAL_RL, 4, 20, 2)
        for i in range(20):
            theta, _ = draw_theta(prior, RandomStream(2, i))
            s = model.simulate_sufficient_stat(theta, 4, RandomStream(2, i), start=2)
            direct = evaluate_evidence(model, s, point_pair, PVAL_RL)
            for m in PVAL_RL.measures:
                assert batch.values[m][i] == float(direct[m][0])

    @pytest.mark.parametrize("measure", ["pvalue", "rl", "erl", "bf"])
    def test_fast_and_full_paths_agree_in_law(self, model, point_pair, measure):
        prior = TwoLevelPrior.points(0.5, 0.0, 1.0)
        config = MeasureConfig((measure,))
        fast = run_replications(model, prior, point_pair, config, 16, 10_000, 11)
        full = run_replications(model, prior, point_pair, config, 16, 10_000, 12, full_path=True)
        assert fast.fast_path and not full.fast_path
        assert stats.ks_2samp(fast.values[measure], full.values[measure]).pvalue > 1e-3

    def test_bad_sizes(self, model, point_pair):
        prior = TwoLevelPrior.points(0.5, 0.0, 1.0)
        with pytest.raises(DomainError):
            run_replications(model, prior, point_pair, PVAL_RL, 0, 10, 1)
        with pytest.raises(DomainError):
            run_replications(model, prior, point_pair, PVAL_RL, 4, 0, 1)

    def test_concatenate_and_records(self, model, point_pair):
        prior = TwoLevelPrior.points(0.5, 0.0, 1.0)
        batch = run_replications(model, prior, point_pair, PVAL_RL, 4, 10, 3)
        parts = [
            ReplicationBatch(4, batch.replication_id[s], batch.in_theta1[s], batch.theta[s],
                             {m: v[s] for m, v in batch.values.items()},
                             {m: v[s] for m, v in batch.strong.items()})
            for s in (slice(0, 4), slice(4, 10))
        ]
        assert ReplicationBatch.concatenate(parts).records() == batch.records()

    def test_explicit_analyst_prior(self, model):
        prior = composite_prior()
        hyp = HypothesisPair(LEFT, RIGHT)
        analyst = PriorWithinRegions(TruncatedGaussianPrior(LEFT, 0, 3), TruncatedGaussianPrior(RIGHT, 0, 3))
        a = run_replications(model, prior, hyp, MeasureConfig(("bf",)), 9, 50, 4)
        b = run_replications(model, prior, hyp, MeasureConfig(("bf",)), 9, 50, 4, analyst_prior=analyst)
        assert np.array_equal(a.theta, b.theta)
        assert not np.array_equal(a.values["bf"], b.values["bf"])
