import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evidence_lab.consistency import (
    CONSISTENT,
    INCONCLUSIVE,
    INCONSISTENT,
    ConsistencyEstimate,
    ConvergenceCurve,
    CurveRow,
    Experiment,
    TolerancePolicy,
    build_convergence_curve,
    estimate_conditional_prob,
    exact_conditional_prob,
    gaussian_oracle,
    gaussian_pvalue_strong_prob,
    gaussian_rl_strong_prob,
    limit_for,
    pvalue_limit,
    verdict,
)
from evidence_lab.exceptions import DomainError, UndefinedConditionalError
from evidence_lab.measures import EvidenceResult, MeasureConfig
from evidence_lab.model import GaussianMeanModel, HypothesisPair
from evidence_lab.priors import TwoLevelPrior
from evidence_lab.sampler import ReplicationRecord


def record(i, region, strong, n=16):
    return ReplicationRecord(i, region, 0.0, n, (EvidenceResult("rl", 0.0, strong),))


def point_experiment(w=0.5, measures=("pvalue", "rl")):
    return Experiment(
        GaussianMeanModel(), TwoLevelPrior.points(w, 0.0, 1.0), HypothesisPair.points(0.0, 1.0), MeasureConfig(measures)
    )


class TestEstimate:
    def test_undefined_when_nothing_strong(self):
        est = estimate_conditional_prob([record(i, "Theta1", False) for i in range(5)], "rl")
        assert not est.defined and est.estimate is None and est.std_error is None

    def test_three_of_ten(self):
        recs = [record(i, "Theta1" if i < 3 else "Theta2", True) for i in range(10)]
        est = estimate_conditional_prob(recs, "rl")
        assert (est.count_S, est.count_S_and_H1) == (10, 3)
        assert est.estimate == 0.3
        assert est.std_error == pytest.approx(0.14491376746189438, abs=1e-12)

    def test_ignores_weak_records(self):
        recs = [record(0, "Theta1", False), record(1, "Theta2", True), record(2, "Theta1", True)]
        assert estimate_conditional_prob(recs, "rl").estimate == 0.5

    def test_mixed_sizes_rejected(self):
        with pytest.raises(DomainError):
            estimate_conditional_prob([record(0, "Theta1", True, 4), record(1, "Theta1", True, 16)], "rl")

    def test_count_invariants(self):
        with pytest.raises(DomainError):
            ConsistencyEstimate("rl", 4, 10, 3, 4)

    def test_merge(self):
        a = ConsistencyEstimate("rl", 4, 10, 5, 2)
        b = ConsistencyEstimate("rl", 4, 20, 5, 3)
        assert a.merge(b) == ConsistencyEstimate("rl", 4, 30, 10, 5)
        with pytest.raises(DomainError):
            a.merge(ConsistencyEstimate("rl", 16, 1, 0, 0))


class TestClosedForms:
    @pytest.mark.parametrize("w, expected", [(0.5, 0.0099), (0.9, 0.0826), (0.999, 0.9090)])
    def test_pvalue_limit_table(self, w, expected):
        assert round(pvalue_limit(0.01, w), 4) == expected

    def test_pvalue_limit_precise(self):
        assert pvalue_limit(0.01, 0.5) == pytest.approx(0.00990099009900990, abs=1e-15)
        assert pvalue_limit(0.01, 0.0) == 0.0
        assert pvalue_limit(0.01, 1.0) == pytest.approx(1.0, abs=1e-14)

    def test_pvalue_limit_domain(self):
        with pytest.raises(DomainError):
            pvalue_limit(0.0, 0.5)
        with pytest.raises(DomainError):
            pvalue_limit(0.01, 1.5)

    def test_pvalue_strong_probs(self):
        assert gaussian_pvalue_strong_prob("Theta1", 16, 1.0, 0.01) == 0.01
        assert gaussian_pvalue_strong_prob("Theta2", 16, 1.0, 0.01) == pytest.approx(0.9529005, abs=1e-7)
        assert gaussian_pvalue_strong_prob("Theta2", 64, 1.0, 0.01) == pytest.approx(0.99999999301, abs=1e-11)

    # (n, Theta1, Theta2, Pr(H1 | S) at w = 1/2), frozen from mpmath
    @pytest.mark.parametrize(
        "n, p1, p2, cond",
        [
            (4, 0.00346074, 0.241777, 0.0141118),
            (16, 0.0021839050, 0.8748664077, 0.0024900567),
            (64, 4.81877e-6, 0.999825, 4.8196e-6),
        ],
    )
    def test_rl_strong_probs(self, n, p1, p2, cond):
        a = gaussian_rl_strong_prob("Theta1", n, 1.0, 30)
        b = gaussian_rl_strong_prob("Theta2", n, 1.0, 30)
        assert a == pytest.approx(p1, rel=1e-5)
        assert b == pytest.approx(p2, rel=1e-5)
        assert exact_conditional_prob(a, b, 0.5) == pytest.approx(cond, rel=1e-4)

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            gaussian_rl_strong_prob("Theta1", 4, 1.0, 1.0)
        with pytest.raises(DomainError):
            gaussian_rl_strong_prob("H3", 4, 1.0, 30)
        with pytest.raises(DomainError):
            gaussian_pvalue_strong_prob("Theta2", 4, 0.0, 0.01)
        with pytest.raises(DomainError):
            exact_conditional_prob(0.1, 0.2, 1.0)
        with pytest.raises(UndefinedConditionalError):
            exact_conditional_prob(0.0, 0.0, 0.5)

    def test_exact_conditional_examples(self):
        assert exact_conditional_prob(0.01, 1.0, 0.5) == pytest.approx(pvalue_limit(0.01, 0.5), abs=1e-15)
        assert exact_conditional_prob(0.2, 0.2, 0.3) == pytest.approx(0.3, abs=1e-15)

    def test_power_one_recovers_limit_on_grid(self):
        for w in np.linspace(0.005, 0.995, 100):
            assert exact_conditional_prob(0.01, 1.0, w) == pytest.approx(pvalue_limit(0.01, w), abs=1e-12)

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_monotone_in_w(self, p1, p2, w):
        assert exact_conditional_prob(p1, p2, w) <= exact_conditional_prob(p1, p2, min(w + 0.005, 0.999)) + 1e-15

    def test_rl_conditional_decreases_in_n(self):
        values = [
            exact_conditional_prob(
                gaussian_rl_strong_prob("Theta1", n, 1.0, 30), gaussian_rl_strong_prob("Theta2", n, 1.0, 30), 0.5
            )
            for n in range(1, 1025)
        ]
        assert all(b <= a for a, b in zip(values[20:], values[21:]))
        assert values[-1] < 1e-50

    def test_oracle_for_posterior_odds_shifts_threshold(self):
        exp = point_experiment(0.9, ("posterior_odds",))
        got = gaussian_oracle("posterior_odds", 16, model=exp.model, hypotheses=exp.hypotheses,
                              prior=exp.prior, config=exp.measures)
        k = 150 * 0.9 / 0.1
        p1 = gaussian_rl_strong_prob("Theta1", 16, 1.0, k)
        p2 = gaussian_rl_strong_prob("Theta2", 16, 1.0, k)
        assert got == pytest.approx(exact_conditional_prob(p1, p2, 0.9), rel=1e-12)

    def test_oracle_scales_with_variance(self):
        exp = point_experiment()
        wide = GaussianMeanModel(4.0)
        got = gaussian_oracle("rl", 64, model=wide, hypotheses=exp.hypotheses, prior=exp.prior, config=exp.measures)
        p1 = gaussian_rl_strong_prob("Theta1", 16, 1.0, 30)
        p2 = gaussian_rl_strong_prob("Theta2", 16, 1.0, 30)
        assert got == pytest.approx(exact_conditional_prob(p1, p2, 0.5), rel=1e-12)

    def test_limits(self):
        exp = point_experiment(0.9)
        kw = dict(hypotheses=exp.hypotheses, prior=exp.prior, config=exp.measures)
        assert limit_for("pvalue", **kw) == pytest.approx(0.0825688, rel=1e-6)
        assert limit_for("rl", **kw) == 0.0


class TestCurvesAndVerdicts:
    def _curve(self, points):
        rows = tuple(CurveRow(n, ConsistencyEstimate("rl", n, 10**6, cs, ch)) for n, cs, ch in points)
        return ConvergenceCurve("rl", rows)

    def test_rows_must_increase(self):
        with pytest.raises(DomainError):
            self._curve([(16, 100, 1), (4, 100, 1)])

    def test_consistent(self):
        curve = self._curve([(4, 10_000, 140), (16, 10_000, 25), (64, 10_000, 0)])
        assert verdict(curve, 0.0) == CONSISTENT

    def test_inconsistent_last_point(self):
        curve = self._curve([(4, 10_000, 140), (16, 10_000, 100)])
        assert verdict(curve, 0.0) == INCONSISTENT

    def test_inconsistent_trend(self):
        # ends near the limit but the middle step runs far away from it
        curve = self._curve([(4, 10_000, 100), (16, 10_000, 3000), (64, 10_000, 99)])
        assert verdict(curve, 0.01, TolerancePolicy(abs_tol=0.01)) == INCONSISTENT

    def test_inconclusive(self):
        assert verdict(self._curve([(4, 0, 0)]), 0.0) == INCONCLUSIVE
        assert verdict(self._curve([(4, 100, 1)]), None) == INCONCLUSIVE

    def test_abs_tol_floor(self):
        curve = self._curve([(4, 100, 0)])
        assert verdict(curve, 0.004, TolerancePolicy(abs_tol=0.005)) == CONSISTENT
        assert verdict(curve, 0.004) == INCONSISTENT

    def test_grid_validation(self):
        exp = point_experiment()
        with pytest.raises(DomainError):
            build_convergence_curve(exp, [16, 4], 10, 1)
        with pytest.raises(DomainError):
            build_convergence_curve(exp, [], 10, 1)

    def test_rl_curve_tracks_oracle(self):
        curves = build_convergence_curve(point_experiment(), [4, 16, 64, 256], 200_000, 31)
        rl = curves["rl"]
        for row in rl.rows:
            est = row.estimate
            if est.count_S_and_H1:
                assert abs(est.estimate - row.oracle) <= 4 * est.std_error
        assert verdict(rl, 0.0) == CONSISTENT
        assert verdict(curves["pvalue"], pvalue_limit(0.01, 0.5)) == CONSISTENT

    def test_three_se_coverage_over_seeds(self):
        exp = point_experiment(measures=("rl",))
        oracle = gaussian_oracle("rl", 4, model=exp.model, hypotheses=exp.hypotheses,
                                 prior=exp.prior, config=exp.measures)
        misses = 0
        for seed in range(100):
            est = build_convergence_curve(exp, [4], 20_000, seed)["rl"].rows[0].estimate
            misses += abs(est.estimate - oracle) > 3 * est.std_error
        assert misses <= 1
