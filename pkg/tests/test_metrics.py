import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tse.metrics import (
    MetricReport,
    ExampleMetrics,
    badcase_histogram,
    cross_entropy,
    multitask_loss,
    sdr,
    sdr_improvement,
    si_sdr,
    si_sdr_improvement,
    summary_table,
)


def brute_force_si_sdr(est, ref):
    """Independent evaluation of the scale-invariant ratio with fsum arithmetic."""
    est = [float(v) for v in est]
    ref = [float(v) for v in ref]
    me = math.fsum(est) / len(est)
    mr = math.fsum(ref) / len(ref)
    e = [v - me for v in est]
    r = [v - mr for v in ref]
    rr = math.fsum(v * v for v in r)
    alpha = math.fsum(a * b for a, b in zip(e, r)) / rr
    err = [alpha * b - a for a, b in zip(e, r)]
    num = math.fsum((alpha * b) ** 2 for b in r)
    den = math.fsum(v * v for v in err)
    if den == 0.0:
        return float("inf")
    if num == 0.0:
        return float("-inf")
    return 10.0 * math.log10(num / den)


class TestSiSdr:
    def test_scalar_multiple_is_inf(self):
        ref = np.sin(np.linspace(0, 20, 400))
        assert si_sdr(2.0 * ref, ref) == float("inf")

    def test_orthogonal_is_neg_inf(self):
        ref = np.array([1.0, -1.0, 1.0, -1.0])
        est = np.array([1.0, 1.0, -1.0, -1.0])
        assert si_sdr(est, ref) == float("-inf")

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(16, 400))
            ref = rng.standard_normal(n)
            est = rng.standard_normal(n)
            assert si_sdr(est, ref) == pytest.approx(brute_force_si_sdr(est, ref), abs=1e-9)

    def test_zero_energy_reference(self):
        with pytest.raises(ValueError, match="zero-energy"):
            si_sdr(np.ones(10), np.full(10, 0.25))  # constant centers to zero

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            si_sdr(np.ones(10), np.ones(11))

    @given(st.floats(0.01, 100), st.booleans(), st.integers(0, 1000))
    @settings(max_examples=60, deadline=None)
    def test_scale_invariance(self, c, flip, seed):
        rng = np.random.default_rng(seed)
        ref = rng.standard_normal(128)
        est = rng.standard_normal(128)
        scale = -c if flip else c
        assert si_sdr(scale * est, ref) == pytest.approx(si_sdr(est, ref), abs=1e-9)

    def test_self_reference_sentinel(self):
        x = np.random.default_rng(3).standard_normal(64)
        assert si_sdr(x, x) == float("inf")


class TestImprovements:
    def test_est_equals_mixture_is_zero(self):
        rng = np.random.default_rng(11)
        target = rng.standard_normal(256)
        mixture = target + rng.standard_normal(256)
        assert si_sdr_improvement(mixture, mixture, target) == 0.0
        assert sdr_improvement(mixture, mixture, target) == 0.0

    def test_est_equals_target_is_inf(self):
        rng = np.random.default_rng(12)
        target = rng.standard_normal(256)
        mixture = target + rng.standard_normal(256)
        assert si_sdr_improvement(target, mixture, target) == float("inf")

    def test_matches_recomputed_difference(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            target = rng.standard_normal(200)
            mixture = target + 0.5 * rng.standard_normal(200)
            est = target + 0.1 * rng.standard_normal(200)
            expected = brute_force_si_sdr(est, target) - brute_force_si_sdr(mixture, target)
            assert si_sdr_improvement(est, mixture, target) == pytest.approx(expected, abs=1e-9)


class TestSdr:
    def test_simplified_formula(self):
        target = np.array([0.5, -0.5, 0.25, 0.0])
        est = np.array([0.4, -0.6, 0.25, 0.0])
        expected = 10 * math.log10(
            float(np.sum(target**2)) / float(np.sum((target - est) ** 2))
        )
        assert sdr(est, target) == pytest.approx(expected, abs=1e-12)

    def test_exact_match_is_inf(self):
        x = np.ones(8) * 0.1
        assert sdr(x, x) == float("inf")


class TestMultitaskLoss:
    def test_lambda_zero_decouples(self):
        rng = np.random.default_rng(5)
        target = rng.standard_normal(100)
        est = target + 0.2 * rng.standard_normal(100)
        logits = rng.standard_normal(8)
        assert multitask_loss(est, target, logits, 3, lam=0.0) == -si_sdr(est, target)

    def test_uniform_logits_give_log_n(self):
        rng = np.random.default_rng(6)
        target = rng.standard_normal(100)
        est = target + 0.2 * rng.standard_normal(100)
        loss = multitask_loss(est, target, np.zeros(8), 2, lam=0.5)
        assert loss == pytest.approx(-si_sdr(est, target) + 0.5 * math.log(8), abs=1e-12)

    def test_confident_correct_prediction_tends_to_signal_loss(self):
        rng = np.random.default_rng(8)
        target = rng.standard_normal(100)
        est = target + 0.2 * rng.standard_normal(100)
        logits = np.full(8, -50.0)
        logits[1] = 50.0
        loss = multitask_loss(est, target, logits, 1, lam=0.5)
        assert loss == pytest.approx(-si_sdr(est, target), abs=1e-9)

    def test_monotone_in_cross_entropy(self):
        rng = np.random.default_rng(9)
        target = rng.standard_normal(100)
        est = target + 0.2 * rng.standard_normal(100)
        worse = [multitask_loss(est, target, np.eye(4)[0] * c, 0, lam=0.5) for c in (3.0, 1.0, 0.0)]
        assert worse[0] < worse[1] < worse[2]

    def test_bad_class_index(self):
        with pytest.raises(ValueError, match="out of range"):
            cross_entropy(np.zeros(4), 4)


def report_from_scores(scores):
    rows = [
        ExampleMetrics(f"ex{i}", s, s, s, s) for i, s in enumerate(scores)
    ]
    return MetricReport(rows)


class TestBadCaseHistogram:
    def test_all_above_threshold(self):
        hist = badcase_histogram([report_from_scores([16.0, 20.0, 15.0])], 15.0, 1.0)
        assert hist.total_below == 0
        assert all(b.count == 0 for b in hist.bins)

    def test_single_example_near_threshold(self):
        hist = badcase_histogram([report_from_scores([14.9, 15.0, 16.0])], 15.0, 1.0)
        assert hist.total_below == 1
        assert hist.bins[-1].count == 1
        assert hist.bins[-1].hi_db == 15.0

    def test_totals_match_linear_scan(self):
        rng = np.random.default_rng(21)
        scores = list(rng.uniform(-5, 25, 200))
        hist = badcase_histogram([report_from_scores(scores)], 15.0, 2.0)
        assert hist.total_below == sum(1 for s in scores if s < 15.0)
        assert sum(b.count for b in hist.bins) == hist.total_below

    def test_bins_partition_strictly_below(self):
        rng = np.random.default_rng(22)
        scores = list(rng.uniform(0, 30, 500))
        hist = badcase_histogram([report_from_scores(scores)], 15.0, 1.0)
        for b in hist.bins:
            expected = sum(1 for s in scores if b.lo_db <= s < b.hi_db)
            assert b.count == expected

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            badcase_histogram([MetricReport([])])


class TestReportIO:
    def test_csv_round_trip_with_inf(self, tmp_path):
        rows = [
            ExampleMetrics("a", 10.0, 2.0, 9.0, 1.5),
            ExampleMetrics("b", float("inf"), float("inf"), 3.0, 0.5, pesq=3.2),
            ExampleMetrics("c", float("-inf"), -1.0, 2.0, 0.25),
        ]
        path = tmp_path / "r.csv"
        MetricReport(rows).to_csv(path)
        back = MetricReport.from_csv(path)
        assert back.rows == rows

    def test_mean_excludes_sentinels(self):
        rep = MetricReport([
            ExampleMetrics("a", 10.0, 10.0, 0, 0),
            ExampleMetrics("b", float("inf"), float("inf"), 0, 0),
            ExampleMetrics("c", 20.0, 20.0, 0, 0),
        ])
        mean, excluded = rep.mean("si_sdri_db")
        assert mean == 15.0
        assert excluded == 1

    def test_summary_table_layout(self):
        rep = MetricReport([ExampleMetrics("a", 12.0, 5.0, 11.0, 4.5)])
        text = summary_table([("base@n0", 2_910_000, rep)])
        assert "SI-SDRi" in text and "SDRi" in text
        assert "2.91M" in text
        assert "5.00" in text and "4.50" in text
