from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from conftest import make_truth
from viewrecon import metrics
from viewrecon.core import CorrectionEstimate, Resolution, ViewSeries, observe

PUB = datetime(2022, 2, 3, 10, 0)


def obs(deltas):
    return ViewSeries("v0", "c0", PUB, Resolution.HOUR, tuple(deltas))


def est(values, video_id="v0"):
    return CorrectionEstimate(video_id, tuple(values))


class TestNaiveEstimate:
    def test_sign_split(self):
        assert metrics.naive_estimate(obs([5, -3, 2])).estimates == (0, 3, 0)

    def test_all_nonnegative(self):
        assert metrics.naive_estimate(obs([1, 0, 7])).estimates == (0, 0, 0)

    def test_single_negative(self):
        assert metrics.naive_estimate(obs([8, -7])).estimates == (0, 7)

    def test_missing_slots_are_zero(self):
        s = ViewSeries("v0", "c0", PUB, Resolution.HOUR, (5, None, -2))
        assert metrics.naive_estimate(s).estimates == (0, 0, 2)

    def test_requires_hourly(self):
        s = ViewSeries("v0", "c0", PUB, Resolution.FIVE_MIN, (1, 2))
        with pytest.raises(ValueError):
            metrics.naive_estimate(s)


class TestFractionExamples:
    def test_lost_corrections_simple(self):
        truth = make_truth([9, 9, 9], [0, 5, 0])
        assert metrics.lost_corrections([truth], [est([0, 3, 0])]) == pytest.approx(0.4)

    def test_lost_corrections_identity(self):
        truth = make_truth([9, 9], [2, 5])
        assert metrics.lost_corrections([truth], [est([2, 5])]) == 0.0

    def test_added_corrections_simple(self):
        truth = make_truth([9, 9], [0, 5])
        assert metrics.added_corrections([truth], [est([2, 5])]) == pytest.approx(0.4)

    def test_lost_interventions_half(self):
        truth = make_truth([9, 9, 9], [4, 0, 2])
        assert metrics.lost_interventions([truth], [est([4, 0, 0])]) == pytest.approx(0.5)

    def test_lost_interventions_zero_when_covered(self):
        truth = make_truth([9, 9, 9], [4, 0, 2])
        assert metrics.lost_interventions([truth], [est([1, 0, 9])]) == 0.0

    def test_added_interventions_spurious_slot(self):
        truth = make_truth([9, 9, 9], [0, 0, 5])
        assert metrics.added_interventions([truth], [est([1, 0, 5])]) == pytest.approx(1.0)

    def test_zero_denominator_raises(self):
        truth = make_truth([9], [0])
        with pytest.raises(metrics.UndefinedMetricError):
            metrics.lost_corrections([truth], [est([0])])
        with pytest.raises(metrics.UndefinedMetricError):
            metrics.lost_interventions([truth], [est([0])])


class TestEvaluate:
    def test_oracle_estimator_scores_zero(self):
        truths = [
            make_truth(
                [30] * 24, [0, 7] + [0] * 22,
                video_id="va", resolution=Resolution.FIVE_MIN,
            ),
            make_truth(
                [3] * 24, [0] * 23 + [2],
                video_id="vb", resolution=Resolution.FIVE_MIN,
            ),
        ]
        hourly = {t.video_id: t for t in truths}

        def perfect(observed):
            from viewrecon.core import aggregate_to_hour

            truth = aggregate_to_hour(hourly[observed.video_id])
            return CorrectionEstimate(observed.video_id, truth.corrections)

        report = metrics.evaluate(truths, perfect)
        assert report.lost_corrections == 0.0
        assert report.added_corrections == 0.0
        assert report.lost_interventions == 0.0
        assert report.added_interventions == 0.0

    def test_all_zero_estimator(self):
        truths = [make_truth([9, 9], [0, 4])]
        report = metrics.evaluate(
            truths, lambda o: CorrectionEstimate(o.video_id, (0,) * len(o))
        )
        assert report.lost_corrections == 1.0
        assert report.added_corrections == 0.0
        assert report.lost_interventions == 1.0
        assert report.added_interventions == 0.0

    def test_totals_recorded(self):
        truths = [make_truth([9, 9], [3, 4])]
        report = metrics.evaluate(truths, metrics.naive_estimate)
        assert report.total_corrections == 7
        assert report.total_intervention_slots == 2

    def test_mismatched_estimates_rejected(self):
        truth = make_truth([9], [1])
        with pytest.raises(ValueError, match="no estimate"):
            metrics.lost_corrections([truth], [est([1], video_id="other")])
        with pytest.raises(ValueError, match="length"):
            metrics.lost_corrections([truth], [est([1, 2])])


class TestAgainstOracle:
    def test_random_corpora_match_brute_force(self, rng):
        """Module fractions vs the double-loop oracle, exact equality."""
        for _ in range(200):
            views_all, corr_all = oracle.random_truth_corpus(rng)
            truths = []
            estimates = []
            for i, (views, corr) in enumerate(zip(views_all, corr_all)):
                vid = f"v{i}"
                truths.append(
                    make_truth(
                        [v + c for v, c in zip(views, corr)], corr, video_id=vid
                    )
                )
                estimates.append(
                    est([int(rng.integers(0, 8)) for _ in views], video_id=vid)
                )
            expected = oracle.error_fractions(
                [list(t.corrections) for t in truths],
                [list(e.estimates) for e in estimates],
            )
            if expected["total_mass"] == 0 or expected["true_slots"] == 0:
                continue
            assert metrics.lost_corrections(truths, estimates) == expected["lost_corrections"]
            assert metrics.added_corrections(truths, estimates) == expected["added_corrections"]
            assert metrics.lost_interventions(truths, estimates) == expected["lost_interventions"]
            assert metrics.added_interventions(truths, estimates) == expected["added_interventions"]


@st.composite
def corpus_with_estimates(draw):
    n_videos = draw(st.integers(1, 5))
    truths, estimates = [], []
    for i in range(n_videos):
        n = draw(st.integers(1, 10))
        corr = [draw(st.integers(0, 10)) for _ in range(n)]
        views = [draw(st.integers(0, 10)) + c for c in corr]
        truths.append(make_truth(views, corr, video_id=f"v{i}"))
        estimates.append(est([draw(st.integers(0, 10)) for _ in range(n)], f"v{i}"))
    return truths, estimates


class TestProperties:
    @given(corpus_with_estimates(), st.randoms())
    @settings(max_examples=40, deadline=None)
    def test_permutation_invariance(self, data, pyrandom):
        truths, estimates = data
        total = sum(sum(t.corrections) for t in truths)
        slots = sum(1 for t in truths for c in t.corrections if c > 0)
        if total == 0 or slots == 0:
            return
        baseline = (
            metrics.lost_corrections(truths, estimates),
            metrics.added_corrections(truths, estimates),
            metrics.lost_interventions(truths, estimates),
            metrics.added_interventions(truths, estimates),
        )
        shuffled_t = list(truths)
        pyrandom.shuffle(shuffled_t)
        shuffled_e = list(estimates)
        pyrandom.shuffle(shuffled_e)
        assert baseline == (
            metrics.lost_corrections(shuffled_t, shuffled_e),
            metrics.added_corrections(shuffled_t, shuffled_e),
            metrics.lost_interventions(shuffled_t, shuffled_e),
            metrics.added_interventions(shuffled_t, shuffled_e),
        )

    @given(corpus_with_estimates(), st.integers(2, 7))
    @settings(max_examples=40, deadline=None)
    def test_mass_fractions_scale_invariant(self, data, k):
        truths, estimates = data
        total = sum(sum(t.corrections) for t in truths)
        if total == 0:
            return
        scaled_t = [
            make_truth(
                [v * k for v in t.views],
                [c * k for c in t.corrections],
                video_id=t.video_id,
            )
            for t in truths
        ]
        scaled_e = [est([v * k for v in e.estimates], e.video_id) for e in estimates]
        assert metrics.lost_corrections(truths, estimates) == pytest.approx(
            metrics.lost_corrections(scaled_t, scaled_e)
        )
        assert metrics.added_corrections(truths, estimates) == pytest.approx(
            metrics.added_corrections(scaled_t, scaled_e)
        )

    @given(corpus_with_estimates())
    @settings(max_examples=40, deadline=None)
    def test_naive_never_adds_interventions(self, data):
        """naive flags only sign-inverted slots, which always carry c > 0."""
        truths, _ = data
        slots = sum(1 for t in truths for c in t.corrections if c > 0)
        if slots == 0:
            return
        estimates = [metrics.naive_estimate(observe(t)) for t in truths]
        assert metrics.added_interventions(truths, estimates) == 0.0


def test_format_report_table_layout():
    report = metrics.ReconstructionReport(0.6631, 0.0, 0.6, 0.0, 100, 10)
    text = metrics.format_report_table({"Hourly Aggregation": report})
    lines = text.splitlines()
    assert "Hourly Aggregation" in lines[0]
    assert lines[2].startswith("Lost Corrections")
    assert "66.31%" in lines[2]
    assert [l.split()[0] for l in lines[2:]] == ["Lost", "Added", "Lost", "Added"]
