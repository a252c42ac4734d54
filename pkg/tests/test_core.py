from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viewrecon import core
from viewrecon.core import (
    CorrectionEstimate,
    GroundTruthSeries,
    Resolution,
    ViewSeries,
    aggregate_to_hour,
    hour_of_day,
    observe,
    slot_start,
)

from conftest import make_truth

PUB = datetime(2022, 2, 3, 10, 30)


class TestTypes:
    def test_view_series_accepts_negative_deltas(self):
        s = ViewSeries("v", "c", PUB, Resolution.HOUR, (10, -4, 8))
        assert s.deltas == (10, -4, 8)

    def test_running_total_cannot_go_negative(self):
        with pytest.raises(ValueError, match="negative"):
            ViewSeries("v", "c", PUB, Resolution.HOUR, (3, -5))

    def test_hourly_length_cap(self):
        with pytest.raises(ValueError, match="exceeds"):
            ViewSeries("v", "c", PUB, Resolution.HOUR, (1,) * 171)
        # 170 slots is fine
        ViewSeries("v", "c", PUB, Resolution.HOUR, (1,) * 170)

    def test_five_min_length_cap(self):
        ViewSeries("v", "c", PUB, Resolution.FIVE_MIN, (1,) * 2040)
        with pytest.raises(ValueError):
            ViewSeries("v", "c", PUB, Resolution.FIVE_MIN, (1,) * 2041)

    def test_missing_slots_allowed(self):
        s = ViewSeries("v", "c", PUB, Resolution.HOUR, (5, None, 3))
        arr = s.deltas_array()
        assert np.isnan(arr[1]) and arr[0] == 5

    def test_truth_requires_equal_lengths(self):
        with pytest.raises(ValueError, match="differ in length"):
            make_truth([1, 2], [0])

    def test_truth_rejects_negative_counts(self):
        with pytest.raises(ValueError):
            make_truth([1, -2], [0, 0])
        with pytest.raises(ValueError):
            make_truth([1, 2], [0, -1])

    def test_estimate_rejects_negative(self):
        with pytest.raises(ValueError):
            CorrectionEstimate("v", (-1,))

    def test_intervention_positive_magnitude(self):
        with pytest.raises(ValueError):
            core.InterventionEvent("v", 3, 0)


class TestTimeArithmetic:
    def test_slot_start_anchors_to_publication_hour(self):
        assert slot_start(PUB, Resolution.HOUR, 0) == datetime(2022, 2, 3, 10, 0)
        assert slot_start(PUB, Resolution.HOUR, 3) == datetime(2022, 2, 3, 13, 0)
        assert slot_start(PUB, Resolution.FIVE_MIN, 13) == datetime(2022, 2, 3, 11, 5)

    def test_hour_of_day_wraps(self):
        # published 2021-01-01T10:00, hour 7 -> 17:00
        pub = datetime(2021, 1, 1, 10, 0)
        assert hour_of_day(pub, 7) == 17
        assert hour_of_day(pub, 14) == 0
        assert hour_of_day(pub, 14, shift=2) == 2


class TestObserve:
    def test_componentwise_subtraction(self):
        truth = make_truth([10, 0], [0, 4])
        assert observe(truth).deltas == (10, -4)

    def test_zero_corrections_identity(self):
        truth = make_truth([5, 6, 7], [0, 0, 0])
        assert observe(truth).deltas == (5, 6, 7)

    def test_fully_concealed_correction(self):
        truth = make_truth([3], [3])
        assert observe(truth).deltas == (0,)

    def test_metadata_copied(self):
        truth = make_truth([1], [0], video_id="abc", channel_id="ch9")
        obs = observe(truth)
        assert (obs.video_id, obs.channel_id, obs.published_at, obs.resolution) == (
            "abc",
            "ch9",
            truth.published_at,
            Resolution.HOUR,
        )


class TestAggregateToHour:
    def test_sums_constants(self):
        truth = make_truth([1] * 12, [0] * 12, resolution=Resolution.FIVE_MIN)
        hourly = aggregate_to_hour(truth)
        assert hourly.views == (12,)
        assert hourly.corrections == (0,)

    def test_single_event_preserved(self):
        corr = [5] + [0] * 11
        truth = make_truth([0] * 12, corr, resolution=Resolution.FIVE_MIN)
        hourly = aggregate_to_hour(truth)
        assert hourly.views == (0,) and hourly.corrections == (5,)

    def test_arithmetic_sums(self):
        # views 1..24 over two hours: 78 = sum(1..12), 222 = sum(13..24)
        truth = make_truth(list(range(1, 25)), [0] * 24, resolution=Resolution.FIVE_MIN)
        assert aggregate_to_hour(truth).views == (78, 222)

    def test_partial_hour_zero_padded(self):
        truth = make_truth([1] * 15, [0] * 15, resolution=Resolution.FIVE_MIN)
        hourly = aggregate_to_hour(truth)
        assert hourly.views == (12, 3)

    def test_rejects_hourly_input(self):
        with pytest.raises(ValueError, match="5min"):
            aggregate_to_hour(make_truth([1], [0]))

    def test_published_at_unchanged(self):
        truth = make_truth([1] * 12, [0] * 12, resolution=Resolution.FIVE_MIN)
        assert aggregate_to_hour(truth).published_at == truth.published_at


class TestInterventions:
    def test_hourly_events(self):
        truth = make_truth([10, 0, 5], [0, 4, 2])
        events = core.interventions(truth)
        assert [(e.hour_index, e.magnitude) for e in events] == [(1, 4), (2, 2)]


counts = st.lists(st.integers(min_value=0, max_value=50), min_size=1, max_size=48)


@st.composite
def truth_series(draw):
    views = draw(counts)
    corrections = []
    balance = 0  # corrections can never outrun the views accumulated so far
    for v in views:
        c = draw(st.integers(0, min(30, balance + v)))
        corrections.append(c)
        balance += v - c
    res = draw(st.sampled_from([Resolution.HOUR, Resolution.FIVE_MIN]))
    return make_truth(views, corrections, resolution=res)


class TestProperties:
    @given(truth_series())
    @settings(max_examples=60, deadline=None)
    def test_observe_round_trips(self, truth):
        obs = observe(truth)
        for v, c, d in zip(truth.views, truth.corrections, obs.deltas):
            assert v - d == c

    @given(truth_series())
    @settings(max_examples=60, deadline=None)
    def test_aggregate_commutes_with_observe(self, truth):
        if truth.resolution is not Resolution.FIVE_MIN:
            return
        hourly_then_observe = observe(aggregate_to_hour(truth))
        observed = observe(truth)
        n = len(observed)
        hours = (n + 11) // 12
        padded = list(observed.deltas) + [0] * (hours * 12 - n)
        manual = tuple(sum(padded[i * 12 : (i + 1) * 12]) for i in range(hours))
        assert hourly_then_observe.deltas == manual

    @given(truth_series())
    @settings(max_examples=60, deadline=None)
    def test_truth_serialization_round_trip(self, truth):
        assert core.obj_to_truth(core.truth_to_obj(truth)) == truth

    @given(truth_series())
    @settings(max_examples=60, deadline=None)
    def test_series_serialization_round_trip(self, truth):
        s = observe(truth)
        assert core.obj_to_series(core.series_to_obj(s)) == s

    @given(st.lists(st.integers(0, 99), min_size=1, max_size=30))
    @settings(max_examples=40, deadline=None)
    def test_estimate_serialization_round_trip(self, values):
        e = CorrectionEstimate("v1", tuple(values))
        assert core.obj_to_estimate(core.estimate_to_obj(e)) == e


class TestJsonlFiles:
    def test_round_trip_files(self, tmp_path):
        truths = [
            make_truth([3, 4], [1, 0], video_id="a"),
            make_truth([9], [9], video_id="b"),
        ]
        path = tmp_path / "truth.jsonl"
        core.write_ground_truth(path, truths)
        assert core.read_ground_truth(path) == truths
        # LF endings, one object per line
        raw = path.read_bytes()
        assert raw.count(b"\n") == 2 and b"\r" not in raw

    def test_observed_with_missing_round_trip(self, tmp_path):
        s = ViewSeries("v", "c", PUB, Resolution.HOUR, (5, None, 3))
        path = tmp_path / "obs.jsonl"
        core.write_view_series(path, [s])
        assert core.read_view_series(path) == [s]

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"video_id": "a"}\nnot json\n')
        with pytest.raises(ValueError, match="bad.jsonl:2"):
            list(core.read_jsonl(path))
