from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgenav.errors import OutOfRangeError, TraceFormatError, ValidationError
from edgenav.traces import (
    BandwidthParams,
    BandwidthTrace,
    RouteSpec,
    RouteTrace,
    Segment,
    generate_bandwidth,
    generate_route,
    load_bandwidth_trace,
    load_route_trace,
    sample_bandwidth,
    save_bandwidth_trace,
    save_route_trace,
)


def write(path, text):
    path.write_text(text)
    return path


class TestBandwidthLoad:
    def test_two_rows(self, tmp_path):
        tr = load_bandwidth_trace(write(tmp_path / "b.csv", "time_s,bandwidth_kbps\n0,5000\n1,3000\n"))
        assert len(tr) == 2
        assert tr.kbps.tolist() == [5000.0, 3000.0]

    def test_empty_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_bandwidth_trace(write(tmp_path / "b.csv", ""))

    def test_header_only(self, tmp_path):
        with pytest.raises(ValidationError):
            load_bandwidth_trace(write(tmp_path / "b.csv", "time_s,bandwidth_kbps\n"))

    def test_non_monotone(self, tmp_path):
        with pytest.raises(ValidationError):
            load_bandwidth_trace(write(tmp_path / "b.csv", "time_s,bandwidth_kbps\n1,100\n0,200\n"))

    def test_bad_header_reports_line(self, tmp_path):
        with pytest.raises(TraceFormatError) as exc:
            load_bandwidth_trace(write(tmp_path / "b.csv", "t,bw\n0,1\n"))
        assert exc.value.line == 1

    def test_non_numeric_reports_line(self, tmp_path):
        with pytest.raises(TraceFormatError) as exc:
            load_bandwidth_trace(write(tmp_path / "b.csv", "time_s,bandwidth_kbps\n0,1\n1,abc\n"))
        assert exc.value.line == 3

    def test_non_positive_bandwidth(self, tmp_path):
        with pytest.raises(ValidationError):
            load_bandwidth_trace(write(tmp_path / "b.csv", "time_s,bandwidth_kbps\n0,0\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_bandwidth_trace(tmp_path / "nope.csv")

    def test_round_trip(self, tmp_path):
        tr = generate_bandwidth("random-walk", BandwidthParams(duration=50, initial=800, step=90), 3)
        save_bandwidth_trace(tr, tmp_path / "b.csv")
        back = load_bandwidth_trace(tmp_path / "b.csv")
        assert np.array_equal(back.times, tr.times) and np.array_equal(back.kbps, tr.kbps)

    def test_immutable(self):
        tr = BandwidthTrace(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            tr.kbps[0] = 5.0


class TestSampling:
    trace = BandwidthTrace(np.array([0.0, 10.0]), np.array([5000.0, 3000.0]))

    def test_step_hold(self):
        assert sample_bandwidth(self.trace, 5.0) == 5000.0

    def test_boundary_takes_new_value(self):
        assert sample_bandwidth(self.trace, 10.0) == 3000.0

    def test_hold_after_end(self):
        assert sample_bandwidth(self.trace, 99.0) == 3000.0

    def test_before_start(self):
        with pytest.raises(OutOfRangeError):
            sample_bandwidth(self.trace, -0.5)

    @given(st.lists(st.floats(1.0, 1e5), min_size=1, max_size=30), st.floats(0.0, 100.0))
    def test_value_is_latest_sample_at_or_before(self, values, t):
        times = np.arange(len(values), dtype=float) * 2.0
        tr = BandwidthTrace(times, np.array(values))
        expected = values[max(i for i in range(len(values)) if times[i] <= t)]
        assert sample_bandwidth(tr, t) == expected


class TestRouteGeneration:
    def test_straight_is_zero(self):
        r = generate_route(RouteSpec(10.0, (Segment("straight", 10.0),)))
        assert np.all(r.theta == 0.0)

    def test_determinism(self):
        spec = RouteSpec(20.0, (Segment("straight", 8.0), Segment("turn", 12.0, 1.0)), noise_scale=0.05, seed=4)
        a, b = generate_route(spec), generate_route(spec)
        assert np.array_equal(a.theta, b.theta) and np.array_equal(a.p, b.p)

    def test_turn_peak(self):
        spec = RouteSpec(10.0, (Segment("turn", 10.0, math.pi / 2),), noise_scale=0.0)
        r = generate_route(spec)
        assert r.theta.max() == pytest.approx(math.pi / 2, abs=1e-3)

    def test_turn_peak_with_noise(self):
        spec = RouteSpec(10.0, (Segment("turn", 10.0, math.pi / 2),), noise_scale=0.01, seed=1)
        r = generate_route(spec)
        assert abs(r.theta.max() - math.pi / 2) < 0.05

    def test_segment_lengths_must_sum(self):
        with pytest.raises(ValidationError):
            generate_route(RouteSpec(10.0, (Segment("straight", 4.0),)))

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            generate_route(RouteSpec(4.0, (Segment("loop", 4.0),)))

    def test_collision_rate_tracks_steering(self):
        r = generate_route(RouteSpec(10.0, (Segment("turn", 10.0, math.pi / 3),)))
        assert r.p[np.argmax(np.abs(r.theta))] > r.p[0]
        assert np.all((r.p >= 0) & (r.p <= 1))

    def test_round_trip(self, tmp_path):
        r = generate_route(RouteSpec(6.0, (Segment("turn", 6.0, 0.7, 0.5),), noise_scale=0.02, seed=2))
        save_route_trace(r, tmp_path / "r.csv")
        back = load_route_trace(tmp_path / "r.csv")
        assert np.array_equal(back.theta, r.theta) and np.array_equal(back.complexity, r.complexity)
        assert back.frame_period == pytest.approx(r.frame_period)

    def test_route_without_complexity_column(self, tmp_path):
        path = write(tmp_path / "r.csv", "time_s,theta_gt_rad,p_gt\n0,0.1,0.2\n0.05,0.2,0.3\n")
        r = load_route_trace(path)
        assert np.all(r.complexity == 0.0)

    def test_route_rejects_out_of_range_angle(self):
        with pytest.raises(ValidationError):
            RouteTrace(np.array([0.0, 0.05]), np.array([0.0, 4.0]), np.array([0.1, 0.1]))


class TestFrameIndex:
    route = RouteTrace(np.arange(5) * 0.05, np.arange(5) * 0.1, np.full(5, 0.2))

    def test_exact_frame(self):
        assert self.route.frame_index(0.10) == 2

    def test_midpoint_goes_to_later_frame(self):
        # binary-exact grid so the midpoint is representable
        r = RouteTrace(np.arange(5) * 0.25, np.zeros(5), np.zeros(5), frame_period=0.25)
        assert r.frame_index(0.375) == 2

    def test_nearest(self):
        assert self.route.frame_index(0.06) == 1

    def test_beyond_duration(self):
        with pytest.raises(OutOfRangeError):
            self.route.frame_index(1.0)


class TestBandwidthSynthesis:
    def test_zero_step_random_walk_is_constant(self):
        tr = generate_bandwidth("random-walk", BandwidthParams(duration=30, initial=700, step=0), 1)
        assert np.all(tr.kbps == 700.0)

    def test_single_level_markov_is_constant(self):
        tr = generate_bandwidth("markov-levels", BandwidthParams(duration=30, levels=(2500.0,)), 1)
        assert np.all(tr.kbps == 2500.0)

    @pytest.mark.parametrize("kind", ["random-walk", "markov-levels"])
    def test_same_seed_same_trace(self, kind):
        p = BandwidthParams(duration=60, levels=(1000.0, 3000.0), jitter=0.1, initial=900, step=100)
        assert np.array_equal(generate_bandwidth(kind, p, 9).kbps, generate_bandwidth(kind, p, 9).kbps)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.0, 500.0))
    def test_clamped_to_range(self, seed, step):
        p = BandwidthParams(duration=100, initial=600, step=step, min_kbps=100, max_kbps=1000)
        tr = generate_bandwidth("random-walk", p, seed)
        assert tr.kbps.min() >= 100 and tr.kbps.max() <= 1000

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            generate_bandwidth("lte", BandwidthParams(), 0)
