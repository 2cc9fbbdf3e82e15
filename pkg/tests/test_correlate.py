import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chipent.correlate import (CoincidenceHistogram, brute_force_histogram, build_histogram,
                               build_histogram_sharded, car, dumps_json, expected_accidentals,
                               metrics_record, peak_metrics, write_histogram_csv)
from chipent.errors import ConfigError, EmptyHistogramError, UnsortedStreamError
from chipent.tagsim import SIGNAL, TagStream, make_rng, poisson_times

sorted_tags = st.lists(st.integers(0, 5000), max_size=80).map(sorted).map(lambda x: np.array(x, np.int64))


def independent(rate, duration, seed):
    r = make_rng(seed)
    a = np.floor(poisson_times(rate, 0, duration * 1e12, r)).astype(np.int64)
    b = np.floor(poisson_times(rate, 0, duration * 1e12, r)).astype(np.int64)
    return a, b


def test_single_pair():
    h = build_histogram([0], [100], 1, (-1000, 1000))
    assert h.counts.sum() == 1
    assert h.counts[h.bin_of(100)] == 1
    assert h.edges[h.bin_of(100)] == 100


def test_half_open_bins():
    h = build_histogram([0], [-10, 0, 9], 10, (-10, 10))
    np.testing.assert_array_equal(h.counts, [1, 2])
    assert build_histogram([0, 0], [0], 10, (-10, 10)).counts[1] == 2
    assert build_histogram([0], [10], 10, (-10, 10)).counts.sum() == 0


def test_length_invariant():
    h = build_histogram([], [], 7, (-700, 700))
    assert h.counts.size == 200


@pytest.mark.parametrize("w, rng_", [(0, (-10, 10)), (3, (-10, 10)), (1, (5, 5))])
def test_bad_binning(w, rng_):
    with pytest.raises(ConfigError):
        build_histogram([0], [1], w, rng_)


def test_unsorted_rejected():
    with pytest.raises(UnsortedStreamError):
        build_histogram([5, 1], [1, 2])


def test_matches_brute_force_random():
    r = np.random.default_rng(0)
    for _ in range(50):
        span = int(r.integers(100, 50_000))
        a = np.sort(r.integers(0, span, r.integers(0, 500)))
        b = np.sort(r.integers(0, span, r.integers(0, 500)))
        w = int(r.integers(1, 50))
        lo = -int(r.integers(1, 40)) * w
        hi = lo + int(r.integers(1, 80)) * w
        np.testing.assert_array_equal(build_histogram(a, b, w, (lo, hi)).counts,
                                      brute_force_histogram(a, b, w, (lo, hi)))


@settings(max_examples=150, deadline=None)
@given(sorted_tags, sorted_tags, st.integers(1, 40))
def test_matches_brute_force_property(a, b, w):
    np.testing.assert_array_equal(build_histogram(a, b, w, (-40 * w, 40 * w)).counts,
                                  brute_force_histogram(a, b, w, (-40 * w, 40 * w)))


@settings(max_examples=100, deadline=None)
@given(sorted_tags, sorted_tags, st.integers(0, 10**9))
def test_time_shift_invariance(a, b, shift):
    h0 = build_histogram(a, b, 5, (-500, 500)).counts
    h1 = build_histogram(a + shift, b + shift, 5, (-500, 500)).counts
    np.testing.assert_array_equal(h0, h1)


@settings(max_examples=100, deadline=None)
@given(sorted_tags, sorted_tags, st.integers(1, 300))
def test_symmetry(a, b, R):
    ab = build_histogram(a, b, 1, (-R, R + 1)).counts
    ba = build_histogram(b, a, 1, (-R, R + 1)).counts
    np.testing.assert_array_equal(ab, ba[::-1])


def test_self_correlation_matches_oracle():
    r = np.random.default_rng(4)
    a = np.sort(r.integers(0, 200_000, 1000))
    h = build_histogram(a, a, 1, (-2000, 2001)).counts.copy()
    ref = brute_force_histogram(a, a, 1, (-2000, 2001))
    zero = 2000
    h[zero] -= a.size
    ref[zero] -= a.size
    np.testing.assert_array_equal(h, ref)


def test_accidental_rate_law():
    a, b = independent(1e6, 1.0, 11)
    h = build_histogram(a, b, 10, (-200, 200), 1.0)
    expected = 1e6 * 1e6 * 400e-12 * 1.0
    assert expected == pytest.approx(400)
    assert abs(h.counts.sum() - expected) <= 4 * np.sqrt(expected)
    assert expected_accidentals(h, 400) == pytest.approx(a.size * b.size * 400e-12)


@pytest.mark.parametrize("workers", [1, 3])
def test_sharded_equals_direct(workers):
    r = np.random.default_rng(2)
    a = np.sort(r.integers(0, 10**9, 20_000))
    b = np.sort(np.concatenate([a + r.integers(-300, 300, a.size), r.integers(0, 10**9, 5000)]))
    b = b[b >= 0]
    direct = build_histogram(a, b, 4, (-1000, 1000), 1.0)
    sharded = build_histogram_sharded(a, b, 4, (-1000, 1000), 1.0, shard_ps=7_777_777, workers=workers)
    np.testing.assert_array_equal(direct.counts, sharded.counts)
    assert (direct.total_a, direct.total_b) == (sharded.total_a, sharded.total_b)


def test_accepts_tag_streams():
    h = build_histogram(TagStream(SIGNAL, np.array([0])), TagStream(SIGNAL, np.array([5])), 1, (-10, 10))
    assert h.counts.sum() == 1


def test_histograms_add():
    h = build_histogram([0], [5], 1, (-10, 10), 1.0)
    s = h + h
    assert s.counts.sum() == 2 and s.duration == 2.0
    with pytest.raises(ConfigError):
        h + build_histogram([0], [5], 2, (-10, 10), 1.0)


def _gauss_hist(sigma=50.0, n=10**6, bg=0.0):
    x = np.arange(-2000, 2000) + 0.5
    counts = np.rint(n / (sigma * np.sqrt(2 * np.pi)) * np.exp(-x ** 2 / (2 * sigma ** 2)) + bg).astype(np.int64)
    return CoincidenceHistogram(1, (-2000, 2000), counts, 10**6, 10**6, 10.0)


class TestPeakMetrics:
    def test_gaussian_fwhm(self):
        m = peak_metrics(_gauss_hist(), 400)
        assert m.fwhm == pytest.approx(2.3548 * 50, abs=1.0)
        assert m.peak_delay == pytest.approx(0, abs=1)

    def test_fwhm_above_background(self):
        m = peak_metrics(_gauss_hist(bg=100.0), 400)
        assert m.fwhm == pytest.approx(2.3548 * 50, abs=1.5)
        assert m.background_rate_per_bin == pytest.approx(100.0, abs=0.5)

    def test_smoothing_keeps_width(self):
        m = peak_metrics(_gauss_hist(), 400, smooth_ps=31)
        assert m.fwhm == pytest.approx(2.3548 * 50, abs=1.0)

    def test_window_and_counts(self):
        h = _gauss_hist()
        m = peak_metrics(h, 400)
        assert m.peak_window == (m.peak_delay - 200, m.peak_delay + 200)
        assert m.coincidences_in_window == pytest.approx(10**6, rel=1e-3)

    def test_flat_histogram_snr_near_one(self):
        a, b = independent(1e4, 10.0, 3)
        m = peak_metrics(build_histogram(a, b, 10, (-2000, 2000), 10.0), 400)
        assert 0.7 < m.snr < 1.5

    def test_delta_peak_regularised(self):
        counts = np.zeros(400, np.int64)
        counts[200] = 50
        m = peak_metrics(CoincidenceHistogram(10, (-2000, 2000), counts, 50, 50, 1.0), 400)
        assert m.background_in_window == 0
        assert m.snr == 50.0

    def test_empty_raises(self):
        with pytest.raises(EmptyHistogramError):
            peak_metrics(build_histogram([], [], 10, (-100, 100), 1.0))

    def test_given_peak_delay(self):
        m = peak_metrics(_gauss_hist(), 400, peak_delay=100.0)
        assert m.peak_delay == 100.0
        assert m.peak_window == (-100.0, 300.0)


class TestCar:
    def test_independent_streams(self):
        a, b = independent(1e6, 1.0, 5)
        h = build_histogram(a, b, 10, (-2000, 2000), 1.0)
        assert car(h, 400, peak_delay=0.0) == pytest.approx(1.0, abs=0.2)

    def test_duration_invariance(self):
        def one(duration, seed):
            r = make_rng(seed)
            e = poisson_times(2000, 0, duration * 1e12, r)
            a = np.sort(np.concatenate([e, poisson_times(3e5, 0, duration * 1e12, r)]))
            b = np.sort(np.concatenate([e + r.normal(0, 50, e.size), poisson_times(3e5, 0, duration * 1e12, r)]))
            a = np.floor(a).astype(np.int64)
            b = np.floor(np.clip(b, 0, None)).astype(np.int64)
            return car(build_histogram(a, b, 10, (-2000, 2000), duration), 400)

        c1 = [one(1.0, s) for s in range(20)]
        c2 = [one(2.0, 100 + s) for s in range(20)]
        assert np.mean(c1) == pytest.approx(np.mean(c2), rel=0.1)

    def test_zero_accidentals_regularised(self):
        h = build_histogram([0], [5], 1, (-10, 10), 1.0)
        assert car(h, 4) == 1.0


def test_csv_and_json(tmp_path):
    h = _gauss_hist()
    p = tmp_path / "h.csv"
    write_histogram_csv(p, h, ["config_hash=abc seed=1"])
    lines = p.read_text().splitlines()
    assert lines[0] == "# config_hash=abc seed=1"
    assert lines[2] == "delay_ps,counts"
    assert len(lines) == 3 + h.counts.size
    rec = metrics_record(peak_metrics(h), h, 12.0)
    doc = json.loads(dumps_json(rec))
    for key in ("peak_delay_ps", "fwhm_ps", "snr", "car", "rates"):
        assert key in doc
