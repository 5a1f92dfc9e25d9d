import io

import numpy as np
import pytest

from evpr.errors import DataError
from evpr.events import (
    EventStream,
    filter_hot_pixels,
    make_stream,
    parse_events,
    parse_events_binary,
    parse_events_csv,
    slice_by_count,
    slice_by_time,
    write_events_binary,
    write_events_csv,
)


def random_stream(rng, n, width=32, height=24, t_max=10.0):
    t = np.sort(rng.uniform(0, t_max, n))
    return EventStream(
        rng.integers(0, width, n).astype(np.uint16),
        rng.integers(0, height, n).astype(np.uint16),
        t,
        rng.choice(np.array([-1, 1], np.int8), n),
        width, height,
    )


class TestParseCsv:
    def test_single_line(self):
        stream = parse_events_csv("0.000001,5,7,1\n", 10, 10)
        assert len(stream) == 1
        e = stream[0]
        assert (e.x, e.y, e.p) == (5, 7, 1)
        assert e.t == pytest.approx(1e-6)

    def test_empty_source(self):
        stream = parse_events_csv("", 10, 10)
        assert len(stream) == 0

    def test_shuffled_timestamps_sorted(self):
        lines = "0.3,1,1,1\n0.1,2,2,0\n0.2,3,3,1\n"
        stream = parse_events_csv(lines, 10, 10)
        # reference: sort the records by t with python's sort
        expected = sorted([(0.3, 1, 1, 1), (0.1, 2, 2, -1), (0.2, 3, 3, 1)])
        assert list(stream.t) == [r[0] for r in expected]
        assert list(stream.x) == [r[1] for r in expected]

    def test_microsecond_units_header(self):
        stream = parse_events_csv("# units=us\n1000000,0,0,1\n", 4, 4)
        assert stream.t[0] == pytest.approx(1.0)

    def test_zero_polarity_maps_to_minus_one(self):
        stream = parse_events_csv("0.1,0,0,0\n", 4, 4)
        assert stream.p[0] == -1

    def test_malformed_record_reports_line(self):
        with pytest.raises(DataError, match="line 2"):
            parse_events_csv("0.1,0,0,1\n0.2,oops,0,1\n", 4, 4)

    def test_out_of_bounds_coordinate(self):
        with pytest.raises(DataError, match="outside"):
            parse_events_csv("0.1,5,0,1\n", 4, 4)

    def test_bad_polarity(self):
        with pytest.raises(DataError, match="polarity"):
            parse_events_csv("0.1,0,0,3\n", 4, 4)

    def test_comments_ignored(self):
        stream = parse_events_csv("# a comment\n0.1,1,1,1\n", 4, 4)
        assert len(stream) == 1

    def test_dispatch(self):
        stream = parse_events("0.1,1,1,1\n", "csv", 4, 4)
        assert len(stream) == 1
        with pytest.raises(DataError):
            parse_events("", "nope", 4, 4)


class TestBinaryFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        stream = random_stream(rng, 500)
        # quantize to microseconds so the round trip is exact
        stream.t = np.round(stream.t * 1e6) / 1e6
        path = tmp_path / "events.evpr"
        write_events_binary(stream, path)
        back = parse_events_binary(open(path, "rb"))
        assert back.sensor_width == 32 and back.sensor_height == 24
        np.testing.assert_array_equal(back.x, stream.x)
        np.testing.assert_array_equal(back.y, stream.y)
        np.testing.assert_array_equal(back.p, stream.p)
        np.testing.assert_allclose(back.t, stream.t, atol=1e-12)

    def test_bad_magic(self):
        with pytest.raises(DataError, match="magic"):
            parse_events_binary(b"NOPE" + bytes(14))

    def test_truncated(self):
        import struct
        header = struct.pack("<4sHHHQ", b"EVPR", 1, 4, 4, 10)
        with pytest.raises(DataError, match="expected"):
            parse_events_binary(header)

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        stream = random_stream(rng, 100)
        stream.t = np.round(stream.t * 1e6) / 1e6
        path = tmp_path / "events.csv"
        write_events_csv(stream, path)
        back = parse_events_csv(open(path).read(), 32, 24)
        np.testing.assert_allclose(back.t, stream.t, atol=1e-12)
        np.testing.assert_array_equal(back.x, stream.x)


class TestSliceByCount:
    def test_sizes_with_partial(self):
        rng = np.random.default_rng(3)
        stream = random_stream(rng, 10)
        bins = slice_by_count(stream, 4)
        assert [len(b) for b in bins] == [4, 4, 2]
        assert [b.partial for b in bins] == [False, False, True]
        assert [b.index for b in bins] == [0, 1, 2]

    def test_exact_division_no_partial(self):
        rng = np.random.default_rng(4)
        stream = random_stream(rng, 8)
        bins = slice_by_count(stream, 4)
        assert [len(b) for b in bins] == [4, 4]
        assert not any(b.partial for b in bins)

    def test_matches_bruteforce_chunking(self):
        rng = np.random.default_rng(5)
        stream = random_stream(rng, 1000)
        bins = slice_by_count(stream, 7)
        # independent oracle: chunk the sorted records with plain slicing
        records = list(zip(stream.t, stream.x, stream.y, stream.p))
        chunks = [records[i:i + 7] for i in range(0, len(records), 7)]
        assert len(bins) == len(chunks)
        for b, chunk in zip(bins, chunks):
            assert list(b.t) == [r[0] for r in chunk]
            assert list(b.x) == [r[1] for r in chunk]

    def test_partition_property(self):
        rng = np.random.default_rng(6)
        for n in (1, 3, 10, 997):
            stream = random_stream(rng, 500)
            bins = slice_by_count(stream, n)
            t_cat = np.concatenate([b.t for b in bins])
            np.testing.assert_array_equal(t_cat, stream.t)
            assert all(len(b) == n for b in bins if not b.partial)

    def test_zero_n_rejected(self):
        rng = np.random.default_rng(7)
        with pytest.raises(ValueError):
            slice_by_count(random_stream(rng, 10), 0)

    def test_bin_time_bounds(self):
        rng = np.random.default_rng(8)
        stream = random_stream(rng, 20)
        for b in slice_by_count(stream, 6):
            assert b.t_start == b.t[0]
            assert b.t_end == b.t[-1]


class TestSliceByTime:
    def test_consecutive_windows(self):
        stream = make_stream([(1, 1, 0.05, 1), (2, 2, 0.15, 1), (3, 3, 0.25, -1)], 8, 8)
        bins = slice_by_time(stream, 0.1, 0.0)
        assert [b.index for b in bins] == [0, 1, 2]
        assert [len(b) for b in bins] == [1, 1, 1]
        assert bins[1].t_start == pytest.approx(0.1)
        assert bins[1].t_end == pytest.approx(0.2)

    def test_empty_window_omitted_index_preserved(self):
        stream = make_stream([(1, 1, 0.05, 1), (2, 2, 0.25, 1)], 8, 8)
        bins = slice_by_time(stream, 0.1, 0.0)
        assert [b.index for b in bins] == [0, 2]

    def test_matches_floor_oracle(self):
        rng = np.random.default_rng(9)
        stream = random_stream(rng, 2000, t_max=30.0)
        t0 = 0.0
        dt = 0.5
        bins = slice_by_time(stream, dt, t0)
        # oracle: per-event window index via floor
        by_window = {}
        for e in stream:
            i = int((e.t - t0) // dt)
            # guard the same boundary rule
            if e.t >= t0 + (i + 1) * dt:
                i += 1
            if e.t < t0 + i * dt:
                i -= 1
            by_window.setdefault(i, []).append(e.t)
        assert sorted(by_window) == [b.index for b in bins]
        for b in bins:
            assert list(b.t) == by_window[b.index]

    def test_interval_law(self):
        rng = np.random.default_rng(10)
        stream = random_stream(rng, 1500, t_max=12.0)
        dt = 0.3
        bins = slice_by_time(stream, dt, 0.0)
        total = 0
        for b in bins:
            assert np.all(b.t >= b.t_start - 1e-15)
            assert np.all(b.t < b.t_end)
            total += len(b)
        assert total == len(stream)

    def test_invalid_args(self):
        rng = np.random.default_rng(11)
        stream = random_stream(rng, 10)
        with pytest.raises(ValueError):
            slice_by_time(stream, 0.0, 0.0)
        with pytest.raises(ValueError):
            slice_by_time(stream, 0.1, stream.t[0] + 1.0)

    def test_empty_stream(self):
        stream = make_stream([], 8, 8)
        assert slice_by_time(stream, 0.1, 0.0) == []


class TestHotPixels:
    def test_uniform_stream_unchanged(self):
        events = [(x, y, 0.01 * (x + 8 * y), 1) for x in range(8) for y in range(8)]
        stream = make_stream(events, 8, 8)
        out = filter_hot_pixels(stream, 10.0)
        assert len(out) == len(stream)

    def test_hot_pixel_removed(self):
        # one pixel fires 1000x, 99 pixels fire once: mean = 10.99,
        # threshold = 54.95, so only the hot pixel goes
        events = [(0, 0, i * 1e-4, 1) for i in range(1000)]
        k = 0
        for x in range(10):
            for y in range(10):
                if (x, y) == (0, 0) or k >= 99:
                    continue
                events.append((x, y, 0.2 + k * 1e-4, -1))
                k += 1
        stream = make_stream(events, 10, 10)
        out = filter_hot_pixels(stream, 5.0)
        assert len(out) == 99
        assert not np.any((out.x == 0) & (out.y == 0))

    def test_empty_stream(self):
        stream = make_stream([], 8, 8)
        assert len(filter_hot_pixels(stream, 5.0)) == 0

    def test_idempotent_on_uniform(self):
        events = [(x, y, 0.01 * (x + 8 * y), 1) for x in range(8) for y in range(8)]
        stream = make_stream(events, 8, 8)
        once = filter_hot_pixels(stream, 10.0)
        twice = filter_hot_pixels(once, 10.0)
        np.testing.assert_array_equal(once.t, twice.t)

    def test_bad_rate(self):
        stream = make_stream([(0, 0, 0.0, 1)], 4, 4)
        with pytest.raises(ValueError):
            filter_hot_pixels(stream, 0.0)
