"""Event stream parsing, filtering, and slicing into bins.

An event is the quadruple (x, y, t, p): pixel column, pixel row, timestamp
in seconds, and polarity in {-1, +1}. Streams are kept as flat numpy arrays
sorted by timestamp; bins are contiguous views selected either by a fixed
event count or by a fixed-duration time window.

Supported on-disk formats:

* Event CSV: one event per line, ``t,x,y,p``. Timestamps are seconds
  (decimal) by default; a comment line ``# units=us`` switches to integer
  microseconds. Polarity may be encoded {-1,1} or {0,1} (0 maps to -1).
  ``#``-prefixed lines are comments.
* Event binary: header = magic ``EVPR``, version u16 (=1), width u16,
  height u16, record count u64; then records of (t u64 microseconds,
  x u16, y u16, p i8), all little-endian.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataError

US_PER_S = 1_000_000

BINARY_MAGIC = b"EVPR"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sHHHQ")
_RECORD = struct.Struct("<QHHb")


class Event(NamedTuple):
    """Single event: pixel (x, y), timestamp t in seconds, polarity p."""

    x: int
    y: int
    t: float
    p: int


@dataclass
class EventStream:
    """Time-sorted event arrays plus sensor geometry.

    Arrays share one length: x/y as uint16, t as float64 seconds, p as
    int8 in {-1, +1}. Timestamps are non-decreasing; ties keep input order.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    sensor_width: int
    sensor_height: int

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.x[i]), int(self.y[i]), float(self.t[i]), int(self.p[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def validate(self) -> None:
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise DataError("event arrays have mismatched lengths")
        if n == 0:
            return
        if self.x.max() >= self.sensor_width or self.y.max() >= self.sensor_height:
            raise DataError("event coordinates outside sensor bounds")
        if not np.all(np.isin(self.p, (-1, 1))):
            raise DataError("polarity outside {-1, +1}")
        if np.any(np.diff(self.t) < 0):
            raise DataError("timestamps not sorted")

    def subset(self, index) -> "EventStream":
        return EventStream(
            self.x[index], self.y[index], self.t[index], self.p[index],
            self.sensor_width, self.sensor_height,
        )


@dataclass
class EventBin:
    """Contiguous group of events with its covering interval.

    For count bins, t_start/t_end are the first/last event timestamps and
    ``partial`` marks a trailing remainder bin with fewer than N events.
    For time bins, t_start/t_end are the window bounds [start, end) and the
    ``index`` keeps the window ordinal even when empty windows in between
    were dropped.
    """

    index: int
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    t_start: float
    t_end: float
    partial: bool = False

    def __len__(self) -> int:
        return len(self.t)

    @property
    def t_last(self) -> float:
        """Timestamp of the most recent event in the bin."""
        if len(self.t) == 0:
            raise DataError("empty bin has no last event")
        return float(self.t[-1])


def make_stream(events, sensor_width: int, sensor_height: int) -> EventStream:
    """Build a sorted EventStream from an iterable of (x, y, t, p) tuples."""
    arr = list(events)
    if not arr:
        return EventStream(
            np.empty(0, np.uint16), np.empty(0, np.uint16),
            np.empty(0, np.float64), np.empty(0, np.int8),
            sensor_width, sensor_height,
        )
    x = np.array([e[0] for e in arr], np.uint16)
    y = np.array([e[1] for e in arr], np.uint16)
    t = np.array([e[2] for e in arr], np.float64)
    p = np.array([e[3] for e in arr], np.int8)
    order = np.argsort(t, kind="stable")
    stream = EventStream(x[order], y[order], t[order], p[order],
                         sensor_width, sensor_height)
    stream.validate()
    return stream


def _map_polarity(raw: int, where: str) -> int:
    if raw in (-1, 1):
        return raw
    if raw == 0:
        return -1
    raise DataError(f"{where}: polarity {raw} not in {{-1, 0, +1}}")


def parse_events_csv(source, sensor_width: int, sensor_height: int) -> EventStream:
    """Parse the event CSV format into a sorted, bounds-checked stream.

    ``source`` is a text-mode file object, bytes, or str. Malformed records
    raise DataError with the offending line number.
    """
    if isinstance(source, bytes):
        source = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        source = io.StringIO(source)

    unit_scale = 1.0  # seconds by default
    xs: list[int] = []
    ys: list[int] = []
    ts: list[float] = []
    ps: list[int] = []
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            directive = line[1:].strip().replace(" ", "")
            if directive == "units=us":
                unit_scale = 1.0 / US_PER_S
            elif directive == "units=s":
                unit_scale = 1.0
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise DataError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            t = float(parts[0]) * unit_scale
            x = int(parts[1])
            y = int(parts[2])
            p_raw = int(parts[3])
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
        if t < 0:
            raise DataError(f"line {lineno}: negative timestamp {t}")
        if not (0 <= x < sensor_width and 0 <= y < sensor_height):
            raise DataError(
                f"line {lineno}: coordinate ({x}, {y}) outside "
                f"{sensor_width}x{sensor_height} sensor"
            )
        xs.append(x)
        ys.append(y)
        ts.append(t)
        ps.append(_map_polarity(p_raw, f"line {lineno}"))
    return make_stream(zip(xs, ys, ts, ps), sensor_width, sensor_height)


def write_events_csv(stream: EventStream, path) -> None:
    """Write a stream as event CSV with microsecond integer timestamps."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# units=us\n")
        t_us = np.round(stream.t * US_PER_S).astype(np.uint64)
        for i in range(len(stream)):
            fh.write(f"{t_us[i]},{stream.x[i]},{stream.y[i]},{stream.p[i]}\n")


def parse_events_binary(source) -> EventStream:
    """Parse the EVPR binary format; see module docstring for the layout."""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        data = source.read()
    if len(data) < _HEADER.size:
        raise DataError(f"truncated header: {len(data)} bytes")
    magic, version, width, height, count = _HEADER.unpack_from(data, 0)
    if magic != BINARY_MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {BINARY_MAGIC!r}")
    if version != BINARY_VERSION:
        raise DataError(f"unsupported version {version}")
    expected = _HEADER.size + count * _RECORD.size
    if len(data) != expected:
        raise DataError(f"expected {expected} bytes for {count} records, got {len(data)}")
    rec = np.frombuffer(
        data, dtype=np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")]),
        count=count, offset=_HEADER.size,
    )
    t = rec["t"].astype(np.float64) / US_PER_S
    p = rec["p"].astype(np.int8)
    if len(p) and not np.all(np.isin(p, (-1, 0, 1))):
        raise DataError("binary polarity outside {-1, 0, +1}")
    p = np.where(p == 0, -1, p).astype(np.int8)
    if len(rec) and (rec["x"].max() >= width or rec["y"].max() >= height):
        raise DataError("binary event coordinates outside header dims")
    order = np.argsort(t, kind="stable")
    return EventStream(
        rec["x"][order].copy(), rec["y"][order].copy(), t[order], p[order],
        int(width), int(height),
    )


def write_events_binary(stream: EventStream, path) -> None:
    """Write a stream in the EVPR binary format."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(BINARY_MAGIC, BINARY_VERSION,
                              stream.sensor_width, stream.sensor_height,
                              len(stream)))
        rec = np.empty(len(stream), dtype=np.dtype(
            [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")]))
        rec["t"] = np.round(stream.t * US_PER_S).astype(np.uint64)
        rec["x"] = stream.x
        rec["y"] = stream.y
        rec["p"] = stream.p
        fh.write(rec.tobytes())


def parse_events(source, fmt: str, sensor_width: int = 0, sensor_height: int = 0) -> EventStream:
    """Dispatch on format tag: 'csv' (needs sensor dims) or 'binary'."""
    if fmt == "csv":
        if sensor_width <= 0 or sensor_height <= 0:
            raise DataError("csv parsing requires positive sensor dims")
        return parse_events_csv(source, sensor_width, sensor_height)
    if fmt == "binary":
        return parse_events_binary(source)
    raise DataError(f"unknown event format {fmt!r}")


def load_events(path, sensor_width: int = 0, sensor_height: int = 0) -> EventStream:
    """Load events from a file, sniffing binary magic vs CSV text."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        fh.seek(0)
        if head == BINARY_MAGIC:
            return parse_events_binary(fh)
        return parse_events_csv(fh.read().decode("utf-8"), sensor_width, sensor_height)


def slice_by_count(stream: EventStream, n: int) -> list[EventBin]:
    """Slice into bins of exactly ``n`` events by stream order.

    Bin i holds the events with ordinal indices [i*n, (i+1)*n). A trailing
    bin with fewer than n events is kept and flagged ``partial`` so callers
    can filter it; concatenating all bins reproduces the stream.
    """
    if n < 1:
        raise ValueError(f"events-per-bin must be >= 1, got {n}")
    bins: list[EventBin] = []
    total = len(stream)
    for i in range(0, (total + n - 1) // n):
        lo, hi = i * n, min((i + 1) * n, total)
        sub = slice(lo, hi)
        bins.append(EventBin(
            index=i,
            x=stream.x[sub], y=stream.y[sub], t=stream.t[sub], p=stream.p[sub],
            t_start=float(stream.t[lo]), t_end=float(stream.t[hi - 1]),
            partial=(hi - lo) < n,
        ))
    return bins


def slice_by_time(stream: EventStream, delta_t: float, t0: float | None = None) -> list[EventBin]:
    """Slice into fixed-duration windows [t0 + i*dt, t0 + (i+1)*dt).

    Windows containing no events are omitted from the output, but the
    ``index`` field of each emitted bin keeps the window ordinal i so the
    temporal grid stays recoverable. t_start/t_end are the window bounds.
    """
    if delta_t <= 0:
        raise ValueError(f"delta_t must be > 0, got {delta_t}")
    if len(stream) == 0:
        return []
    if t0 is None:
        t0 = float(stream.t[0])
    elif t0 > stream.t[0]:
        raise ValueError(f"t0={t0} is after the first event at t={stream.t[0]}")

    idx = np.floor((stream.t - t0) / delta_t).astype(np.int64)
    # Guard half-open boundaries against float rounding: an event computed
    # into window i must satisfy t < t0 + (i+1)*dt, else it belongs to i+1.
    idx[stream.t >= t0 + (idx + 1) * delta_t] += 1
    idx[stream.t < t0 + idx * delta_t] -= 1

    bins: list[EventBin] = []
    boundaries = np.flatnonzero(np.diff(idx)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(stream)]))
    for lo, hi in zip(starts, ends):
        i = int(idx[lo])
        sub = slice(lo, hi)
        bins.append(EventBin(
            index=i,
            x=stream.x[sub], y=stream.y[sub], t=stream.t[sub], p=stream.p[sub],
            t_start=t0 + i * delta_t, t_end=t0 + (i + 1) * delta_t,
        ))
    return bins


def filter_hot_pixels(stream: EventStream, rate_multiple: float = 10.0) -> EventStream:
    """Drop all events from pixels firing far above the mean active-pixel rate.

    A pixel is hot when its total event count exceeds rate_multiple times
    the mean count over pixels with at least one event. Applied once per
    traverse; deterministic.
    """
    if rate_multiple <= 0:
        raise ValueError(f"rate_multiple must be > 0, got {rate_multiple}")
    if len(stream) == 0:
        return stream
    flat = stream.y.astype(np.int64) * stream.sensor_width + stream.x.astype(np.int64)
    counts = np.bincount(flat)
    active = counts[counts > 0]
    threshold = rate_multiple * active.mean()
    keep = counts[flat] <= threshold
    return stream.subset(keep)
