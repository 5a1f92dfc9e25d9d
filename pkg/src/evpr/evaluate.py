"""Ground-truth association, Recall@1, grouped reporting, significance tests.

Frame positions come from piecewise-linear interpolation of a GPS track at
the frame timestamp (bin t_end). A predicted match is correct when the
great-circle distance between the query and matched reference positions is
within the metric tolerance (default 25 m). Paired comparisons between
method variants use a standard paired t-test.

GPS CSV format: ``t,lat,lon`` per line with the same ``# units=us|s``
header convention as event CSVs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DataError
from .events import US_PER_S, EventBin

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_TOLERANCE_M = 25.0


@dataclass
class GeoTrack:
    """Timestamped GPS samples: t seconds, lat/lon degrees."""

    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray

    def validate(self) -> None:
        if not (len(self.t) == len(self.lat) == len(self.lon)):
            raise DataError("track arrays have mismatched lengths")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise DataError("track timestamps must be strictly increasing")
        if len(self.lat) and (np.abs(self.lat).max() > 90 or np.abs(self.lon).max() > 180):
            raise DataError("coordinates outside valid lat/lon range")

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])


@dataclass
class MatchRecord:
    q_index: int
    q_time: float
    j_index: int
    ref_time: float
    score: float
    distance_m: float
    correct: bool


@dataclass
class EvalReport:
    """Recall@1 plus per-query records and optional method comparisons."""

    matches: list[MatchRecord]
    n_queries: int
    n_correct: int
    tolerance_m: float
    group: str = ""
    provenance: dict = field(default_factory=dict)
    comparisons: list[dict] = field(default_factory=list)

    @property
    def recall_at_1(self) -> float:
        if self.n_queries == 0:
            return float("nan")
        return self.n_correct / self.n_queries


def parse_track_csv(source) -> GeoTrack:
    """Parse GPS CSV (t,lat,lon) with optional ``# units=us`` header."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if hasattr(source, "read"):
        source = source.read()
        if isinstance(source, bytes):
            source = source.decode("utf-8")
    unit_scale = 1.0
    ts, lats, lons = [], [], []
    for lineno, line in enumerate(source.splitlines(), start=1):
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
        if len(parts) != 3:
            raise DataError(f"line {lineno}: expected t,lat,lon")
        try:
            ts.append(float(parts[0]) * unit_scale)
            lats.append(float(parts[1]))
            lons.append(float(parts[2]))
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
    track = GeoTrack(np.array(ts), np.array(lats), np.array(lons))
    track.validate()
    return track


def load_track(path) -> GeoTrack:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_track_csv(fh.read())


def write_track_csv(track: GeoTrack, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# units=s\n")
        for i in range(len(track.t)):
            fh.write(f"{float(track.t[i])!r},{float(track.lat[i])!r},"
                     f"{float(track.lon[i])!r}\n")


def interpolate_positions(track: GeoTrack, timestamps) -> tuple[np.ndarray, list[int]]:
    """Piecewise-linear lat/lon at each timestamp.

    Returns (positions [n, 2], excluded indices). Timestamps outside the
    track span are excluded (their rows are NaN) and reported; callers
    keep them in recall denominators.
    """
    track.validate()
    if len(track.t) == 0:
        raise DataError("empty GPS track")
    timestamps = np.asarray(timestamps, np.float64)
    t0, t1 = track.span
    inside = (timestamps >= t0) & (timestamps <= t1)
    excluded = [int(i) for i in np.flatnonzero(~inside)]
    positions = np.full((len(timestamps), 2), np.nan)
    positions[inside, 0] = np.interp(timestamps[inside], track.t, track.lat)
    positions[inside, 1] = np.interp(timestamps[inside], track.t, track.lon)
    return positions, excluded


def geo_distance(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Haversine great-circle distance in meters (spherical Earth)."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def geo_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorised haversine over [n, 2] lat/lon arrays (NaN passes through)."""
    lat1, lon1 = np.radians(a[:, 0]), np.radians(a[:, 1])
    lat2, lon2 = np.radians(b[:, 0]), np.radians(b[:, 1])
    s = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(s)))


def recall_at_1(matches, query_positions: np.ndarray, ref_positions: np.ndarray,
                tolerance_m: float = DEFAULT_TOLERANCE_M,
                query_timestamps=None, ref_timestamps=None) -> EvalReport:
    """Score matches against ground truth.

    ``matches`` is the (q, j, score) list from argmax selection. Queries
    whose position is unavailable (NaN row) count as incorrect but stay in
    the denominator.
    """
    records = []
    n_correct = 0
    for q, j, score in matches:
        qa = query_positions[q]
        rb = ref_positions[j]
        if np.any(np.isnan(qa)) or np.any(np.isnan(rb)):
            dist = float("nan")
            correct = False
        else:
            dist = geo_distance(qa[0], qa[1], rb[0], rb[1])
            correct = dist <= tolerance_m
        n_correct += correct
        records.append(MatchRecord(
            q_index=q,
            q_time=float(query_timestamps[q]) if query_timestamps is not None else float(q),
            j_index=j,
            ref_time=float(ref_timestamps[j]) if ref_timestamps is not None else float(j),
            score=score,
            distance_m=dist,
            correct=bool(correct),
        ))
    return EvalReport(matches=records, n_queries=len(records),
                      n_correct=n_correct, tolerance_m=tolerance_m)


def paired_t_test(a, b) -> tuple[float, float]:
    """Two-sided paired t-test; returns (t statistic, p-value).

    Conventions: all-zero differences give (0.0, 1.0); zero-variance,
    nonzero-mean differences give (+/-inf, 0.0) — the variance-floor limit.
    """
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal lengths")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs n >= 2")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), df=n - 1)
    return float(t), float(p)


def compare_methods(label_a: str, recalls_a, label_b: str, recalls_b) -> dict:
    """Comparison block for EvalReport: mean recalls plus paired t-test."""
    t, p = paired_t_test(recalls_a, recalls_b)
    return {
        "method_a": label_a,
        "method_b": label_b,
        "mean_recall_a": float(np.mean(recalls_a)),
        "mean_recall_b": float(np.mean(recalls_b)),
        "t": t if math.isfinite(t) else repr(t),
        "p_value": p,
        "n": len(recalls_a),
    }


def bin_travel_stats(track: GeoTrack, bins: list[EventBin]) -> dict:
    """Distance travelled within each bin, plus mean/std across bins."""
    starts = np.array([b.t_start for b in bins])
    ends = np.array([b.t_end for b in bins])
    pos_start, excl_s = interpolate_positions(track, starts)
    pos_end, excl_e = interpolate_positions(track, ends)
    excluded = sorted(set(excl_s) | set(excl_e))
    dists = geo_distances(pos_start, pos_end)
    valid = dists[~np.isnan(dists)]
    return {
        "distances_m": dists,
        "excluded_bins": excluded,
        "mean_m": float(valid.mean()) if len(valid) else float("nan"),
        "std_m": float(valid.std()) if len(valid) else float("nan"),
    }


def _json_float(v: float):
    return "nan" if isinstance(v, float) and math.isnan(v) else v


def emit_report(report: EvalReport, csv_path=None, json_path=None) -> None:
    """Write the per-query CSV and/or the JSON summary."""
    if csv_path is not None:
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("q_index,q_time_us,j_index,ref_time_us,score,distance_m,correct\n")
            for m in report.matches:
                fh.write(f"{m.q_index},{round(m.q_time * US_PER_S)},"
                         f"{m.j_index},{round(m.ref_time * US_PER_S)},"
                         f"{m.score!r},{m.distance_m!r},{int(m.correct)}\n")
    if json_path is not None:
        summary = {
            "recall_at_1": _json_float(report.recall_at_1),
            "tolerance_m": report.tolerance_m,
            "n_queries": report.n_queries,
            "n_correct": report.n_correct,
            "group": report.group,
            "provenance": report.provenance,
            "comparisons": report.comparisons,
        }
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_report_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    if summary.get("recall_at_1") == "nan":
        summary["recall_at_1"] = float("nan")
    return summary
