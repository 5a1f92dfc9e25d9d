"""Event-bin to frame reconstruction and 8-bit rendering.

Two classical reconstructions are provided: per-pixel event counts (with
or without separate polarity channels) and exponentially decaying time
surfaces. Raw frames are rendered to 3-channel 8-bit images via per-channel
tanh compression followed by min-max scaling.

Channel conventions: polarity-aware raw frames store channel 0 = positive
events, channel 1 = negative events. Rendered frames are [3, H, W] in
R, G, B order; polarity-aware sources map positive -> G, negative -> B,
R stays zero; single-channel sources replicate into all three.

Frame interchange file (EVPF): header = magic ``EVPF``, version u16 (=1),
width u16, height u16, frame count u64; per frame: t_start u64 and t_end
u64 (microseconds), then 3*height*width bytes row-major pixel-interleaved
(R, G, B per pixel), then a CRC-32 (zlib) of the per-frame record bytes
(timestamps + pixels). Little-endian throughout.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .events import US_PER_S, EventBin

FRAME_MAGIC = b"EVPF"
FRAME_VERSION = 1
_FRAME_HEADER = struct.Struct("<4sHHHQ")

# Raw-frame channel order for polarity-aware reconstructions.
POLARITY_CHANNELS = (1, -1)


@dataclass
class ReconParams:
    """Reconstruction settings.

    method: one of 'count_polarity', 'count_no_polarity', 'time_surface',
    'external'. lambda_s is the time-surface decay constant in seconds
    (default: half the bin duration when left None). tanh_scale divides
    raw values before tanh in normalize (1.0 = apply tanh to raw counts).
    """

    method: str = "count_polarity"
    lambda_s: float | None = None
    tanh_scale: float = 1.0

    METHODS = ("count_polarity", "count_no_polarity", "time_surface", "external")

    def validate(self) -> None:
        if self.method not in self.METHODS:
            raise ValueError(f"unknown reconstruction method {self.method!r}")
        if self.lambda_s is not None and self.lambda_s <= 0:
            raise ValueError("lambda must be > 0")
        if self.tanh_scale <= 0:
            raise ValueError("tanh_scale must be > 0")

    def effective_lambda(self, bin_duration: float) -> float:
        if self.lambda_s is not None:
            return self.lambda_s
        lam = bin_duration / 2.0
        if lam <= 0:
            raise ValueError(f"cannot derive lambda from bin duration {bin_duration}")
        return lam


@dataclass
class RawFrame:
    """Real-valued reconstruction output, [channels, H, W], values >= 0."""

    data: np.ndarray
    t_start: float
    t_end: float
    bin_index: int

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass
class RenderedFrame:
    """8-bit RGB frame, data shaped [3, H, W] uint8."""

    data: np.ndarray
    t_start: float
    t_end: float
    bin_index: int

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def event_count(bin_: EventBin, polarity_aware: bool,
                width: int, height: int) -> RawFrame:
    """Per-pixel event counts; two channels when polarity_aware, else one.

    The polarity-agnostic variant is the channel sum of the aware one.
    """
    if len(bin_) == 0:
        raise DataError(f"bin {bin_.index} is empty")
    if bin_.x.max() >= width or bin_.y.max() >= height:
        raise DataError(f"bin {bin_.index}: event coordinates outside {width}x{height}")
    counts = np.zeros((2, height, width), np.float64)
    for c, pol in enumerate(POLARITY_CHANNELS):
        mask = bin_.p == pol
        np.add.at(counts[c], (bin_.y[mask], bin_.x[mask]), 1.0)
    if not polarity_aware:
        counts = counts.sum(axis=0, keepdims=True)
    return RawFrame(counts, bin_.t_start, bin_.t_end, bin_.index)


def time_surface(bin_: EventBin, params: ReconParams,
                 width: int, height: int) -> RawFrame:
    """Polarity-aware exponential-decay time surface.

    For each pixel/polarity holding at least one event, the value is
    exp(-(t_ref - t_last) / lambda) where t_last is that pixel's most
    recent event timestamp and t_ref = t_end + lambda with t_end the
    timestamp of the last event in the bin. The offset decays even the
    newest event, so the frame maximum is exactly exp(-1). Event-free
    pixels hold 0.
    """
    if len(bin_) == 0:
        raise DataError(f"bin {bin_.index} is empty")
    if bin_.x.max() >= width or bin_.y.max() >= height:
        raise DataError(f"bin {bin_.index}: event coordinates outside {width}x{height}")
    lam = params.effective_lambda(bin_.t_end - bin_.t_start)
    t_end = bin_.t_last
    t_ref = t_end + lam
    surface = np.zeros((2, height, width), np.float64)
    for c, pol in enumerate(POLARITY_CHANNELS):
        mask = bin_.p == pol
        last = np.full((height, width), -np.inf)
        np.maximum.at(last, (bin_.y[mask], bin_.x[mask]), bin_.t[mask])
        hit = np.isfinite(last)
        surface[c][hit] = np.exp(-(t_ref - last[hit]) / lam)
    return RawFrame(surface, bin_.t_start, bin_.t_end, bin_.index)


def reconstruct_bin(bin_: EventBin, params: ReconParams,
                    width: int, height: int) -> RawFrame:
    """Dispatch to the configured classical reconstruction."""
    if params.method == "count_polarity":
        return event_count(bin_, True, width, height)
    if params.method == "count_no_polarity":
        return event_count(bin_, False, width, height)
    if params.method == "time_surface":
        return time_surface(bin_, params, width, height)
    raise ValueError(f"method {params.method!r} is not a classical reconstruction")


def _normalize_channel(values: np.ndarray, tanh_scale: float) -> np.ndarray:
    squashed = np.tanh(values / tanh_scale)
    lo, hi = squashed.min(), squashed.max()
    if hi == lo:
        return np.zeros(values.shape, np.uint8)
    scaled = (squashed - lo) * (255.0 / (hi - lo))
    return np.floor(scaled + 0.5).astype(np.uint8)  # round half up


def normalize(raw: RawFrame, params: ReconParams) -> RenderedFrame:
    """Render a raw frame to 8-bit RGB.

    Each channel independently: v -> tanh(v / tanh_scale), then the
    channel's [min, max] is mapped affinely onto [0, 255] with round half
    up. Constant channels map to all zeros. Single-channel frames
    replicate into R, G, B; two-channel frames place positive in G and
    negative in B with R zero.
    """
    if not np.all(np.isfinite(raw.data)) or raw.data.min() < 0:
        raise DataError("raw frame values must be finite and >= 0")
    out = np.zeros((3, raw.height, raw.width), np.uint8)
    if raw.channels == 1:
        rendered = _normalize_channel(raw.data[0], params.tanh_scale)
        out[0] = out[1] = out[2] = rendered
    elif raw.channels == 2:
        out[1] = _normalize_channel(raw.data[0], params.tanh_scale)  # positive -> G
        out[2] = _normalize_channel(raw.data[1], params.tanh_scale)  # negative -> B
    else:
        raise DataError(f"unsupported channel count {raw.channels}")
    return RenderedFrame(out, raw.t_start, raw.t_end, raw.bin_index)


def save_frames(frames: list[RenderedFrame], path,
                width: int, height: int) -> None:
    """Write rendered frames in the EVPF interchange format."""
    with open(path, "wb") as fh:
        fh.write(_FRAME_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, width, height,
                                    len(frames)))
        for f in frames:
            if f.data.shape != (3, height, width):
                raise DataError(
                    f"frame {f.bin_index} shape {f.data.shape} does not match "
                    f"header dims {width}x{height}")
            record = struct.pack("<QQ",
                                 round(f.t_start * US_PER_S),
                                 round(f.t_end * US_PER_S))
            # [3, H, W] -> row-major interleaved RGB bytes
            record += np.ascontiguousarray(f.data.transpose(1, 2, 0)).tobytes()
            fh.write(record)
            fh.write(struct.pack("<I", zlib.crc32(record)))


def ingest_external_frames(path, expect_width: int | None = None,
                           expect_height: int | None = None) -> list[RenderedFrame]:
    """Read an EVPF file, validating magic, version, dims, and per-frame CRC."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _FRAME_HEADER.size:
        raise DataError("truncated EVPF header")
    magic, version, width, height, count = _FRAME_HEADER.unpack_from(data, 0)
    if magic != FRAME_MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {FRAME_MAGIC!r}")
    if version != FRAME_VERSION:
        raise DataError(f"unsupported EVPF version {version}")
    if expect_width is not None and width != expect_width:
        raise DataError(f"EVPF width {width} != configured {expect_width}")
    if expect_height is not None and height != expect_height:
        raise DataError(f"EVPF height {height} != configured {expect_height}")
    frame_bytes = 3 * height * width
    record_size = 16 + frame_bytes + 4
    if len(data) != _FRAME_HEADER.size + count * record_size:
        raise DataError(f"truncated EVPF payload: {len(data)} bytes for {count} frames")
    frames: list[RenderedFrame] = []
    offset = _FRAME_HEADER.size
    for i in range(count):
        record = data[offset:offset + 16 + frame_bytes]
        (crc,) = struct.unpack_from("<I", data, offset + 16 + frame_bytes)
        if zlib.crc32(record) != crc:
            raise DataError(f"frame {i}: CRC mismatch")
        t_start_us, t_end_us = struct.unpack_from("<QQ", record, 0)
        pixels = np.frombuffer(record, np.uint8, frame_bytes, 16)
        frames.append(RenderedFrame(
            data=np.ascontiguousarray(
                pixels.reshape(height, width, 3).transpose(2, 0, 1)),
            t_start=t_start_us / US_PER_S,
            t_end=t_end_us / US_PER_S,
            bin_index=i,
        ))
        offset += record_size
    return frames
