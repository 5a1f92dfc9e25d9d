"""Global frame descriptors and the descriptor interchange format.

The built-in descriptor average-pools each colour channel of a rendered
frame onto a g x g grid, flattens to length 3*g*g, centers, and L2
normalises. It is a deterministic stand-in for learned extractors so the
whole pipeline can be exercised hermetically; files produced by external
extractors are exchanged through the same EVPD format.

Descriptor interchange file (EVPD): magic ``EVPD``, version u16 (=1),
count u64, dim u32; then count rows of dim float32 values, then count
timestamps as u64 microseconds, then a u32-length-prefixed UTF-8 label,
then a CRC-32 (zlib) of all payload bytes after the fixed header.
Little-endian throughout. Values are stored at 32-bit precision; in-memory
computation stays 64-bit.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .events import US_PER_S
from .reconstruct import RenderedFrame

DESCRIPTOR_MAGIC = b"EVPD"
DESCRIPTOR_VERSION = 1
_DESC_HEADER = struct.Struct("<4sHQI")

DEFAULT_GRID = 16


@dataclass
class DescriptorSet:
    """Per-frame descriptor matrix [count, dim] with frame timestamps.

    Timestamps are the bin t_end in seconds, strictly increasing. The
    label tags provenance (traverse/config).
    """

    descriptors: np.ndarray
    timestamps: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.descriptors = np.asarray(self.descriptors, np.float64)
        self.timestamps = np.asarray(self.timestamps, np.float64)

    def __len__(self) -> int:
        return self.descriptors.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def validate(self) -> None:
        if self.descriptors.ndim != 2:
            raise DataError("descriptors must be a 2-D matrix")
        if len(self.timestamps) != len(self):
            raise DataError("timestamp count does not match descriptor rows")
        if not np.all(np.isfinite(self.descriptors)):
            raise DataError("descriptors contain non-finite values")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise DataError("timestamps must be strictly increasing")


def grid_descriptor(frame: RenderedFrame, grid: int = DEFAULT_GRID) -> np.ndarray:
    """Average-pooled, centered, L2-normalised descriptor of one frame.

    Pool cells follow integer boundaries floor(k*size/grid), so any frame
    at least grid pixels on a side is supported. All-constant frames give
    the zero vector (the norm guard).
    """
    if grid < 1:
        raise ValueError("grid must be >= 1")
    h, w = frame.height, frame.width
    if grid > min(w, h):
        raise ValueError(f"grid {grid} exceeds frame dims {w}x{h}")
    ys = (np.arange(grid + 1) * h) // grid
    xs = (np.arange(grid + 1) * w) // grid
    pooled = np.empty((3, grid, grid), np.float64)
    data = frame.data.astype(np.float64)
    for gy in range(grid):
        for gx in range(grid):
            cell = data[:, ys[gy]:ys[gy + 1], xs[gx]:xs[gx + 1]]
            pooled[:, gy, gx] = cell.mean(axis=(1, 2))
    vec = pooled.ravel()
    vec = vec - vec.mean()
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        return vec
    return vec / norm


def describe_frames(frames: list[RenderedFrame], grid: int = DEFAULT_GRID,
                    label: str = "") -> DescriptorSet:
    """Apply grid_descriptor to every frame; timestamps are bin t_end."""
    if not frames:
        raise DataError("cannot describe an empty frame list")
    rows = np.stack([grid_descriptor(f, grid) for f in frames])
    ts = np.array([f.t_end for f in frames], np.float64)
    ds = DescriptorSet(rows, ts, label)
    ds.validate()
    return ds


def save_descriptors(ds: DescriptorSet, path) -> None:
    """Write a DescriptorSet in the EVPD format (float32 rows)."""
    ds.validate()
    label_bytes = ds.label.encode("utf-8")
    payload = ds.descriptors.astype("<f4").tobytes()
    payload += np.round(ds.timestamps * US_PER_S).astype("<u8").tobytes()
    payload += struct.pack("<I", len(label_bytes)) + label_bytes
    with open(path, "wb") as fh:
        fh.write(_DESC_HEADER.pack(DESCRIPTOR_MAGIC, DESCRIPTOR_VERSION,
                                   len(ds), ds.dim))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_descriptors(path) -> DescriptorSet:
    """Read and validate an EVPD file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _DESC_HEADER.size + 4:
        raise DataError("truncated EVPD file")
    magic, version, count, dim = _DESC_HEADER.unpack_from(data, 0)
    if magic != DESCRIPTOR_MAGIC:
        raise DataError(f"bad magic {magic!r}, expected {DESCRIPTOR_MAGIC!r}")
    if version != DESCRIPTOR_VERSION:
        raise DataError(f"unsupported EVPD version {version}")
    payload = data[_DESC_HEADER.size:-4]
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(payload) != crc:
        raise DataError("EVPD payload CRC mismatch")
    rows_bytes = count * dim * 4
    ts_bytes = count * 8
    if len(payload) < rows_bytes + ts_bytes + 4:
        raise DataError("EVPD payload shorter than declared counts")
    rows = np.frombuffer(payload, "<f4", count * dim, 0).reshape(count, dim)
    ts_us = np.frombuffer(payload, "<u8", count, rows_bytes)
    (label_len,) = struct.unpack_from("<I", payload, rows_bytes + ts_bytes)
    label_start = rows_bytes + ts_bytes + 4
    if len(payload) != label_start + label_len:
        raise DataError("EVPD label length does not match payload size")
    label = payload[label_start:label_start + label_len].decode("utf-8")
    ds = DescriptorSet(rows.astype(np.float64), ts_us.astype(np.float64) / US_PER_S,
                       label)
    if not np.all(np.isfinite(ds.descriptors)):
        raise DataError("EVPD contains non-finite descriptor rows")
    if len(ds.timestamps) > 1 and np.any(np.diff(ds.timestamps) <= 0):
        raise DataError("EVPD timestamps are not strictly increasing")
    return ds
