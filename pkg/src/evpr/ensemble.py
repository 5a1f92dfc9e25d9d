"""Temporal alignment of ensemble members and late score fusion.

Members are sequence-matched similarity matrices from different pipeline
configurations (reconstruction, extractor, temporal resolution). Members
must be aligned to a common tick grid before fusion; fusion is plain
element-wise summation followed by argmax selection.

Summation order is fixed (ascending provenance tag) so fused matrices are
bit-reproducible regardless of the order members were produced in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .similarity import Provenance, SimilarityMatrix, argmax_matches


@dataclass
class EnsembleSet:
    """Aligned members sharing one [Q, R] shape and tick grid."""

    members: list[SimilarityMatrix]
    alignment_rate: float = 1.0

    def validate(self) -> None:
        if not self.members:
            raise DataError("ensemble needs at least one member")
        shape = self.members[0].shape
        half_period = 0.5 / self.alignment_rate
        for m in self.members:
            if m.shape != shape:
                raise DataError(f"member shapes differ: {m.shape} vs {shape}")
            dq = np.abs(m.query_timestamps - self.members[0].query_timestamps)
            dr = np.abs(m.ref_timestamps - self.members[0].ref_timestamps)
            if dq.size and dq.max() >= half_period:
                raise DataError("member query timestamps exceed alignment tolerance")
            if dr.size and dr.max() >= half_period:
                raise DataError("member reference timestamps exceed alignment tolerance")


def align_members(timestamp_lists: list[np.ndarray],
                  target_rate: float = 1.0) -> list[np.ndarray]:
    """Select per-member frame indices on a shared tick grid.

    Ticks run at target_rate from t_origin = max over members of their
    first timestamp (so every member has an eligible frame at tick 0) up
    to the earliest member end. At each tick every member contributes its
    latest frame with timestamp <= tick; ticks where any member lacks one
    are dropped, leaving equal counts across members.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be > 0")
    lists = [np.asarray(ts, np.float64) for ts in timestamp_lists]
    for ts in lists:
        if len(ts) == 0:
            raise DataError("member has no frames")
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise DataError("member timestamps must be strictly increasing")
    t_origin = max(float(ts[0]) for ts in lists)
    t_stop = min(float(ts[-1]) for ts in lists)
    if t_stop < t_origin:
        raise DataError("members have no temporal overlap")
    period = 1.0 / target_rate
    # relative epsilon so grid-aligned timestamps one ulp above a tick
    # still count as eligible
    eps = period * 1e-9
    n_ticks = int(np.floor((t_stop - t_origin) / period + eps)) + 1
    ticks = t_origin + np.arange(n_ticks) * period
    selections = []
    for ts in lists:
        # latest index with ts[idx] <= tick
        idx = np.searchsorted(ts, ticks + eps, side="right") - 1
        if np.any(idx < 0):
            raise DataError("tick before member start despite origin rule")
        selections.append(idx.astype(np.int64))
    return selections


def fuse(ensemble: EnsembleSet) -> SimilarityMatrix:
    """Element-wise sum of all members, accumulated in sorted-tag order."""
    ensemble.validate()
    ordered = sorted(ensemble.members, key=lambda m: m.provenance.tag())
    total = np.zeros_like(ordered[0].scores)
    for m in ordered:
        total = total + m.scores
    tags = "+".join(m.provenance.tag() for m in ordered)
    prov = Provenance(extra=f"fused[{tags}]",
                      seq_len=ordered[0].provenance.seq_len)
    return SimilarityMatrix(total, ordered[0].query_timestamps.copy(),
                            ordered[0].ref_timestamps.copy(), prov)


def predict(fused: SimilarityMatrix) -> list[tuple[int, int, float]]:
    """Maximum-similarity selection on the fused matrix."""
    return argmax_matches(fused)
