"""Temporal-consistency scoring of similarity matrices.

Two matchers operate on a [Q, R] similarity matrix:

* ``seq_match_baseline`` convolves a fixed diagonal identity kernel of
  length L, summing S[q-i, j-i] for i in [0, L). Border cells, where the
  full kernel does not fit, receive the available partial diagonal sum
  rescaled by L / length so magnitudes stay comparable.

* ``seq_match_adaptive`` shortens the kernel instead of rescaling: for
  query q it extracts the history submatrix of the last N = min(L, q+1)
  rows, optionally applies dual z-score normalisation (columns then rows),
  and scores reference j with the trace of the trailing k x k diagonal
  block, k = min(N, j+1). The trace is accumulated as a running diagonal
  sum; no square kernel is materialised. Each output row reads only rows
  <= q of the input, so the matcher is usable online.

With normalisation off and away from the borders the two matchers agree;
the adaptive variant exists for its boundary behaviour and for the
normalisation, which suppresses per-row/per-column bias.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .similarity import SimilarityMatrix


@dataclass
class SeqConfig:
    """Sequence matcher settings: length L, normalisation flag, std guard."""

    length: int = 10
    normalize: bool = True
    epsilon: float = 1e-8

    def validate(self) -> None:
        if self.length < 1:
            raise ValueError("sequence length must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


def zscore_dual(mat: np.ndarray, epsilon: float = 1e-8) -> np.ndarray:
    """Z-score per column, then per row of the result.

    Population standard deviation; any std below epsilon is replaced by
    epsilon, so constant slices map to zero rather than dividing by zero.
    """
    mat = np.asarray(mat, np.float64)
    col_std = np.maximum(mat.std(axis=0, keepdims=True), epsilon)
    out = (mat - mat.mean(axis=0, keepdims=True)) / col_std
    row_std = np.maximum(out.std(axis=1, keepdims=True), epsilon)
    return (out - out.mean(axis=1, keepdims=True)) / row_std


def _with_scores(sim: SimilarityMatrix, scores: np.ndarray,
                 seq_len: int) -> SimilarityMatrix:
    prov = replace(sim.provenance, seq_len=seq_len)
    return SimilarityMatrix(scores, sim.query_timestamps.copy(),
                            sim.ref_timestamps.copy(), prov)


def seq_match_baseline(sim: SimilarityMatrix, length: int) -> SimilarityMatrix:
    """Fixed diagonal-kernel convolution with length-compensated borders.

    S_out[q, j] = sum_{i<len} S[q-i, j-i] * L / len with
    len = min(L, q+1, j+1).
    """
    if length < 1:
        raise ValueError("sequence length must be >= 1")
    s = sim.scores
    q_n, r_n = s.shape
    sums = np.zeros_like(s)
    lens = np.minimum(np.arange(q_n)[:, None], np.arange(r_n)[None, :])
    lens = np.minimum(lens + 1, length)
    for i in range(min(length, q_n, r_n)):
        sums[i:, i:] += s[:q_n - i, :r_n - i]
    # Entries beyond each cell's valid diagonal length were never added,
    # so sums already holds the partial sums; rescale to full-kernel scale.
    out = sums * (length / lens)
    return _with_scores(sim, out, length)


def seq_match_adaptive(sim: SimilarityMatrix, cfg: SeqConfig) -> SimilarityMatrix:
    """Adaptive-history sequence matcher with optional dual z-score."""
    cfg.validate()
    s = sim.scores
    q_n, r_n = s.shape
    out = np.zeros_like(s)
    for q in range(q_n):
        n = min(cfg.length, q + 1)
        hist = s[q - n + 1:q + 1, :]
        if cfg.normalize:
            hist = zscore_dual(hist, cfg.epsilon)
        row = np.zeros(r_n)
        # trace of the trailing k x k block = sum over offsets m of
        # hist[n-1-m, j-m]; offset m contributes to all j >= m with k > m.
        for m in range(min(n, r_n)):
            row[m:] += hist[n - 1 - m, :r_n - m]
        out[q] = row
    return _with_scores(sim, out, cfg.length)
