"""Dense query-reference similarity matrices and single-frame matching.

Similarity is the negative L2 distance between global descriptors, so
higher is more similar and 0 is the attainable maximum. Matrices carry
their query/reference timestamps plus a provenance tag naming the
configuration that produced them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .descriptor import DescriptorSet
from .errors import DataError


@dataclass
class Provenance:
    """Configuration tag carried through scoring stages."""

    reconstruction: str = ""
    extractor: str = ""
    resolution_s: float = 0.0
    seq_len: int = 0
    extra: str = ""

    def tag(self) -> str:
        parts = [self.reconstruction, self.extractor,
                 f"dt{self.resolution_s:g}" if self.resolution_s else "",
                 f"L{self.seq_len}" if self.seq_len else "",
                 self.extra]
        return "_".join(p for p in parts if p)


@dataclass
class SimilarityMatrix:
    """Scores [Q, R] with the timestamps of both axes."""

    scores: np.ndarray
    query_timestamps: np.ndarray
    ref_timestamps: np.ndarray
    provenance: Provenance = field(default_factory=Provenance)

    @property
    def shape(self):
        return self.scores.shape

    def validate(self) -> None:
        q, r = self.scores.shape
        if len(self.query_timestamps) != q or len(self.ref_timestamps) != r:
            raise DataError("similarity matrix axes do not match timestamp counts")
        if not np.all(np.isfinite(self.scores)):
            raise DataError("similarity matrix contains non-finite scores")


def similarity_matrix(query: DescriptorSet, reference: DescriptorSet,
                      provenance: Provenance | None = None) -> SimilarityMatrix:
    """scores[q, j] = -||d_q - d_j||_2 over all query/reference pairs."""
    if len(query) == 0 or len(reference) == 0:
        raise DataError("descriptor sets must be non-empty")
    if query.dim != reference.dim:
        raise DataError(f"descriptor dims differ: {query.dim} vs {reference.dim}")
    scores = -cdist(query.descriptors, reference.descriptors, metric="euclidean")
    return SimilarityMatrix(
        scores=scores.astype(np.float64),
        query_timestamps=query.timestamps.copy(),
        ref_timestamps=reference.timestamps.copy(),
        provenance=provenance or Provenance(extra=query.label or reference.label),
    )


def argmax_matches(sim: SimilarityMatrix) -> list[tuple[int, int, float]]:
    """Per query row, the best reference index (ties broken toward low j)."""
    if sim.scores.size == 0:
        raise DataError("similarity matrix is empty")
    best = np.argmax(sim.scores, axis=1)  # first occurrence on ties
    return [(q, int(j), float(sim.scores[q, j])) for q, j in enumerate(best)]


def save_matrix_csv(sim: SimilarityMatrix, path) -> None:
    """Raw scores as CSV with ``#`` metadata lines; lossless via repr."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# provenance={sim.provenance.tag()}\n")
        fh.write("# query_timestamps=" +
                 ",".join(repr(float(t)) for t in sim.query_timestamps) + "\n")
        fh.write("# ref_timestamps=" +
                 ",".join(repr(float(t)) for t in sim.ref_timestamps) + "\n")
        for row in sim.scores:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_matrix_csv(path) -> SimilarityMatrix:
    query_ts = ref_ts = None
    tag = ""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("provenance="):
                    tag = body.split("=", 1)[1]
                elif body.startswith("query_timestamps="):
                    query_ts = np.array(
                        [float(v) for v in body.split("=", 1)[1].split(",") if v])
                elif body.startswith("ref_timestamps="):
                    ref_ts = np.array(
                        [float(v) for v in body.split("=", 1)[1].split(",") if v])
                continue
            rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise DataError(f"no score rows in {path}")
    scores = np.array(rows, np.float64)
    if query_ts is None:
        query_ts = np.arange(scores.shape[0], dtype=np.float64)
    if ref_ts is None:
        ref_ts = np.arange(scores.shape[1], dtype=np.float64)
    sim = SimilarityMatrix(scores, query_ts, ref_ts, Provenance(extra=tag))
    sim.validate()
    return sim


def save_matrix_pgm(sim: SimilarityMatrix, path) -> None:
    """Binary PGM (P5) rendering after mapping [min, max] to [0, 255]."""
    s = sim.scores
    lo, hi = s.min(), s.max()
    if hi == lo:
        gray = np.zeros(s.shape, np.uint8)
    else:
        gray = np.floor((s - lo) * (255.0 / (hi - lo)) + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{s.shape[1]} {s.shape[0]}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())
