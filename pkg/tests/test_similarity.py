import numpy as np
import pytest

from evpr.descriptor import DescriptorSet
from evpr.errors import DataError
from evpr.similarity import (
    Provenance,
    SimilarityMatrix,
    argmax_matches,
    load_matrix_csv,
    save_matrix_csv,
    save_matrix_pgm,
    similarity_matrix,
)


def dset(rows, t0=0.0):
    rows = np.asarray(rows, np.float64)
    return DescriptorSet(rows, t0 + np.arange(rows.shape[0]) + 1.0)


class TestSimilarityMatrix:
    def test_identical_vectors_score_zero(self):
        v = np.array([[0.6, 0.8]])
        sim = similarity_matrix(dset(v), dset(v))
        assert sim.scores[0, 0] == pytest.approx(0.0, abs=1e-15)

    def test_orthonormal_pair(self):
        q = dset([[1.0, 0.0]])
        r = dset([[0.0, 1.0]])
        sim = similarity_matrix(q, r)
        assert sim.scores[0, 0] == pytest.approx(-np.sqrt(2), abs=1e-12)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(50)
        q = dset(rng.normal(size=(5, 7)))
        r = dset(rng.normal(size=(6, 7)))
        sim = similarity_matrix(q, r)
        for i in range(5):
            for j in range(6):
                expected = -np.sqrt(np.sum((q.descriptors[i] - r.descriptors[j]) ** 2))
                assert abs(sim.scores[i, j] - expected) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            similarity_matrix(dset(np.zeros((2, 3))), dset(np.zeros((2, 4))))

    def test_self_similarity_symmetry(self):
        rng = np.random.default_rng(51)
        d = dset(rng.normal(size=(6, 5)))
        sim = similarity_matrix(d, d)
        np.testing.assert_allclose(sim.scores, sim.scores.T, atol=1e-12)
        assert np.allclose(np.diag(sim.scores), 0.0, atol=1e-12)
        assert all(np.argmax(sim.scores[i]) == i for i in range(6))

    def test_translation_invariance(self):
        rng = np.random.default_rng(52)
        base = rng.normal(size=(4, 6))
        shift = rng.normal(size=6)
        sim_a = similarity_matrix(dset(base), dset(base[::-1].copy() + 0))
        sim_b = similarity_matrix(dset(base + shift), dset(base[::-1].copy() + shift))
        np.testing.assert_allclose(sim_a.scores, sim_b.scores, atol=1e-12)

    def test_nonpositive_scores(self):
        rng = np.random.default_rng(53)
        sim = similarity_matrix(dset(rng.normal(size=(4, 6))),
                                dset(rng.normal(size=(5, 6))))
        assert sim.scores.max() <= 0.0


class TestArgmaxMatches:
    def test_row_maximum(self):
        sim = SimilarityMatrix(np.array([[-3.0, -1.0, -2.0]]),
                               np.array([1.0]), np.array([1.0, 2.0, 3.0]))
        assert argmax_matches(sim) == [(0, 1, -1.0)]

    def test_tie_break_lowest_index(self):
        sim = SimilarityMatrix(np.full((1, 4), -2.0),
                               np.array([1.0]), np.arange(4.0) + 1)
        assert argmax_matches(sim)[0][1] == 0

    def test_matches_scan_oracle(self):
        rng = np.random.default_rng(54)
        scores = rng.normal(size=(20, 30))
        sim = SimilarityMatrix(scores, np.arange(20.0) + 1, np.arange(30.0) + 1)
        got = argmax_matches(sim)
        for q in range(20):
            best_j, best_s = 0, scores[q, 0]
            for j in range(1, 30):
                if scores[q, j] > best_s:
                    best_j, best_s = j, scores[q, j]
            assert got[q] == (q, best_j, pytest.approx(best_s))

    def test_scale_invariance(self):
        rng = np.random.default_rng(55)
        scores = -np.abs(rng.normal(size=(8, 9)))
        ts_q, ts_r = np.arange(8.0) + 1, np.arange(9.0) + 1
        a = argmax_matches(SimilarityMatrix(scores, ts_q, ts_r))
        b = argmax_matches(SimilarityMatrix(scores * 3.5, ts_q, ts_r))
        assert [m[1] for m in a] == [m[1] for m in b]


class TestMatrixDumps:
    def test_csv_round_trip_lossless(self, tmp_path):
        rng = np.random.default_rng(56)
        sim = SimilarityMatrix(rng.normal(size=(4, 5)),
                               np.arange(4.0) + 0.25, np.arange(5.0) + 0.5,
                               Provenance(extra="tagA"))
        path = tmp_path / "sim.csv"
        save_matrix_csv(sim, path)
        back = load_matrix_csv(path)
        np.testing.assert_array_equal(back.scores, sim.scores)
        np.testing.assert_array_equal(back.query_timestamps, sim.query_timestamps)
        assert back.provenance.tag() == "tagA"

    def test_pgm_output(self, tmp_path):
        rng = np.random.default_rng(57)
        sim = SimilarityMatrix(rng.normal(size=(3, 4)),
                               np.arange(3.0) + 1, np.arange(4.0) + 1)
        path = tmp_path / "sim.pgm"
        save_matrix_pgm(sim, path)
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n4 3\n255\n")
        assert len(blob) == len(b"P5\n4 3\n255\n") + 12
