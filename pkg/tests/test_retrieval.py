"""
Suite de Pruebas de Recuperación y Evaluación
=============================================

Cobertura de Pruebas:
- Distancia de Hamming sobre códigos empaquetados
- Búsqueda lineal exacta (Hamming y euclídea) y regla de desempate
- Métricas recall@R y mAP
- RetrievalEvaluator con distractores
"""

import os
import unittest

import numpy as np

# Importar módulos a probar
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from triplet_hashing.models.descriptors import BinaryCodeSet, DescriptorDataset, GroundTruth
from triplet_hashing.models.retrieval import RankedList
from triplet_hashing.services.retrieval import (
    RetrievalEvaluator,
    average_precision,
    evaluate,
    hamming_distance,
    l2_search,
    linear_search,
    mean_average_precision,
    recall_at_r,
)
from triplet_hashing.utils.errors import ArgumentError


def _codes(bits, prefix="d") -> BinaryCodeSet:
    bits = np.asarray(bits, dtype=np.uint8)
    return BinaryCodeSet.from_bits([f"{prefix}{i}" for i in range(len(bits))], bits)


def _ranking(query_id, ids) -> RankedList:
    return RankedList(query_id, list(ids), np.arange(len(ids), dtype=np.float64))


class TestHammingDistance(unittest.TestCase):
    """Casos de prueba para hamming_distance."""

    def test_examples(self):
        codes = _codes([[0, 1, 0, 1], [0, 1, 1, 0]])
        self.assertEqual(hamming_distance(codes.codes[0], codes.codes[0]), 0)
        self.assertEqual(hamming_distance(codes.codes[0], codes.codes[1]), 2)

    def test_complement(self):
        bits = np.random.default_rng(0).integers(0, 2, size=(1, 32))
        codes = _codes(np.vstack([bits, 1 - bits]))
        self.assertEqual(hamming_distance(codes.codes[0], codes.codes[1]), 32)

    def test_padding_never_counts(self):
        codes = _codes([np.ones(12), np.zeros(12)])
        self.assertEqual(hamming_distance(codes.codes[0], codes.codes[1]), 12)

    def test_width_mismatch(self):
        with self.assertRaises(ArgumentError):
            hamming_distance(np.zeros(2, np.uint8), np.zeros(3, np.uint8))
        with self.assertRaises(ArgumentError):
            linear_search(_codes(np.zeros((2, 8))), _codes(np.zeros((1, 16)), "q"), 1)


class TestLinearSearch(unittest.TestCase):
    """Casos de prueba para linear_search y l2_search."""

    def test_identical_code_first(self):
        rng = np.random.default_rng(1)
        bits = rng.integers(0, 2, size=(50, 64))
        database = _codes(bits)
        queries = _codes(bits[17:18], "q")
        ranking = linear_search(database, queries, 5)[0]
        self.assertEqual(ranking.ids[0], "d17")
        self.assertEqual(ranking.distances[0], 0)

    def test_full_ranking_when_r_exceeds_size(self):
        database = _codes(np.random.default_rng(2).integers(0, 2, size=(7, 16)))
        ranking = linear_search(database, _codes(np.zeros((1, 16)), "q"), 100)[0]
        self.assertEqual(sorted(ranking.ids), sorted(database.ids))
        self.assertTrue(np.all(np.diff(ranking.distances) >= 0))

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(1000):
            n_bits = int(rng.integers(1, 40))
            count = int(rng.integers(1, 30))
            bits = rng.integers(0, 2, size=(count, n_bits))
            ids = [f"id{j:02d}" for j in rng.permutation(count)]
            database = BinaryCodeSet.from_bits(ids, bits)
            query_bits = rng.integers(0, 2, size=(1, n_bits))
            queries = BinaryCodeSet.from_bits(["q"], query_bits)
            r = int(rng.integers(1, count + 3))
            ranking = linear_search(database, queries, r)[0]

            reference = sorted(
                ((int(np.sum(bits[j] != query_bits[0])), ids[j]) for j in range(count))
            )[:r]
            self.assertEqual(ranking.items(), [(i, float(d)) for d, i in reference], f"trial {trial}")

    def test_ties_by_ascending_id(self):
        database = BinaryCodeSet.from_bits(["c", "a", "b"], np.ones((3, 8)))
        ranking = linear_search(database, _codes(np.ones((1, 8)), "q"), 3)[0]
        self.assertEqual(ranking.ids, ["a", "b", "c"])

    def test_exclude_self(self):
        bits = np.random.default_rng(4).integers(0, 2, size=(10, 16))
        database = _codes(bits)
        rankings = linear_search(database, database, 10, exclude_self=True)
        for ranking in rankings:
            self.assertNotIn(ranking.query_id, ranking.ids)
            self.assertEqual(len(ranking), 9)

    def test_threads_give_same_result(self):
        rng = np.random.default_rng(5)
        database = _codes(rng.integers(0, 2, size=(200, 32)))
        queries = _codes(rng.integers(0, 2, size=(20, 32)), "q")
        serial = linear_search(database, queries, 10, threads=1)
        pooled = linear_search(database, queries, 10, threads=4)
        self.assertEqual([r.items() for r in serial], [r.items() for r in pooled])

    def test_l2_examples(self):
        database = DescriptorDataset(["p0", "p1", "p3"], [[0.0], [1.0], [3.0]])
        queries = DescriptorDataset(["q"], [[0.4]])
        self.assertEqual(l2_search(database, queries, 3)[0].ids, ["p0", "p1", "p3"])

        exact = l2_search(database, DescriptorDataset(["q"], [[3.0]]), 1)[0]
        self.assertEqual((exact.ids, exact.distances[0]), (["p3"], 0.0))

        tied = DescriptorDataset(["z", "y"], [[1.0], [-1.0]])
        self.assertEqual(l2_search(tied, DescriptorDataset(["q"], [[0.0]]), 2)[0].ids, ["y", "z"])

    def test_l2_brute_force_oracle(self):
        rng = np.random.default_rng(6)
        for trial in range(1000):
            dim = int(rng.integers(1, 12))
            count = int(rng.integers(1, 30))
            # valores enteros pequeños: distancias exactas y muchos empates
            values = rng.integers(-3, 4, size=(count, dim)).astype(np.float64)
            ids = [f"id{j:02d}" for j in rng.permutation(count)]
            query = rng.integers(-3, 4, size=(1, dim)).astype(np.float64)
            r = int(rng.integers(1, count + 3))
            ranking = l2_search(DescriptorDataset(ids, values), DescriptorDataset(["q"], query), r)[0]

            reference = sorted((float(np.sum((values[j] - query[0]) ** 2)), ids[j]) for j in range(count))[:r]
            self.assertEqual(ranking.items(), [(i, d) for d, i in reference], f"trial {trial}")

    def test_hamming_and_l2_orderings_agree_on_binary_codes(self):
        rng = np.random.default_rng(7)
        for trial in range(200):
            n_bits = int(rng.integers(1, 40))
            count = int(rng.integers(1, 30))
            bits = rng.integers(0, 2, size=(count, n_bits))
            query_bits = rng.integers(0, 2, size=(3, n_bits))
            ids = [f"id{j:02d}" for j in rng.permutation(count)]
            query_ids = ["q0", "q1", "q2"]
            hamming = linear_search(BinaryCodeSet.from_bits(ids, bits),
                                    BinaryCodeSet.from_bits(query_ids, query_bits), count)
            euclidean = l2_search(DescriptorDataset(ids, bits.astype(np.float64)),
                                  DescriptorDataset(query_ids, query_bits.astype(np.float64)), count)
            self.assertEqual([r.items() for r in hamming], [r.items() for r in euclidean], f"trial {trial}")

    def test_bad_r(self):
        with self.assertRaises(ArgumentError):
            linear_search(_codes(np.zeros((2, 8))), _codes(np.zeros((1, 8)), "q"), 0)


class TestMetrics(unittest.TestCase):
    """Casos de prueba para recall@R y mAP."""

    def test_recall_examples(self):
        gt = GroundTruth({"q1": ["d4"], "q2": ["d49"]})
        ids = [f"d{i}" for i in range(100)]
        rankings = [_ranking("q1", ids), _ranking("q2", ids)]
        self.assertEqual(recall_at_r(rankings, gt, 10), 0.5)
        self.assertEqual(recall_at_r(rankings, gt, 100), 1.0)

    def test_recall_extremes(self):
        gt = GroundTruth({"q1": ["a"], "q2": ["b"]})
        hit = [_ranking("q1", ["a", "b"]), _ranking("q2", ["b", "a"])]
        self.assertEqual(recall_at_r(hit, gt, 1), 1.0)
        miss = [_ranking("q1", ["c", "d"]), _ranking("q2", ["c", "d"])]
        self.assertEqual(recall_at_r(miss, gt, 2), 0.0)

    def test_recall_fraction_mode(self):
        gt = GroundTruth({"q": ["a", "b", "c", "d"]})
        rankings = [_ranking("q", ["a", "x", "b", "c"])]
        self.assertEqual(recall_at_r(rankings, gt, 3, mode="fraction"), 0.5)
        self.assertEqual(recall_at_r(rankings, gt, 3, mode="hit"), 1.0)

    def test_missing_ground_truth(self):
        with self.assertRaises(ArgumentError):
            recall_at_r([_ranking("q9", ["a"])], GroundTruth({"q1": ["a"]}), 1)
        with self.assertRaises(ArgumentError):
            mean_average_precision([_ranking("q9", ["a"])], GroundTruth({"q1": ["a"]}))

    def test_average_precision(self):
        self.assertEqual(mean_average_precision([_ranking("q", ["a", "b"])], GroundTruth({"q": ["a"]})), 1.0)
        ap = average_precision(_ranking("q", ["a", "x", "b", "y"]), {"a", "b"})
        self.assertAlmostEqual(ap, (1 / 1 + 2 / 3) / 2)
        self.assertEqual(average_precision(_ranking("q", ["x", "y"]), {"a"}), 0.0)
        with self.assertRaises(ArgumentError):
            average_precision(_ranking("q", ["x"]), set())


class TestRetrievalEvaluator(unittest.TestCase):
    """Casos de prueba para RetrievalEvaluator."""

    def setUp(self):
        self.database = DescriptorDataset(["a", "b", "c", "d"], [[0.0], [0.1], [5.0], [5.1]])
        self.queries = DescriptorDataset(["qa", "qc"], [[0.05], [5.05]])
        self.gt = GroundTruth({"qa": ["a", "b"], "qc": ["c", "d"]})

    def test_report_rows(self):
        report = RetrievalEvaluator(recall_at=(1, 2)).evaluate("L2", None, self.database, self.queries, self.gt)
        frame = report.to_frame()
        self.assertEqual(list(frame.columns), ["scheme", "bits", "metric", "R", "value"])
        self.assertEqual(len(frame), 3)
        self.assertEqual(report.value("L2", "mAP"), 1.0)
        self.assertEqual(report.value("L2", "recall", 1), 1.0)
        self.assertEqual((report.query_count, report.database_size), (2, 4))

    def test_codes_and_module_function(self):
        database = _codes([[0, 0, 0, 0], [0, 0, 0, 1], [1, 1, 1, 1], [1, 1, 1, 0]])
        queries = BinaryCodeSet.from_bits(["qa", "qc"], np.array([[0, 0, 0, 0], [1, 1, 1, 1]]))
        gt = GroundTruth({"qa": ["d0", "d1"], "qc": ["d2", "d3"]})
        report = evaluate("UTH", 4, database, queries, gt, recall_at=(1,))
        self.assertEqual(report.value("UTH", "mAP", bits=4), 1.0)

    def test_distractors_lower_scores(self):
        evaluator = RetrievalEvaluator(recall_at=(1,))
        distractors = DescriptorDataset(["x1", "x2"], [[0.05], [5.05]])
        report = evaluator.evaluate("L2", None, self.database, self.queries, self.gt, distractors)
        self.assertEqual(report.database_size, 6)
        self.assertEqual(report.value("L2", "recall", 1), 0.0)
        self.assertLess(report.value("L2", "mAP"), 1.0)

    def test_distractor_collision(self):
        with self.assertRaises(ArgumentError):
            RetrievalEvaluator().evaluate("L2", None, self.database, self.queries, self.gt,
                                          DescriptorDataset(["a"], [[9.0]]))

    def test_unresolved_ground_truth(self):
        gt = GroundTruth({"qa": ["a", "zz"], "qc": ["c"]})
        with self.assertRaises(ArgumentError):
            RetrievalEvaluator().evaluate("L2", None, self.database, self.queries, gt)
        with self.assertRaises(ArgumentError):
            RetrievalEvaluator().evaluate("L2", None, self.database, self.queries, GroundTruth({"qa": ["a"]}))

    def test_mixed_kinds_rejected(self):
        with self.assertRaises(ArgumentError):
            RetrievalEvaluator().search(self.database, _codes(np.zeros((1, 8)), "q"), 1)


if __name__ == "__main__":
    unittest.main()
