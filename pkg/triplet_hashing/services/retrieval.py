"""
Módulo de Servicio de Recuperación
==================================

Búsqueda lineal exacta por distancia de Hamming sobre códigos empaquetados
y por distancia euclídea sobre descriptores sin comprimir, más las métricas
recall@R y mAP.

Clases:
    RetrievalEvaluator: Búsqueda y evaluación por esquema y tasa de bits
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from ..models.descriptors import BinaryCodeSet, DescriptorDataset, GroundTruth
from ..models.retrieval import EvalReport, RankedList
from ..utils.errors import ArgumentError
from ..utils.validators import DataValidator


logger = logging.getLogger(__name__)

# Bits a 1 de cada valor de byte
POPCOUNT = np.array([bin(value).count("1") for value in range(256)], dtype=np.int64)

RECALL_MODES = ("hit", "fraction")

Searchable = Union[BinaryCodeSet, DescriptorDataset]


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    """
    Population count of a XOR b for two packed codes.

    Args:
        a (np.ndarray): Packed code row (uint8)
        b (np.ndarray): Packed code row of the same width

    Returns:
        int: Number of differing bits

    Raises:
        ArgumentError: On width mismatch
    """
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ArgumentError(f"Code widths differ: {a.shape} vs {b.shape}")
    return int(POPCOUNT[np.bitwise_xor(a, b)].sum())


def hamming_distances(codes: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Hamming distance from one packed query to every packed row."""
    return POPCOUNT[np.bitwise_xor(codes, query)].sum(axis=1)


def _id_ranks(ids: Sequence[str]) -> np.ndarray:
    ranks = np.empty(len(ids), dtype=np.int64)
    ranks[np.argsort(np.asarray(ids, dtype=object), kind="stable")] = np.arange(len(ids))
    return ranks


def _top_r(distances: np.ndarray, id_ranks: np.ndarray, r: int, exclude: Optional[int]):
    candidates = np.arange(distances.size)
    if exclude is not None:
        candidates = candidates[candidates != exclude]
    values = distances[candidates]
    if r < values.size:
        kth = np.partition(values, r - 1)[r - 1]
        keep = values <= kth
        candidates, values = candidates[keep], values[keep]
    order = np.lexsort((id_ranks[candidates], values))[:r]
    return candidates[order], values[order]


def _scan(
    database_ids: List[str],
    query_ids: List[str],
    distance_fn: Callable[[int], np.ndarray],
    r: int,
    exclude_self: bool,
    threads: int,
) -> List[RankedList]:
    if r < 1:
        raise ArgumentError(f"R must be >= 1, got {r}")
    ranks = _id_ranks(database_ids)
    position = {item: row for row, item in enumerate(database_ids)}

    def search_one(q: int) -> RankedList:
        exclude = position.get(query_ids[q]) if exclude_self else None
        rows, values = _top_r(distance_fn(q), ranks, r, exclude)
        return RankedList(query_ids[q], [database_ids[i] for i in rows], values)

    workers = threads if threads > 0 else (os.cpu_count() or 1)
    if workers == 1 or len(query_ids) < 2:
        return [search_one(q) for q in range(len(query_ids))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(search_one, range(len(query_ids))))


def linear_search(
    database: BinaryCodeSet,
    queries: BinaryCodeSet,
    r: int,
    exclude_self: bool = False,
    threads: int = 1,
) -> List[RankedList]:
    """
    Exhaustive top-R Hamming search, ties by ascending database id.

    Args:
        database (BinaryCodeSet): Searchable codes
        queries (BinaryCodeSet): Query codes
        r (int): Short-list length
        exclude_self (bool): Drop the database entry sharing the query id
        threads (int): Worker threads over queries, 0 for one per CPU

    Returns:
        List[RankedList]: One ranking per query, in query order

    Raises:
        ArgumentError: On width mismatch or R < 1
    """
    if database.n_bits != queries.n_bits:
        raise ArgumentError(f"Code widths differ: {database.n_bits} vs {queries.n_bits} bits")
    return _scan(database.ids, queries.ids,
                 lambda q: hamming_distances(database.codes, queries.codes[q]),
                 r, exclude_self, threads)


def l2_search(
    database: DescriptorDataset,
    queries: DescriptorDataset,
    r: int,
    exclude_self: bool = False,
    threads: int = 1,
) -> List[RankedList]:
    """Exhaustive top-R squared Euclidean search; see linear_search."""
    if database.dim != queries.dim:
        raise ArgumentError(f"Descriptor dims differ: {database.dim} vs {queries.dim}")
    db = database.data.astype(np.float64)
    qs = queries.data.astype(np.float64)
    return _scan(database.ids, queries.ids,
                 lambda q: np.sum((db - qs[q]) ** 2, axis=1),
                 r, exclude_self, threads)


def _relevant(ground_truth: GroundTruth, query_id: str):
    if query_id not in ground_truth:
        raise ArgumentError(f"No ground truth for query {query_id!r}")
    return ground_truth[query_id]


def recall_at_r(rankings: List[RankedList], ground_truth: GroundTruth, r: int,
                mode: str = "hit") -> float:
    """
    Recall at a short-list length.

    Args:
        rankings (List[RankedList]): Search results
        ground_truth (GroundTruth): Relevant ids per query
        r (int): Short-list length
        mode (str): 'hit' counts a query once any relevant id is in the top R;
            'fraction' averages the share of its relevant ids found there

    Returns:
        float: Mean over queries, in [0, 1]
    """
    if mode not in RECALL_MODES:
        raise ArgumentError(f"Unknown recall mode {mode!r}")
    if not rankings:
        raise ArgumentError("No rankings to score")
    scores = []
    for ranking in rankings:
        relevant = _relevant(ground_truth, ranking.query_id)
        found = sum(1 for item in ranking.ids[:r] if item in relevant)
        scores.append(float(found > 0) if mode == "hit" else found / len(relevant))
    return float(np.mean(scores))


def average_precision(ranking: RankedList, relevant) -> float:
    """AP over the full ranking; relevant ids never retrieved contribute 0."""
    if not relevant:
        raise ArgumentError(f"Empty relevant set for query {ranking.query_id!r}")
    hits, total = 0, 0.0
    for rank, item in enumerate(ranking.ids, start=1):
        if item in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def mean_average_precision(rankings: List[RankedList], ground_truth: GroundTruth) -> float:
    if not rankings:
        raise ArgumentError("No rankings to score")
    return float(np.mean([
        average_precision(ranking, _relevant(ground_truth, ranking.query_id))
        for ranking in rankings
    ]))


def _concat(database: Searchable, distractors: Searchable) -> Searchable:
    clash = set(database.ids) & set(distractors.ids)
    if clash:
        raise ArgumentError("Distractor ids collide with database ids: " + ", ".join(sorted(clash)[:20]))
    if isinstance(database, BinaryCodeSet) and isinstance(distractors, BinaryCodeSet):
        if database.n_bits != distractors.n_bits:
            raise ArgumentError("Distractor codes have a different width")
        return BinaryCodeSet(database.ids + distractors.ids, database.n_bits,
                             np.vstack([database.codes, distractors.codes]))
    if isinstance(database, DescriptorDataset) and isinstance(distractors, DescriptorDataset):
        return DescriptorDataset(database.ids + distractors.ids,
                                 np.vstack([database.data, distractors.data]))
    raise ArgumentError("Distractors must be of the same kind as the database")


class RetrievalEvaluator:
    """
    Runs searches and scores them into an EvalReport.

    Attributes:
        recall_at (List[int]): Short-list lengths for recall
        recall_mode (str): 'hit' or 'fraction'
        exclude_self (bool): Drop the query's own id from its ranking
        threads (int): Worker threads for the scans
        validator (DataValidator): Ground-truth checks
        logger (logging.Logger): Logger instance
    """

    def __init__(
        self,
        recall_at: Sequence[int] = (10, 100),
        recall_mode: str = "hit",
        exclude_self: bool = False,
        threads: int = 1,
    ):
        if recall_mode not in RECALL_MODES:
            raise ArgumentError(f"Unknown recall mode {recall_mode!r}")
        self.recall_at = sorted(int(r) for r in recall_at)
        self.recall_mode = recall_mode
        self.exclude_self = exclude_self
        self.threads = threads
        self.validator = DataValidator()
        self.logger = logging.getLogger(__name__)

    def search(self, database: Searchable, queries: Searchable, r: int) -> List[RankedList]:
        """Hamming search for code sets, squared Euclidean for descriptors."""
        if isinstance(database, BinaryCodeSet) and isinstance(queries, BinaryCodeSet):
            return linear_search(database, queries, r, self.exclude_self, self.threads)
        if isinstance(database, DescriptorDataset) and isinstance(queries, DescriptorDataset):
            return l2_search(database, queries, r, self.exclude_self, self.threads)
        raise ArgumentError("Database and queries must both be codes or both be descriptors")

    def evaluate(
        self,
        scheme: str,
        bits: Optional[int],
        database: Searchable,
        queries: Searchable,
        ground_truth: GroundTruth,
        distractors: Optional[Searchable] = None,
    ) -> EvalReport:
        """
        Score one scheme at one bitrate.

        Args:
            scheme (str): Scheme label for the report
            bits (Optional[int]): Bitrate, None for uncompressed descriptors
            database (Searchable): Database codes or descriptors
            queries (Searchable): Query codes or descriptors
            ground_truth (GroundTruth): Relevant database ids per query
            distractors (Optional[Searchable]): Extra items appended to the database

        Returns:
            EvalReport: recall@R rows for every configured R plus one mAP row

        Raises:
            ArgumentError: Unresolved ids or queries without ground truth
        """
        errors = self.validator.get_ground_truth_errors(
            {q: ground_truth[q] for q in queries.ids if q in ground_truth},
            queries.ids, database.ids,
        )
        if errors:
            raise ArgumentError("; ".join(errors))
        if distractors is not None:
            database = _concat(database, distractors)
        rankings = self.search(database, queries, len(database.ids))

        report = EvalReport(query_count=len(queries.ids), database_size=len(database.ids))
        for r in self.recall_at:
            report.add(scheme, bits, "recall", r,
                       recall_at_r(rankings, ground_truth, r, self.recall_mode))
        report.add(scheme, bits, "mAP", None, mean_average_precision(rankings, ground_truth))
        self.logger.info(
            f"{scheme} @ {bits if bits is not None else 'float'} bits: mAP "
            f"{report.rows[-1]['value']:.4f} over {report.query_count} queries, "
            f"{report.database_size} database items"
        )
        return report


def evaluate(
    scheme: str,
    bits: Optional[int],
    database: Searchable,
    queries: Searchable,
    ground_truth: GroundTruth,
    recall_at: Sequence[int] = (10, 100),
    **options,
) -> EvalReport:
    """Score one scheme; see RetrievalEvaluator.evaluate."""
    return RetrievalEvaluator(recall_at, **options).evaluate(
        scheme, bits, database, queries, ground_truth
    )
