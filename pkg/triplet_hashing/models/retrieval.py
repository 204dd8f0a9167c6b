"""
Módulo de Modelo de Recuperación
================================

Resultados de búsqueda y de evaluación.

Clases:
    RankedList: Lista ordenada de resultados para una consulta
    EvalReport: Métricas por esquema y tasa de bits
    DistanceHistogram: Histogramas de distancias de pares coincidentes y no coincidentes
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class RankedList:
    """
    Search result for one query, ascending by distance, ties by ascending id.

    Attributes:
        query_id (str): Query identifier
        ids (List[str]): Database ids in rank order
        distances (np.ndarray): Matching distances, non-decreasing
    """

    query_id: str
    ids: List[str]
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def items(self) -> List[Tuple[str, float]]:
        return list(zip(self.ids, self.distances.tolist()))


REPORT_COLUMNS = ["scheme", "bits", "metric", "R", "value"]


@dataclass
class EvalReport:
    """
    Recall@R and mAP rows in the ``scheme,bits,metric,R,value`` layout.

    Attributes:
        rows (List[dict]): One dict per metric value
        query_count (int): Number of evaluated queries of the last addition
        database_size (int): Database size of the last addition
    """

    rows: List[dict] = field(default_factory=list)
    query_count: int = 0
    database_size: int = 0

    def add(self, scheme: str, bits: Optional[int], metric: str,
            r: Optional[int], value: float) -> None:
        self.rows.append({
            "scheme": scheme,
            "bits": "" if bits is None else int(bits),
            "metric": metric,
            "R": "" if r is None else int(r),
            "value": float(value),
        })

    def value(self, scheme: str, metric: str, r: Optional[int] = None,
              bits: Optional[int] = None) -> float:
        """
        Look up one metric value.

        Raises:
            KeyError: If no row matches
        """
        for row in self.rows:
            if (row["scheme"] == scheme and row["metric"] == metric
                    and row["R"] == ("" if r is None else r)
                    and (bits is None or row["bits"] == bits)):
                return row["value"]
        raise KeyError((scheme, metric, r, bits))

    def extend(self, other: "EvalReport") -> None:
        self.rows.extend(other.rows)
        self.query_count = other.query_count
        self.database_size = other.database_size

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=REPORT_COLUMNS)


@dataclass(frozen=True, eq=False)
class DistanceHistogram:
    """
    Squared-distance histograms over shared equal-width bins.

    Attributes:
        edges (np.ndarray): n_bins + 1 bin edges
        match_counts (np.ndarray): Counts for match pairs
        nonmatch_counts (np.ndarray): Counts for non-match pairs
    """

    edges: np.ndarray
    match_counts: np.ndarray
    nonmatch_counts: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "bin_left": self.edges[:-1],
            "bin_right": self.edges[1:],
            "match": self.match_counts,
            "nonmatch": self.nonmatch_counts,
        })
