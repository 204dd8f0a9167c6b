"""
Módulo de Modelo de Descriptores
================================

Este módulo define los contenedores de datos del proyecto: descriptores
reales, códigos binarios empaquetados y la verdad de referencia.

Clases:
    DescriptorDataset: Matriz de descriptores con identificadores
    BinaryCodeSet: Códigos binarios de n_bits empaquetados por filas
    GroundTruth: Relación consulta -> ids relevantes
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.errors import ArgumentError, DataValidationError


NormMeta = Tuple[np.ndarray, np.ndarray]


def _check_ids(ids: Sequence[str], count: int) -> None:
    if len(ids) != count:
        raise DataValidationError(f"{len(ids)} ids for {count} rows")
    seen = set()
    for row, item in enumerate(ids):
        if item in seen:
            raise DataValidationError(f"Duplicate id '{item}'", row=row)
        seen.add(item)


@dataclass(frozen=True, eq=False)
class DescriptorDataset:
    """
    Real-valued descriptors, one row per image.

    Attributes:
        ids (List[str]): Unique identifiers, one per row
        data (np.ndarray): count x dim float32 matrix
        norm_meta (Optional[NormMeta]): Per-dimension (min, max) recorded by normalization
    """

    ids: List[str]
    data: np.ndarray
    norm_meta: Optional[NormMeta] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ArgumentError(f"Descriptor matrix must be 2-D, got shape {data.shape}")
        if data.shape[1] == 0:
            raise ArgumentError("Descriptor dimension must be positive")
        bad_rows = np.flatnonzero(~np.all(np.isfinite(data), axis=1))
        if bad_rows.size:
            raise DataValidationError("Non-finite descriptor value", row=int(bad_rows[0]))
        _check_ids(self.ids, data.shape[0])
        data.setflags(write=False)
        object.__setattr__(self, "ids", list(self.ids))
        object.__setattr__(self, "data", data)

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def index_of(self) -> Dict[str, int]:
        """Map each id to its row index."""
        return {item: row for row, item in enumerate(self.ids)}

    def subset(self, rows: Iterable[int]) -> "DescriptorDataset":
        """
        Select rows, keeping normalization metadata.

        Args:
            rows (Iterable[int]): Row indices in the desired order

        Returns:
            DescriptorDataset: New dataset
        """
        rows = np.asarray(list(rows), dtype=np.int64)
        return DescriptorDataset(
            ids=[self.ids[r] for r in rows],
            data=self.data[rows] if rows.size else np.empty((0, self.dim), np.float32),
            norm_meta=self.norm_meta,
        )

    def __len__(self) -> int:
        return self.count

    def __str__(self) -> str:
        return f"DescriptorDataset(count={self.count}, dim={self.dim})"


@dataclass(frozen=True, eq=False)
class BinaryCodeSet:
    """
    Bit-packed hash codes.

    Bit j of a code lives in byte j // 8 at bit position j % 8 (LSB first).
    Unused trailing bits of the last byte are always zero.

    Attributes:
        ids (List[str]): Unique identifiers, one per code
        n_bits (int): Bits per code
        codes (np.ndarray): count x ceil(n_bits/8) uint8 matrix
    """

    ids: List[str]
    n_bits: int
    codes: np.ndarray

    def __post_init__(self):
        if self.n_bits < 1:
            raise ArgumentError(f"n_bits must be >= 1, got {self.n_bits}")
        codes = np.asarray(self.codes, dtype=np.uint8)
        n_bytes = (self.n_bits + 7) // 8
        if codes.ndim != 2 or codes.shape[1] != n_bytes:
            raise ArgumentError(
                f"Code matrix shape {codes.shape} does not hold {self.n_bits}-bit codes"
            )
        spare = n_bytes * 8 - self.n_bits
        if spare and codes.shape[0]:
            mask = np.uint8((0xFF << (8 - spare)) & 0xFF)
            dirty = np.flatnonzero(codes[:, -1] & mask)
            if dirty.size:
                raise DataValidationError("Non-zero padding bits", row=int(dirty[0]))
        _check_ids(self.ids, codes.shape[0])
        codes.setflags(write=False)
        object.__setattr__(self, "ids", list(self.ids))
        object.__setattr__(self, "codes", codes)

    @classmethod
    def from_bits(cls, ids: Sequence[str], bits: np.ndarray) -> "BinaryCodeSet":
        """
        Pack a 0/1 matrix into a code set.

        Args:
            ids (Sequence[str]): Identifiers, one per row
            bits (np.ndarray): count x n_bits matrix of 0/1 (or booleans)

        Returns:
            BinaryCodeSet: Packed codes
        """
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise ArgumentError(f"Bit matrix must be 2-D, got shape {bits.shape}")
        packed = np.packbits(bits.astype(bool), axis=1, bitorder="little")
        return cls(ids=list(ids), n_bits=bits.shape[1], codes=packed)

    def to_bits(self) -> np.ndarray:
        """Unpack into a count x n_bits uint8 matrix of 0/1."""
        return np.unpackbits(self.codes, axis=1, count=self.n_bits, bitorder="little")

    @property
    def count(self) -> int:
        return self.codes.shape[0]

    def __len__(self) -> int:
        return self.count

    def __str__(self) -> str:
        return f"BinaryCodeSet(count={self.count}, n_bits={self.n_bits})"


@dataclass
class GroundTruth:
    """
    Relevant database ids per query id.

    Attributes:
        relevant (Dict[str, FrozenSet[str]]): Query id -> non-empty set of relevant ids
    """

    relevant: Dict[str, FrozenSet[str]] = field(default_factory=dict)

    def __post_init__(self):
        self.relevant = {q: frozenset(r) for q, r in self.relevant.items()}
        for query_id, rel in self.relevant.items():
            if not rel:
                raise ArgumentError(f"Empty relevant set for query '{query_id}'")

    def unresolved(self, database_ids: Iterable[str]) -> List[str]:
        """
        List referenced ids that are missing from the database.

        Args:
            database_ids (Iterable[str]): Database id list

        Returns:
            List[str]: Sorted offending ids
        """
        known = set(database_ids)
        missing = set()
        for rel in self.relevant.values():
            missing.update(rel - known)
        return sorted(missing)

    def __contains__(self, query_id: str) -> bool:
        return query_id in self.relevant

    def __getitem__(self, query_id: str) -> FrozenSet[str]:
        return self.relevant[query_id]

    def __len__(self) -> int:
        return len(self.relevant)
