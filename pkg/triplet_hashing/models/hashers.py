"""
Módulo de Modelo de Hashers
===========================

Modelos ajustados de los esquemas de hashing de comparación.

Clases:
    PcaModel: Media, base ortonormal y autovalores de un PCA
    HasherModel: Parámetros de un esquema de hashing de referencia
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..utils.errors import ArgumentError, DataValidationError


METHODS = ("lsh", "sklsh", "sh", "pcahash", "itq", "bpbc")


@dataclass(frozen=True, eq=False)
class PcaModel:
    """
    Principal component analysis of a descriptor set.

    Attributes:
        mean (np.ndarray): Per-dimension mean
        basis (np.ndarray): dim x k orthonormal columns
        eigenvalues (np.ndarray): k non-negative values, descending
    """

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    def project(self, data: np.ndarray) -> np.ndarray:
        """Center and project rows onto the basis."""
        return (np.asarray(data, dtype=np.float64) - self.mean) @ self.basis

    def reconstruct(self, projected: np.ndarray) -> np.ndarray:
        return projected @ self.basis.T + self.mean


@dataclass(eq=False)
class HasherModel:
    """
    Fitted baseline hashing scheme.

    Attributes:
        method (str): One of lsh, sklsh, sh, pcahash, itq, bpbc
        n_bits (int): Code length
        dim (int): Descriptor dimension seen at fit time
        params (Dict[str, np.ndarray]): Method-specific float64 arrays
    """

    method: str
    n_bits: int
    dim: int
    params: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ArgumentError(f"Unknown hashing method {self.method!r}; choose from {METHODS}")
        if self.n_bits < 1:
            raise ArgumentError(f"n_bits must be >= 1, got {self.n_bits}")
        self.params = {
            name: np.asarray(value, dtype=np.float64) for name, value in self.params.items()
        }
        for name, value in self.params.items():
            if not np.all(np.isfinite(value)):
                raise DataValidationError(f"Non-finite values in {self.method} parameter {name}")

    def __str__(self) -> str:
        return f"HasherModel(method={self.method}, n_bits={self.n_bits}, dim={self.dim})"
