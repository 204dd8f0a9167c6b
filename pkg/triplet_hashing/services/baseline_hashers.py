"""
Módulo de Servicio de Hashers de Referencia
===========================================

Los seis esquemas de hashing no supervisados de comparación (LSH, SKLSH,
SH, PCAHash, ITQ y BPBC) detrás de una interfaz común de ajuste y
codificación. Convención: sgn(0) se codifica como bit 0.

Clases:
    BaselineHasher: Servicio que ajusta y aplica los esquemas
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..models.descriptors import BinaryCodeSet, DescriptorDataset
from ..models.hashers import METHODS, HasherModel, PcaModel
from ..utils.errors import ArgumentError


logger = logging.getLogger(__name__)

ITQ_ITERATIONS = 50
SKLSH_PAIRS = 1000


def fit_pca(dataset: DescriptorDataset, k: int) -> PcaModel:
    """
    Principal components of the mean-centred covariance.

    Columns are ordered by descending eigenvalue and each is signed so that
    its largest-magnitude component is positive.

    Args:
        dataset (DescriptorDataset): Data to analyse
        k (int): Components kept, k <= min(count - 1, dim)

    Returns:
        PcaModel: Fitted model

    Raises:
        ArgumentError: If k is out of range
    """
    limit = min(dataset.count - 1, dataset.dim)
    if not 1 <= k <= limit:
        raise ArgumentError(
            f"Cannot keep {k} principal components from {dataset.count} rows of dim {dataset.dim}"
        )
    data = dataset.data.astype(np.float64)
    mean = data.mean(axis=0)
    covariance = np.atleast_2d(np.cov(data, rowvar=False))
    eigenvalues, vectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1][:k]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    basis = vectors[:, order]
    pivots = np.argmax(np.abs(basis), axis=0)
    basis = basis * np.where(basis[pivots, np.arange(k)] < 0, -1.0, 1.0)
    return PcaModel(mean=mean, basis=basis, eigenvalues=eigenvalues)


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with sign correction."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def _sign_bits(values: np.ndarray) -> np.ndarray:
    return (values > 0).astype(np.uint8)


def itq_quantization_error(projected: np.ndarray, rotation: np.ndarray, binary: np.ndarray) -> float:
    """Mean over rows of ||B - V R||^2."""
    residual = np.asarray(binary, dtype=np.float64) - projected @ rotation
    return float(np.mean(np.sum(residual ** 2, axis=1)))


def itq_rotation(
    projected: np.ndarray,
    n_iterations: int = ITQ_ITERATIONS,
    rng: Optional[np.random.Generator] = None,
    init: Optional[np.ndarray] = None,
    show_progress: bool = False,
) -> Tuple[np.ndarray, List[float]]:
    """
    Alternate B = sgn(V R) and the orthogonal Procrustes update of R.

    Args:
        projected (np.ndarray): PCA-projected data V, count x n_bits
        n_iterations (int): Iterations
        rng (Optional[np.random.Generator]): Generator for the random initial rotation
        init (Optional[np.ndarray]): Initial rotation, overriding the random one
        show_progress (bool): Show a tqdm bar

    Returns:
        Tuple[np.ndarray, List[float]]: Rotation and quantization error after each iteration
    """
    v = np.asarray(projected, dtype=np.float64)
    if init is not None:
        rotation = np.asarray(init, dtype=np.float64)
    else:
        rotation = random_orthogonal(v.shape[1], rng or np.random.default_rng(0))
    trace: List[float] = []
    for _ in tqdm(range(n_iterations), desc="ITQ", disable=not show_progress, leave=False):
        binary = np.where(v @ rotation > 0, 1.0, -1.0)
        u, _, vt = np.linalg.svd(binary.T @ v)
        rotation = vt.T @ u.T
        trace.append(itq_quantization_error(v, rotation, binary))
    return rotation, trace


def default_bpbc_shape(dim: int) -> Tuple[int, int]:
    """Most-square factorisation d1 x d2 = dim with d1 <= d2."""
    d1 = int(np.floor(np.sqrt(dim)))
    while dim % d1:
        d1 -= 1
    if d1 == 1:
        raise ArgumentError(f"Descriptor dim {dim} has no non-trivial d1 x d2 factorisation for bpbc")
    return d1, dim // d1


def _sh_modes(ranges: np.ndarray, n_bits: int) -> np.ndarray:
    # Autofunciones 1-D: lambda_{d,j} proporcional a (j pi / rango_d)^2
    max_mode = n_bits + 1
    dims = np.repeat(np.arange(ranges.size), max_mode)
    orders = np.tile(np.arange(1, max_mode + 1), ranges.size)
    eigen = (orders * np.pi / ranges[dims]) ** 2
    chosen = np.lexsort((orders, dims, eigen))[:n_bits]
    return np.stack([dims[chosen], orders[chosen]], axis=1).astype(np.float64)


class BaselineHasher:
    """
    Fits and applies the baseline hashing schemes.

    Attributes:
        itq_iterations (int): ITQ alternation count
        bpbc_shape (Optional[Tuple[int, int]]): Declared descriptor reshape for bpbc
        sklsh_pairs (int): Pair sample size for the SKLSH bandwidth
        show_progress (bool): Show progress bars
        logger (logging.Logger): Logger instance
    """

    def __init__(
        self,
        itq_iterations: int = ITQ_ITERATIONS,
        bpbc_shape: Optional[Tuple[int, int]] = None,
        sklsh_pairs: int = SKLSH_PAIRS,
        show_progress: bool = False,
    ):
        self.itq_iterations = itq_iterations
        self.bpbc_shape = bpbc_shape
        self.sklsh_pairs = sklsh_pairs
        self.show_progress = show_progress
        self.logger = logging.getLogger(__name__)

    def fit(self, method: str, dataset: DescriptorDataset, n_bits: int, seed: int) -> HasherModel:
        """
        Fit one scheme.

        Args:
            method (str): One of lsh, sklsh, sh, pcahash, itq, bpbc
            dataset (DescriptorDataset): Training descriptors
            n_bits (int): Code length
            seed (int): Random seed

        Returns:
            HasherModel: Fitted model

        Raises:
            ArgumentError: Unknown method, too few rows for PCA, or a bad bpbc shape
        """
        if method not in METHODS:
            raise ArgumentError(f"Unknown hashing method {method!r}; choose from {METHODS}")
        if n_bits < 1:
            raise ArgumentError(f"n_bits must be >= 1, got {n_bits}")
        rng = np.random.default_rng(seed)
        params = getattr(self, f"_fit_{method}")(dataset, n_bits, rng)
        model = HasherModel(method=method, n_bits=n_bits, dim=dataset.dim, params=params)
        self.logger.info(f"Fitted {model} on {dataset.count} descriptors")
        return model

    def _fit_lsh(self, dataset, n_bits, rng):
        projection = rng.standard_normal((dataset.dim, n_bits))
        projection /= np.linalg.norm(projection, axis=0, keepdims=True)
        return {"projection": projection}

    def _fit_sklsh(self, dataset, n_bits, rng):
        if dataset.count < 2:
            raise ArgumentError("sklsh needs at least 2 rows to estimate the kernel bandwidth")
        first = rng.integers(dataset.count, size=self.sklsh_pairs)
        second = rng.integers(dataset.count - 1, size=self.sklsh_pairs)
        second = second + (second >= first)
        data = dataset.data.astype(np.float64)
        median = float(np.median(np.sum((data[first] - data[second]) ** 2, axis=1)))
        if median <= 0:
            raise ArgumentError("Median pairwise distance is zero; sklsh bandwidth undefined")
        gamma = 1.0 / median
        return {
            "projection": np.sqrt(gamma) * rng.standard_normal((dataset.dim, n_bits)),
            "phase": rng.uniform(0.0, 2.0 * np.pi, n_bits),
            "threshold": rng.uniform(-1.0, 1.0, n_bits),
            "gamma": np.array([gamma]),
        }

    def _fit_sh(self, dataset, n_bits, rng):
        pca = fit_pca(dataset, n_bits)
        projected = pca.project(dataset.data)
        mins, maxs = projected.min(axis=0), projected.max(axis=0)
        spans = maxs - mins
        if np.any(spans <= 0):
            raise ArgumentError("sh needs a positive data range along every principal direction")
        return {"pca_mean": pca.mean, "pca_basis": pca.basis, "mins": mins, "maxs": maxs,
                "modes": _sh_modes(spans, n_bits)}

    def _fit_pcahash(self, dataset, n_bits, rng):
        pca = fit_pca(dataset, n_bits)
        return {"pca_mean": pca.mean, "pca_basis": pca.basis,
                "rotation": random_orthogonal(n_bits, rng)}

    def _fit_itq(self, dataset, n_bits, rng):
        pca = fit_pca(dataset, n_bits)
        rotation, trace = itq_rotation(pca.project(dataset.data), self.itq_iterations, rng,
                                       show_progress=self.show_progress)
        if trace:
            self.logger.info(f"ITQ quantization error {trace[0]:.6f} -> {trace[-1]:.6f}")
        return {"pca_mean": pca.mean, "pca_basis": pca.basis, "rotation": rotation}

    def _fit_bpbc(self, dataset, n_bits, rng):
        if self.bpbc_shape is not None:
            d1, d2 = self.bpbc_shape
            if d1 * d2 != dataset.dim:
                raise ArgumentError(f"bpbc shape {d1}x{d2} does not factor dim {dataset.dim}")
        else:
            d1, d2 = default_bpbc_shape(dataset.dim)
        if n_bits > dataset.dim:
            raise ArgumentError(f"bpbc yields at most {dataset.dim} bits, asked for {n_bits}")
        return {"mean": dataset.data.astype(np.float64).mean(axis=0),
                "rotation_left": random_orthogonal(d1, rng),
                "rotation_right": random_orthogonal(d2, rng)}

    def project(self, model: HasherModel, data: np.ndarray) -> np.ndarray:
        """
        Real-valued projections whose sign gives the code bits.

        Args:
            model (HasherModel): Fitted model
            data (np.ndarray): count x dim rows

        Returns:
            np.ndarray: count x n_bits values
        """
        x = np.asarray(data, dtype=np.float64)
        p = model.params
        if model.method == "lsh":
            return x @ p["projection"]
        if model.method == "sklsh":
            return np.cos(x @ p["projection"] + p["phase"]) + p["threshold"]
        if model.method == "sh":
            projected = (x - p["pca_mean"]) @ p["pca_basis"]
            dims = p["modes"][:, 0].astype(np.int64)
            orders = p["modes"][:, 1]
            scaled = (projected[:, dims] - p["mins"][dims]) / (p["maxs"][dims] - p["mins"][dims])
            return np.sin(np.pi / 2 + orders * np.pi * scaled)
        if model.method in ("pcahash", "itq"):
            return ((x - p["pca_mean"]) @ p["pca_basis"]) @ p["rotation"]
        left, right = p["rotation_left"], p["rotation_right"]
        blocks = (x - p["mean"]).reshape(-1, left.shape[0], right.shape[0])
        return (left.T @ blocks @ right).reshape(x.shape[0], -1)[:, :model.n_bits]

    def encode(self, model: HasherModel, dataset: DescriptorDataset) -> BinaryCodeSet:
        """
        Hash every row, keeping ids and order.

        Raises:
            ArgumentError: If the descriptor dim differs from the fit-time dim
        """
        if dataset.dim != model.dim:
            raise ArgumentError(f"Descriptor dim {dataset.dim} != {model.method} model dim {model.dim}")
        if dataset.count == 0:
            return BinaryCodeSet.from_bits([], np.zeros((0, model.n_bits), dtype=np.uint8))
        bits = _sign_bits(self.project(model, dataset.data))
        return BinaryCodeSet.from_bits(dataset.ids, bits)


def fit_baseline(method: str, dataset: DescriptorDataset, n_bits: int, seed: int,
                 **options) -> HasherModel:
    """Fit a scheme with BaselineHasher(**options)."""
    return BaselineHasher(**options).fit(method, dataset, n_bits, seed)


def encode_baseline(model: HasherModel, dataset: DescriptorDataset) -> BinaryCodeSet:
    """Encode with a fitted baseline model."""
    return BaselineHasher().encode(model, dataset)
