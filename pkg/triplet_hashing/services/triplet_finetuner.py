"""
Módulo de Servicio de Ajuste Fino por Tripletas
===============================================

Tabla de distancias entre descriptores de entrenamiento, muestreo de
tripletas por umbral o uniforme, pérdida de ranking con distancias
normalizadas por softmax, su gradiente exacto a través de la pila SRBM y el
bucle de descenso por gradiente con momento.

Clases:
    DistanceTable: Cubetas de vecinos ordenadas por distancia descendente
    Triplet: Índices (ancla, positivo, negativo)
    TripletFinetuner: Servicio de ajuste fino de la pila
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist
from tqdm import tqdm

from ..models.config import FinetuneConfig, TripletSamplerConfig
from ..models.descriptors import DescriptorDataset
from ..models.rbm import LayerDelta, SrbmStack
from ..models.retrieval import DistanceHistogram
from ..utils.errors import (
    ArgumentError,
    CapabilityError,
    DataValidationError,
    DivergenceError,
    SamplerExhaustedError,
)
from .embedding import forward_activations


logger = logging.getLogger(__name__)

SAMPLING_MODES = ("threshold", "uniform")
MAX_RESAMPLES = 100


class DistanceTable:
    """
    Squared Euclidean distances between training descriptors.

    Bucket m lists every other descriptor (or, for a windowed table, only
    those near the sampling targets) in descending distance order, ties by
    ascending index.

    Attributes:
        ids (List[str]): Training ids, bucket m belongs to ids[m]
    """

    def __init__(
        self,
        ids: Sequence[str],
        neighbors: List[np.ndarray],
        distances: Optional[List[np.ndarray]] = None,
        matrix: Optional[np.ndarray] = None,
    ):
        if matrix is None and distances is None:
            raise ArgumentError("A windowed table needs explicit bucket distances")
        self.ids = list(ids)
        self._neighbors = neighbors
        self._distances = distances
        self._matrix = matrix

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def windowed(self) -> bool:
        return self._matrix is None

    def neighbors(self, anchor: int) -> np.ndarray:
        return self._neighbors[anchor]

    def distances(self, anchor: int) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix[anchor, self._neighbors[anchor]]
        return self._distances[anchor]

    def bucket(self, anchor: int) -> List[Tuple[str, float]]:
        """Bucket as (neighbor id, squared distance) pairs."""
        return [(self.ids[n], float(d))
                for n, d in zip(self.neighbors(anchor), self.distances(anchor))]

    def pair_distance(self, a: int, b: int) -> float:
        """
        Squared distance between two training rows.

        Raises:
            CapabilityError: On a windowed table, which drops most pairs
        """
        if self._matrix is None:
            raise CapabilityError("Pair lookup needs the full distance table")
        return float(self._matrix[a, b])

    def __len__(self) -> int:
        return self.size

    def __str__(self) -> str:
        kind = "windowed" if self.windowed else "full"
        return f"DistanceTable(M={self.size}, {kind})"


def _window_entries(root: np.ndarray, config: TripletSamplerConfig) -> np.ndarray:
    keep = np.zeros(root.size, dtype=bool)
    for target in (config.t_p, config.t_n):
        gap = np.abs(root - target)
        keep |= gap <= config.tolerance
        keep[int(np.argmin(gap))] = True
    return np.flatnonzero(keep)


def build_distance_table(
    train: DescriptorDataset,
    window: Optional[TripletSamplerConfig] = None,
    block_size: int = 1024,
) -> DistanceTable:
    """
    Build the lookup table of pairwise squared distances.

    Args:
        train (DescriptorDataset): M training descriptors, M >= 3
        window (Optional[TripletSamplerConfig]): When given, each bucket keeps only
            entries inside the T_p / T_n windows plus the nearest entry to each target
        block_size (int): Rows of the distance matrix computed at once

    Returns:
        DistanceTable: The table

    Raises:
        ArgumentError: If M < 3
    """
    count = train.count
    if count < 3:
        raise ArgumentError(f"Need at least 3 training descriptors for a triplet, got {count}")
    data = train.data.astype(np.float64)
    index = np.arange(count)
    matrix = None if window is not None else np.empty((count, count))
    neighbors: List[np.ndarray] = []
    distances: List[np.ndarray] = []

    for start in range(0, count, block_size):
        block = cdist(data[start:start + block_size], data, "sqeuclidean")
        if matrix is not None:
            matrix[start:start + block.shape[0]] = block
        for offset, row in enumerate(block):
            anchor = start + offset
            others = index[index != anchor]
            values = row[others]
            order = np.lexsort((others, -values))
            others, values = others[order], values[order]
            if window is not None:
                kept = _window_entries(np.sqrt(values), window)
                others, values = others[kept], values[kept]
                distances.append(values)
            neighbors.append(others.astype(np.int32))

    table = DistanceTable(train.ids, neighbors, None if matrix is not None else distances, matrix)
    logger.info(f"Built {table}")
    return table


def default_sampler_config(
    train: DescriptorDataset,
    triplets_per_epoch: int = 128_000,
    t_p: Optional[float] = None,
    t_n: Optional[float] = None,
    tolerance: Optional[float] = None,
    max_pairs: int = 500_000,
    seed: int = 0,
    p_percentile: float = 5.0,
    n_percentile: float = 50.0,
) -> TripletSamplerConfig:
    """
    Data-scaled sampling targets.

    T_p and T_n default to the p_percentile and n_percentile (5th and 50th)
    percentiles of the pooled pairwise Euclidean distances and the tolerance
    to 2% of their range. Explicit values override each default. Above
    max_pairs the pool is a random pair sample. T_p should sit below the share
    of pairs that are true matches, or positives drift into non-matches.

    Args:
        train (DescriptorDataset): Training descriptors
        triplets_per_epoch (int): Triplets per epoch
        t_p (Optional[float]): Positive target override
        t_n (Optional[float]): Negative target override
        tolerance (Optional[float]): Window half-width override
        max_pairs (int): Pool size cap
        seed (int): Seed for pair subsampling
        p_percentile (float): Percentile of the pool giving T_p
        n_percentile (float): Percentile of the pool giving T_n

    Returns:
        TripletSamplerConfig: The sampler configuration
    """
    if train.count < 3:
        raise ArgumentError(f"Need at least 3 training descriptors, got {train.count}")
    if not 0 <= p_percentile < n_percentile <= 100:
        raise ArgumentError(
            f"Percentiles must satisfy 0 <= p < n <= 100, got p={p_percentile}, n={n_percentile}"
        )
    data = train.data.astype(np.float64)
    if train.count * (train.count - 1) // 2 <= max_pairs:
        pooled = pdist(data, "euclidean")
    else:
        rng = np.random.default_rng(seed)
        a = rng.integers(train.count, size=max_pairs)
        b = rng.integers(train.count - 1, size=max_pairs)
        b = b + (b >= a)
        pooled = np.sqrt(np.sum((data[a] - data[b]) ** 2, axis=1))
    if tolerance is None:
        tolerance = 0.02 * float(pooled.max() - pooled.min())
    if tolerance <= 0:
        raise ArgumentError("All pairwise distances are equal; thresholds cannot be derived")
    config = TripletSamplerConfig(
        t_p=float(np.percentile(pooled, p_percentile)) if t_p is None else t_p,
        t_n=float(np.percentile(pooled, n_percentile)) if t_n is None else t_n,
        tolerance=tolerance,
        triplets_per_epoch=triplets_per_epoch,
    )
    logger.info(f"Sampler targets T_p={config.t_p:.6g} T_n={config.t_n:.6g} tolerance={config.tolerance:.6g}")
    return config


@dataclass(frozen=True)
class Triplet:
    """
    Training row indices of a triplet; the positive is strictly closer to the anchor.

    Attributes:
        anchor (int): Anchor q
        positive (int): Positive q+
        negative (int): Negative q-
    """

    anchor: int
    positive: int
    negative: int


def _pick(root: np.ndarray, target: float, tolerance: float, rng: np.random.Generator) -> int:
    gap = np.abs(root - target)
    window = np.flatnonzero(gap <= tolerance)
    if window.size:
        return int(window[rng.integers(window.size)])
    return int(np.argmin(gap))


def sample_triplet(
    table: DistanceTable,
    config: TripletSamplerConfig,
    rng: np.random.Generator,
    max_resamples: int = MAX_RESAMPLES,
) -> Triplet:
    """
    Threshold sampling.

    The anchor is uniform; q+ is uniform among bucket entries whose distance is
    within tolerance of T_p (else the single nearest entry), q- likewise for T_n.

    Args:
        table (DistanceTable): Lookup table
        config (TripletSamplerConfig): Targets and tolerance
        rng (np.random.Generator): Generator
        max_resamples (int): Attempts before giving up

    Returns:
        Triplet: A triplet with d(q, q+) < d(q, q-)

    Raises:
        SamplerExhaustedError: If no valid triplet was found
    """
    for _ in range(max_resamples):
        anchor = int(rng.integers(table.size))
        neighbors = table.neighbors(anchor)
        distances = table.distances(anchor)
        root = np.sqrt(distances)
        pos = _pick(root, config.t_p, config.tolerance, rng)
        neg = _pick(root, config.t_n, config.tolerance, rng)
        if distances[pos] < distances[neg]:
            return Triplet(anchor, int(neighbors[pos]), int(neighbors[neg]))
    raise SamplerExhaustedError(
        f"No triplet with d(q, q+) < d(q, q-) after {max_resamples} attempts "
        f"(T_p={config.t_p}, T_n={config.t_n})"
    )


def sample_uniform_triplet(table: DistanceTable, rng: np.random.Generator) -> Triplet:
    """
    Three distinct rows uniformly at random, the closer non-anchor becoming q+.

    On equal distances the smaller row index becomes q+.

    Raises:
        CapabilityError: On a windowed table
    """
    if table.windowed:
        raise CapabilityError("Uniform sampling needs the full distance table")
    anchor, first, second = (int(i) for i in rng.choice(table.size, 3, replace=False))
    d_first = table.pair_distance(anchor, first)
    d_second = table.pair_distance(anchor, second)
    if d_second < d_first or (d_second == d_first and second < first):
        first, second = second, first
    return Triplet(anchor, first, second)


def triplet_distances_softmax(dp, dn) -> Tuple[np.ndarray, np.ndarray]:
    """
    Softmax-normalise a (positive, negative) distance pair.

    Args:
        dp: Positive distance(s)
        dn: Negative distance(s)

    Returns:
        Tuple: (d'+, d'-) with d'+ = e^dp / (e^dp + e^dn) and d'- = 1 - d'+
    """
    dp = np.asarray(dp, dtype=np.float64)
    dn = np.asarray(dn, dtype=np.float64)
    top = np.maximum(dp, dn)
    ep, en = np.exp(dp - top), np.exp(dn - top)
    positive = ep / (ep + en)
    return positive, 1.0 - positive


def triplet_loss(fq: np.ndarray, fq_pos: np.ndarray, fq_neg: np.ndarray,
                 margin: float = 1.0) -> float:
    """
    max{0, margin + d'+ - d'-} on softmax-normalised squared distances.

    With margin 1 this equals 2 d'+.

    Raises:
        ArgumentError: On length mismatch
    """
    fq, fq_pos, fq_neg = (np.asarray(v, dtype=np.float64) for v in (fq, fq_pos, fq_neg))
    if not fq.shape == fq_pos.shape == fq_neg.shape:
        raise ArgumentError(f"Embedding shapes differ: {fq.shape}, {fq_pos.shape}, {fq_neg.shape}")
    dp = float(np.sum((fq - fq_pos) ** 2))
    dn = float(np.sum((fq - fq_neg) ** 2))
    positive, negative = triplet_distances_softmax(dp, dn)
    return max(0.0, margin + float(positive) - float(negative))


def _backprop_branch(
    stack: SrbmStack,
    activations: List[np.ndarray],
    delta: np.ndarray,
    grads: List[LayerDelta],
    first_layer: int,
) -> None:
    for k in range(len(stack.layers) - 1, first_layer - 1, -1):
        out = activations[k + 1]
        dz = delta * out * (1.0 - out)
        grads[k].weights += activations[k].T @ dz
        grads[k].bias_hid += dz.sum(axis=0)
        if k > first_layer:
            delta = dz @ stack.layers[k].weights.T


def batch_loss_gradient(
    stack: SrbmStack,
    anchors: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    margin: float = 1.0,
    first_layer: int = 0,
) -> Tuple[np.ndarray, List[LayerDelta]]:
    """
    Per-triplet losses and the gradient of their mean.

    The three branches share the stack parameters; each branch is
    back-propagated separately and the branch gradients are summed.

    Args:
        stack (SrbmStack): Shared network
        anchors (np.ndarray): B x dim anchor descriptors
        positives (np.ndarray): B x dim positive descriptors
        negatives (np.ndarray): B x dim negative descriptors
        margin (float): Hinge margin
        first_layer (int): Lowest layer index receiving a gradient

    Returns:
        Tuple[np.ndarray, List[LayerDelta]]: (losses, gradient per layer); the
            visible-bias gradients are zero as the forward pass does not use them
    """
    branches = [forward_activations(stack, rows) for rows in (anchors, positives, negatives)]
    fa, fp, fn = (acts[-1] for acts in branches)
    if not fa.shape == fp.shape == fn.shape:
        raise ArgumentError("Triplet branches must hold the same number of rows")
    diff_p, diff_n = fa - fp, fa - fn
    dp = np.sum(diff_p ** 2, axis=1)
    dn = np.sum(diff_n ** 2, axis=1)
    positive, negative = triplet_distances_softmax(dp, dn)
    losses = np.maximum(0.0, margin + positive - negative)

    # dL/d(dp) = 2 s (1 - s) = -dL/d(dn) con s = d'+
    coef = np.where(margin + positive - negative > 0, 2.0 * positive * negative, 0.0)
    coef = (coef / fa.shape[0])[:, None]
    step_p = coef * (2.0 * diff_p)
    step_n = coef * (2.0 * diff_n)
    deltas = (step_p - step_n, -step_p, step_n)

    grads = [LayerDelta.zeros_like(layer) for layer in stack.layers]
    for acts, delta in zip(branches, deltas):
        _backprop_branch(stack, acts, delta, grads, first_layer)
    return losses, grads


def triplet_loss_gradient(
    stack: SrbmStack,
    anchor: np.ndarray,
    positive: np.ndarray,
    negative: np.ndarray,
    margin: float = 1.0,
) -> List[LayerDelta]:
    """
    Exact gradient of triplet_loss(encode_real(q), encode_real(q+), encode_real(q-)).

    Args:
        stack (SrbmStack): Shared network
        anchor (np.ndarray): Descriptor q
        positive (np.ndarray): Descriptor q+
        negative (np.ndarray): Descriptor q-
        margin (float): Hinge margin

    Returns:
        List[LayerDelta]: One gradient per layer
    """
    rows = [np.asarray(v, dtype=np.float64).reshape(1, -1) for v in (anchor, positive, negative)]
    _, grads = batch_loss_gradient(stack, *rows, margin=margin)
    return grads


EpochCallback = Callable[[int, SrbmStack, float], None]


class TripletFinetuner:
    """
    Fine-tunes a stack with SGD and momentum on the triplet ranking loss.

    Attributes:
        sampler_config (TripletSamplerConfig): Sampling targets
        config (FinetuneConfig): Optimisation settings
        show_progress (bool): Whether to display tqdm progress bars
        logger (logging.Logger): Logger instance
    """

    def __init__(
        self,
        sampler_config: TripletSamplerConfig,
        config: FinetuneConfig,
        show_progress: bool = False,
    ):
        self.sampler_config = sampler_config
        self.config = config
        self.show_progress = show_progress
        self.logger = logging.getLogger(__name__)

    def sample_epoch(self, table: DistanceTable, mode: str, rng: np.random.Generator) -> np.ndarray:
        """
        Draw one epoch of triplets.

        Returns:
            np.ndarray: triplets_per_epoch x 3 matrix of (anchor, positive, negative)
        """
        if mode not in SAMPLING_MODES:
            raise ArgumentError(f"Unknown sampling mode {mode!r}; expected one of {SAMPLING_MODES}")
        triplets = np.empty((self.sampler_config.triplets_per_epoch, 3), dtype=np.int64)
        for i in range(triplets.shape[0]):
            if mode == "threshold":
                t = sample_triplet(table, self.sampler_config, rng)
            else:
                t = sample_uniform_triplet(table, rng)
            triplets[i] = (t.anchor, t.positive, t.negative)
        return triplets

    def finetune(
        self,
        stack: SrbmStack,
        train: DescriptorDataset,
        table: DistanceTable,
        mode: str = "threshold",
        epoch_callback: Optional[EpochCallback] = None,
    ) -> Tuple[SrbmStack, List[float]]:
        """
        Run the fine-tuning epochs.

        Args:
            stack (SrbmStack): Starting network, left unchanged
            train (DescriptorDataset): Training descriptors the table was built on
            table (DistanceTable): Distance lookup table
            mode (str): 'threshold' or 'uniform' sampling
            epoch_callback (Optional[EpochCallback]): Called with (epoch, stack, mean loss)

        Returns:
            Tuple[SrbmStack, List[float]]: Fine-tuned stack and mean loss per epoch

        Raises:
            DivergenceError: If the loss or the parameters become non-finite
        """
        if train.dim != stack.input_dim:
            raise ArgumentError(f"Training dim {train.dim} != stack input dim {stack.input_dim}")
        if table.size != train.count:
            raise ArgumentError(f"Table built over {table.size} rows, training set has {train.count}")
        cfg = self.config
        data = train.data.astype(np.float64)
        first_layer = len(stack.layers) - 1 if cfg.update_layers == "top" else 0
        layers = list(stack.layers)
        velocity = [LayerDelta.zeros_like(layer) for layer in layers]
        trace: List[float] = []

        epochs = tqdm(range(cfg.epochs), desc="Fine-tuning", disable=not self.show_progress)
        for epoch in epochs:
            rng = np.random.default_rng([cfg.seed, epoch])
            triplets = self.sample_epoch(table, mode, rng)
            total = 0.0
            for start in range(0, triplets.shape[0], cfg.batch_size):
                batch = triplets[start:start + cfg.batch_size]
                current = SrbmStack(layers)
                losses, grads = batch_loss_gradient(
                    current, data[batch[:, 0]], data[batch[:, 1]], data[batch[:, 2]],
                    cfg.margin, first_layer,
                )
                if not np.all(np.isfinite(losses)):
                    raise DivergenceError("Triplet loss became non-finite", cfg.learning_rate)
                total += float(losses.sum())
                for k in range(first_layer, len(layers)):
                    descent = LayerDelta(-grads[k].weights, -grads[k].bias_vis, -grads[k].bias_hid)
                    velocity[k] = velocity[k].scaled_add(descent, cfg.momentum)
                    try:
                        layers[k] = layers[k].apply(velocity[k], cfg.learning_rate)
                    except DataValidationError as error:
                        raise DivergenceError(
                            f"Layer {k} parameters became non-finite", cfg.learning_rate
                        ) from error
            trace.append(total / triplets.shape[0])
            self.logger.info(f"Fine-tuning epoch {epoch + 1}/{cfg.epochs} ({mode}): mean loss {trace[-1]:.6f}")
            if epoch_callback is not None:
                epoch_callback(epoch + 1, SrbmStack(layers), trace[-1])
        return SrbmStack(layers), trace


def finetune(
    stack: SrbmStack,
    train: DescriptorDataset,
    table: DistanceTable,
    sampler_config: TripletSamplerConfig,
    config: FinetuneConfig,
    mode: str = "threshold",
    epoch_callback: Optional[EpochCallback] = None,
) -> Tuple[SrbmStack, List[float]]:
    """Fine-tune a stack; see TripletFinetuner.finetune."""
    return TripletFinetuner(sampler_config, config).finetune(
        stack, train, table, mode, epoch_callback
    )


def _pair_distances(pairs: Sequence[Tuple[str, str]], dataset: DescriptorDataset,
                    index: dict) -> np.ndarray:
    try:
        rows = np.array([(index[a], index[b]) for a, b in pairs], dtype=np.int64)
    except KeyError as error:
        raise ArgumentError(f"Pair id {error.args[0]!r} not found in the descriptor set") from None
    data = dataset.data.astype(np.float64)
    return np.sum((data[rows[:, 0]] - data[rows[:, 1]]) ** 2, axis=1)


def match_distance_histogram(
    match_pairs: Sequence[Tuple[str, str]],
    nonmatch_pairs: Sequence[Tuple[str, str]],
    dataset: DescriptorDataset,
    n_bins: int = 50,
) -> DistanceHistogram:
    """
    Histograms of squared distances for match and non-match pairs.

    Both use the same equal-width bins spanning the pooled range.

    Raises:
        ArgumentError: Empty pair list, unknown id or n_bins < 1
    """
    if not match_pairs or not nonmatch_pairs:
        raise ArgumentError("Both match and non-match pair lists must be non-empty")
    if n_bins < 1:
        raise ArgumentError(f"n_bins must be >= 1, got {n_bins}")
    index = dataset.index_of()
    match = _pair_distances(match_pairs, dataset, index)
    nonmatch = _pair_distances(nonmatch_pairs, dataset, index)
    pooled = np.concatenate([match, nonmatch])
    low, high = float(pooled.min()), float(pooled.max())
    if high == low:
        high = low + 1.0
    edges = np.linspace(low, high, n_bins + 1)
    return DistanceHistogram(
        edges=edges,
        match_counts=np.histogram(match, bins=edges)[0],
        nonmatch_counts=np.histogram(nonmatch, bins=edges)[0],
    )
