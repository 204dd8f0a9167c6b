"""
Módulo de Servicio de Entrenamiento RBM
=======================================

Condicionales de Gibbs de una RBM binaria, actualización por divergencia
contrastiva (CD-k) con momento, verosimilitud exacta para RBMs pequeñas y
entrenamiento voraz capa por capa de la pila SRBM.

Clases:
    RbmTrainer: Servicio de entrenamiento de RBMs y pilas SRBM
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logsumexp
from tqdm import tqdm

from ..models.config import RbmTrainConfig
from ..models.descriptors import DescriptorDataset
from ..models.rbm import LayerDelta, RbmLayer, SrbmStack, check_layer_sizes
from ..utils.errors import ArgumentError, CapabilityError, DivergenceError
from ..utils.validators import DataValidator


logger = logging.getLogger(__name__)
_validator = DataValidator()

INIT_WEIGHT_STD = 0.01
# Below this many momentum-scaled steps (lr / (1 - momentum) per update) the
# weights barely leave their initialisation and every code collapses
MIN_STEP_BUDGET = 100.0


def _as_rows(values: np.ndarray, width: int, name: str) -> Tuple[np.ndarray, bool]:
    array = np.asarray(values, dtype=np.float64)
    single = array.ndim == 1
    rows = array.reshape(1, -1) if single else array
    if rows.ndim != 2 or rows.shape[1] != width:
        raise ArgumentError(f"{name} has shape {array.shape}, expected length {width}")
    return rows, single


def hidden_activation(layer: RbmLayer, visible: np.ndarray) -> np.ndarray:
    """
    P(h_j = 1 | v) = sigmoid(b_j + sum_i w_ij v_i).

    Args:
        layer (RbmLayer): The RBM
        visible (np.ndarray): Vector of length n_vis, or a matrix of such rows, in [0, 1]

    Returns:
        np.ndarray: Hidden activation probabilities, same leading shape as the input

    Raises:
        ArgumentError: Shape mismatch or values outside [0, 1]
    """
    rows, single = _as_rows(visible, layer.n_vis, "visible vector")
    _validator.check_unit_interval(rows, "visible vector")
    probs = expit(rows @ layer.weights + layer.bias_hid)
    return probs[0] if single else probs


def visible_activation(layer: RbmLayer, hidden: np.ndarray) -> np.ndarray:
    """
    P(v_i = 1 | h) = sigmoid(b_i + sum_j w_ij h_j).

    Args:
        layer (RbmLayer): The RBM
        hidden (np.ndarray): Vector of length n_hid, or a matrix of such rows, in [0, 1]

    Returns:
        np.ndarray: Visible activation probabilities
    """
    rows, single = _as_rows(hidden, layer.n_hid, "hidden vector")
    _validator.check_unit_interval(rows, "hidden vector")
    probs = expit(rows @ layer.weights.T + layer.bias_vis)
    return probs[0] if single else probs


def sample_bernoulli(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Draw independent bits, bit i being 1 with probability probs[i].

    Args:
        probs (np.ndarray): Probabilities in [0, 1], any shape
        rng (np.random.Generator): Seeded generator

    Returns:
        np.ndarray: 0/1 float64 array of the same shape
    """
    probs = np.asarray(probs, dtype=np.float64)
    _validator.check_unit_interval(probs, "probabilities")
    return (rng.random(probs.shape) < probs).astype(np.float64)


def step_budget(config: RbmTrainConfig, n_rows: int) -> float:
    """
    Total momentum-scaled step length of one layer's training schedule.

    Args:
        config (RbmTrainConfig): Training settings
        n_rows (int): Training rows

    Returns:
        float: epochs * updates per epoch * learning_rate / (1 - momentum)
    """
    updates = config.epochs * int(np.ceil(n_rows / config.batch_size))
    return updates * config.learning_rate / (1.0 - config.momentum)


def cd_update(
    layer: RbmLayer,
    batch: np.ndarray,
    config: RbmTrainConfig,
    velocity: LayerDelta,
    rng: np.random.Generator,
) -> Tuple[RbmLayer, LayerDelta, float]:
    """
    One CD-k step with momentum.

    The gradient is (<v h^T>_data - <v h^T>_recon) / batch_size, with the
    analogous bias terms. ``velocity <- momentum * velocity + gradient`` and
    ``param <- param + learning_rate * velocity``.

    Args:
        layer (RbmLayer): Current parameters
        batch (np.ndarray): batch_size x n_vis matrix in [0, 1]
        config (RbmTrainConfig): Hyper-parameters
        velocity (LayerDelta): Momentum state
        rng (np.random.Generator): Generator for the Gibbs chain

    Returns:
        Tuple[RbmLayer, LayerDelta, float]: New layer, new velocity, and the mean
            squared error between the batch and its reconstruction probabilities

    Raises:
        DivergenceError: If any parameter becomes non-finite
    """
    v_data, _ = _as_rows(batch, layer.n_vis, "batch")
    h_data = expit(v_data @ layer.weights + layer.bias_hid)
    h_state = (rng.random(h_data.shape) < h_data).astype(np.float64)
    for step in range(config.cd_steps):
        v_model = expit(h_state @ layer.weights.T + layer.bias_vis)
        h_model = expit(v_model @ layer.weights + layer.bias_hid)
        if step + 1 < config.cd_steps:
            h_state = (rng.random(h_model.shape) < h_model).astype(np.float64)

    n = v_data.shape[0]
    gradient = LayerDelta(
        weights=(v_data.T @ h_data - v_model.T @ h_model) / n,
        bias_vis=(v_data - v_model).sum(axis=0) / n,
        bias_hid=(h_data - h_model).sum(axis=0) / n,
    )
    velocity = velocity.scaled_add(gradient, config.momentum)
    weights = layer.weights + config.learning_rate * velocity.weights
    bias_vis = layer.bias_vis + config.learning_rate * velocity.bias_vis
    bias_hid = layer.bias_hid + config.learning_rate * velocity.bias_hid
    if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias_vis))
            and np.all(np.isfinite(bias_hid))):
        raise DivergenceError("RBM parameters became non-finite", config.learning_rate)
    error = float(np.mean((v_data - v_model) ** 2))
    return RbmLayer(weights, bias_vis, bias_hid), velocity, error


def _visible_states(n_vis: int) -> np.ndarray:
    codes = np.arange(2 ** n_vis, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n_vis)) & 1).astype(np.float64)


def _neg_free_energy(layer: RbmLayer, visible: np.ndarray) -> np.ndarray:
    # log sum_h exp(-E(v, h)), sumando las unidades ocultas analíticamente
    pre = visible @ layer.weights + layer.bias_hid
    return visible @ layer.bias_vis + np.logaddexp(0.0, pre).sum(axis=1)


def exact_log_likelihood(
    layer: RbmLayer,
    data: np.ndarray,
    weights: Optional[np.ndarray] = None,
) -> float:
    """
    Mean exact log-likelihood of rows under the RBM.

    log P(v) = log sum_h exp(-E(v, h)) - log Z with
    E(v, h) = -b_v.v - b_h.h - v^T W h. Z is summed over every joint state.

    Args:
        layer (RbmLayer): The RBM, with n_vis + n_hid <= 20
        data (np.ndarray): Rows of visible states
        weights (Optional[np.ndarray]): Optional per-row weights for a weighted mean

    Returns:
        float: (Weighted) mean log-likelihood

    Raises:
        CapabilityError: If the model is too large to enumerate
    """
    n_units = layer.n_vis + layer.n_hid
    if not _validator.check_enumerable(n_units):
        raise CapabilityError(
            f"Exact likelihood enumerates 2^{n_units} states; limit is "
            f"{_validator.validation_rules['max_enumeration_units']} units"
        )
    rows, _ = _as_rows(data, layer.n_vis, "data")
    log_z = logsumexp(_neg_free_energy(layer, _visible_states(layer.n_vis)))
    log_p = _neg_free_energy(layer, rows) - log_z
    return float(np.average(log_p, weights=weights))


def visible_distribution(layer: RbmLayer) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact marginal P(v) over every visible state of a small RBM.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (states, probabilities)
    """
    states = _visible_states(layer.n_vis)
    log_weights = _neg_free_energy(layer, states)
    return states, np.exp(log_weights - logsumexp(log_weights))


class RbmTrainer:
    """
    Trains single RBMs and greedy stacks by contrastive divergence.

    Attributes:
        config (RbmTrainConfig): Hyper-parameters
        show_progress (bool): Whether to display tqdm progress bars
        history (List[List[float]]): Per-layer reconstruction errors by epoch, from the last run
        logger (logging.Logger): Logger instance
    """

    def __init__(self, config: RbmTrainConfig, show_progress: bool = False):
        self.config = config
        self.show_progress = show_progress
        self.history: List[List[float]] = []
        self.logger = logging.getLogger(__name__)

    def init_layer(self, n_vis: int, n_hid: int, rng: np.random.Generator) -> RbmLayer:
        """Weights ~ N(0, 0.01^2), biases zero."""
        return RbmLayer(
            INIT_WEIGHT_STD * rng.standard_normal((n_vis, n_hid)),
            np.zeros(n_vis),
            np.zeros(n_hid),
        )

    def train_layer(self, data: np.ndarray, n_hidden: int, layer_index: int = 0) -> RbmLayer:
        """
        Train one RBM on rows in [0, 1].

        Args:
            data (np.ndarray): count x n_vis matrix
            n_hidden (int): Hidden unit count
            layer_index (int): Position in the stack, mixed into the seed

        Returns:
            RbmLayer: Trained layer
        """
        if n_hidden < 1:
            raise ArgumentError(f"n_hidden must be >= 1, got {n_hidden}")
        if data.shape[0] == 0:
            raise ArgumentError("Cannot train an RBM on an empty dataset")
        _validator.check_unit_interval(data, "training data")
        cfg = self.config
        budget = step_budget(cfg, data.shape[0])
        if budget < MIN_STEP_BUDGET:
            self.logger.warning(
                f"RBM layer {layer_index}: step budget {budget:.3g} is below {MIN_STEP_BUDGET:g}; "
                f"raise epochs or learning_rate, or lower batch_size"
            )
        rng = np.random.default_rng([cfg.seed, layer_index])
        layer = self.init_layer(data.shape[1], n_hidden, rng)
        velocity = LayerDelta.zeros_like(layer)
        errors: List[float] = []

        epochs = tqdm(range(cfg.epochs), desc=f"RBM layer {layer_index}",
                      disable=not self.show_progress, leave=False)
        for epoch in epochs:
            order = rng.permutation(data.shape[0])
            total, batches = 0.0, 0
            for start in range(0, order.size, cfg.batch_size):
                batch = data[order[start:start + cfg.batch_size]]
                layer, velocity, error = cd_update(layer, batch, cfg, velocity, rng)
                total += error
                batches += 1
            errors.append(total / batches)
            self.logger.debug(f"layer {layer_index} epoch {epoch + 1}: reconstruction error {errors[-1]:.6f}")
        self.logger.info(
            f"Trained RBM {data.shape[1]}x{n_hidden} for {cfg.epochs} epochs, "
            f"final reconstruction error {errors[-1]:.6f}"
        )
        self.history.append(errors)
        return layer

    def train_rbm(self, dataset: DescriptorDataset, n_hidden: int) -> RbmLayer:
        """
        Train a single RBM on a normalized dataset.

        Args:
            dataset (DescriptorDataset): Descriptors in [0, 1]
            n_hidden (int): Hidden unit count

        Returns:
            RbmLayer: Trained layer
        """
        self.history = []
        return self.train_layer(dataset.data.astype(np.float64), n_hidden, 0)

    def train_stack(self, dataset: DescriptorDataset, layer_sizes: Sequence[int]) -> SrbmStack:
        """
        Greedy layer-by-layer training.

        Layer k+1 is trained on the hidden activation probabilities of layer k.

        Args:
            dataset (DescriptorDataset): Descriptors in [0, 1]
            layer_sizes (Sequence[int]): Unit counts from input dim to output bits

        Returns:
            SrbmStack: Trained stack
        """
        sizes = check_layer_sizes(layer_sizes, dataset.dim)
        self.history = []
        current = dataset.data.astype(np.float64)
        layers = []
        for index, n_hidden in enumerate(sizes[1:]):
            layer = self.train_layer(current, n_hidden, index)
            layers.append(layer)
            current = expit(current @ layer.weights + layer.bias_hid)
        stack = SrbmStack(layers)
        self.logger.info(f"Trained {stack}")
        return stack


def train_rbm(dataset: DescriptorDataset, n_hidden: int, config: RbmTrainConfig) -> RbmLayer:
    """Train a single RBM; see RbmTrainer.train_rbm."""
    return RbmTrainer(config).train_rbm(dataset, n_hidden)


def train_stack(dataset: DescriptorDataset, layer_sizes: Sequence[int],
                config: RbmTrainConfig) -> SrbmStack:
    """Greedy stack training; see RbmTrainer.train_stack."""
    return RbmTrainer(config).train_stack(dataset, layer_sizes)
