"""
Módulo de Modelo RBM
====================

Parámetros de una RBM binaria y de la pila de RBMs (SRBM) que define la
red de embedding.

Clases:
    RbmLayer: Pesos y sesgos de una RBM
    LayerDelta: Estado con la forma de los parámetros (gradientes, velocidades)
    SrbmStack: Pila ordenada de RbmLayer
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ..utils.errors import ArgumentError, DataValidationError


@dataclass(frozen=True, eq=False)
class RbmLayer:
    """
    Binary-binary restricted Boltzmann machine.

    Attributes:
        weights (np.ndarray): n_vis x n_hid matrix w_ij
        bias_vis (np.ndarray): Visible biases b_i
        bias_hid (np.ndarray): Hidden biases b_j
    """

    weights: np.ndarray
    bias_vis: np.ndarray
    bias_hid: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        bias_vis = np.array(self.bias_vis, dtype=np.float64).reshape(-1)
        bias_hid = np.array(self.bias_hid, dtype=np.float64).reshape(-1)
        if weights.ndim != 2:
            raise ArgumentError(f"Weight matrix must be 2-D, got shape {weights.shape}")
        if weights.shape != (bias_vis.size, bias_hid.size):
            raise ArgumentError(
                f"Weights {weights.shape} inconsistent with biases "
                f"({bias_vis.size}, {bias_hid.size})"
            )
        for name, array in (("weights", weights), ("bias_vis", bias_vis), ("bias_hid", bias_hid)):
            if not np.all(np.isfinite(array)):
                raise DataValidationError(f"Non-finite values in {name}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias_vis", bias_vis)
        object.__setattr__(self, "bias_hid", bias_hid)

    @classmethod
    def zeros(cls, n_vis: int, n_hid: int) -> "RbmLayer":
        return cls(np.zeros((n_vis, n_hid)), np.zeros(n_vis), np.zeros(n_hid))

    @property
    def n_vis(self) -> int:
        return self.weights.shape[0]

    @property
    def n_hid(self) -> int:
        return self.weights.shape[1]

    def transposed(self) -> "RbmLayer":
        """Swap the roles of visible and hidden units."""
        return RbmLayer(self.weights.T, self.bias_hid, self.bias_vis)

    def apply(self, delta: "LayerDelta", scale: float = 1.0) -> "RbmLayer":
        """
        Return a new layer with ``scale * delta`` added to every parameter.

        Args:
            delta (LayerDelta): Parameter-shaped increment
            scale (float): Multiplier applied to the increment

        Returns:
            RbmLayer: Updated copy
        """
        return RbmLayer(
            self.weights + scale * delta.weights,
            self.bias_vis + scale * delta.bias_vis,
            self.bias_hid + scale * delta.bias_hid,
        )

    def allclose(self, other: "RbmLayer", atol: float = 0.0) -> bool:
        return (
            self.weights.shape == other.weights.shape
            and np.allclose(self.weights, other.weights, rtol=0.0, atol=atol)
            and np.allclose(self.bias_vis, other.bias_vis, rtol=0.0, atol=atol)
            and np.allclose(self.bias_hid, other.bias_hid, rtol=0.0, atol=atol)
        )

    def __str__(self) -> str:
        return f"RbmLayer({self.n_vis}x{self.n_hid})"


@dataclass
class LayerDelta:
    """Parameter-shaped state for one layer: a gradient or a momentum velocity."""

    weights: np.ndarray
    bias_vis: np.ndarray
    bias_hid: np.ndarray

    @classmethod
    def zeros_like(cls, layer: RbmLayer) -> "LayerDelta":
        return cls(
            np.zeros_like(layer.weights),
            np.zeros_like(layer.bias_vis),
            np.zeros_like(layer.bias_hid),
        )

    def scaled_add(self, other: "LayerDelta", momentum: float) -> "LayerDelta":
        """Return ``momentum * self + other``."""
        return LayerDelta(
            momentum * self.weights + other.weights,
            momentum * self.bias_vis + other.bias_vis,
            momentum * self.bias_hid + other.bias_hid,
        )

    def max_abs(self) -> float:
        return float(max(
            np.max(np.abs(self.weights), initial=0.0),
            np.max(np.abs(self.bias_vis), initial=0.0),
            np.max(np.abs(self.bias_hid), initial=0.0),
        ))


@dataclass(frozen=True, eq=False)
class SrbmStack:
    """
    Greedily stacked RBMs forming the deep embedding network.

    Attributes:
        layers (List[RbmLayer]): Layers from input to output
    """

    layers: List[RbmLayer]

    def __post_init__(self):
        layers = list(self.layers)
        if not layers:
            raise ArgumentError("A stack needs at least one layer")
        for lower, upper in zip(layers, layers[1:]):
            if lower.n_hid != upper.n_vis:
                raise ArgumentError(
                    f"Layer sizes do not chain: {lower} followed by {upper}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def layer_sizes(self) -> List[int]:
        return [self.layers[0].n_vis] + [layer.n_hid for layer in self.layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0].n_vis

    @property
    def n_bits(self) -> int:
        return self.layers[-1].n_hid

    def parameter_count(self) -> int:
        return sum(l.weights.size + l.bias_vis.size + l.bias_hid.size for l in self.layers)

    def allclose(self, other: "SrbmStack", atol: float = 0.0) -> bool:
        return len(self.layers) == len(other.layers) and all(
            a.allclose(b, atol) for a, b in zip(self.layers, other.layers)
        )

    def __len__(self) -> int:
        return len(self.layers)

    def __str__(self) -> str:
        return "SrbmStack(" + "-".join(str(s) for s in self.layer_sizes) + ")"


def check_layer_sizes(layer_sizes: Sequence[int], input_dim: int) -> List[int]:
    """
    Validate a layer size list for stack training.

    Args:
        layer_sizes (Sequence[int]): Unit counts from input dim to output bits
        input_dim (int): Dimension of the training descriptors

    Returns:
        List[int]: The sizes as a list of ints

    Raises:
        ArgumentError: If sizes do not start at input_dim or do not strictly decrease
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ArgumentError(f"Need at least input and output sizes, got {sizes}")
    if sizes[0] != input_dim:
        raise ArgumentError(f"First layer size {sizes[0]} != descriptor dim {input_dim}")
    if any(s < 1 for s in sizes):
        raise ArgumentError(f"Layer sizes must be positive: {sizes}")
    if any(b >= a for a, b in zip(sizes, sizes[1:])):
        raise ArgumentError(f"Layer sizes must strictly decrease: {sizes}")
    return sizes
