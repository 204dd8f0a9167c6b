"""
Módulo de Servicio de Embedding
===============================

Paso hacia adelante de la pila SRBM, binarización en 0.5 y la
inicialización aleatoria de pesos de norma unitaria.
"""

import logging
from typing import List, Sequence

import numpy as np
from scipy.special import expit

from ..models.descriptors import BinaryCodeSet, DescriptorDataset
from ..models.rbm import RbmLayer, SrbmStack
from ..utils.errors import ArgumentError


logger = logging.getLogger(__name__)


def forward_activations(stack: SrbmStack, rows: np.ndarray) -> List[np.ndarray]:
    """
    Activations of every layer for a batch of rows.

    Args:
        stack (SrbmStack): The network
        rows (np.ndarray): count x input_dim matrix

    Returns:
        List[np.ndarray]: [input, layer 1 output, ..., final output], float64
    """
    current = np.asarray(rows, dtype=np.float64)
    if current.ndim != 2 or current.shape[1] != stack.input_dim:
        raise ArgumentError(
            f"Input of shape {current.shape} does not match stack input dim {stack.input_dim}"
        )
    activations = [current]
    for layer in stack.layers:
        current = expit(current @ layer.weights + layer.bias_hid)
        activations.append(current)
    return activations


def encode_real(stack: SrbmStack, x: np.ndarray) -> np.ndarray:
    """
    Real-valued embedding g = sigma(b2 + W2 sigma(b1 + W1 x)) ...

    Args:
        stack (SrbmStack): The network
        x (np.ndarray): A descriptor vector, or a matrix of descriptor rows

    Returns:
        np.ndarray: Output activations in (0, 1), same leading shape as x
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    output = forward_activations(stack, x.reshape(1, -1) if single else x)[-1]
    return output[0] if single else output


def binarize(g: np.ndarray) -> np.ndarray:
    """Bit i is 1 iff g_i > 0.5; exactly 0.5 maps to 0."""
    return (np.asarray(g) > 0.5).astype(np.uint8)


def encode_binary(stack: SrbmStack, dataset: DescriptorDataset) -> BinaryCodeSet:
    """
    Hash every descriptor row, keeping ids and order.

    Args:
        stack (SrbmStack): Trained network
        dataset (DescriptorDataset): Descriptors, normalized like the training data

    Returns:
        BinaryCodeSet: Codes of stack.n_bits bits

    Raises:
        ArgumentError: If the descriptor dim differs from the stack input dim
    """
    if dataset.dim != stack.input_dim:
        raise ArgumentError(f"Descriptor dim {dataset.dim} != stack input dim {stack.input_dim}")
    if dataset.count == 0:
        return BinaryCodeSet.from_bits([], np.zeros((0, stack.n_bits), dtype=np.uint8))
    bits = binarize(encode_real(stack, dataset.data))
    logger.info(f"Encoded {dataset.count} descriptors into {stack.n_bits}-bit codes")
    return BinaryCodeSet.from_bits(dataset.ids, bits)


def random_unit_stack(layer_sizes: Sequence[int], seed: int) -> SrbmStack:
    """
    Stack with random unit-norm incoming weight vectors and zero biases.

    Args:
        layer_sizes (Sequence[int]): Unit counts from input dim to output bits
        seed (int): Random seed

    Returns:
        SrbmStack: Untrained network
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ArgumentError(f"Invalid layer sizes {sizes}")
    rng = np.random.default_rng(seed)
    layers = []
    for n_vis, n_hid in zip(sizes, sizes[1:]):
        weights = rng.standard_normal((n_vis, n_hid))
        weights /= np.linalg.norm(weights, axis=0, keepdims=True)
        layers.append(RbmLayer(weights, np.zeros(n_vis), np.zeros(n_hid)))
    return SrbmStack(layers)
