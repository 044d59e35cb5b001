"""N-d convolution building blocks with hand-derived vector-Jacobian products.

Feature maps are channel-first arrays ``(C, *extents)`` without a batch axis.
Every convolution uses a 3-tap stencil per axis with one voxel of zero padding.
"""

import itertools
from typing import List, Tuple

import numpy as np

KERNEL_TAPS = 3


def conv_output_extents(extents: Tuple[int, ...], stride: int) -> Tuple[int, ...]:
    return tuple((n - 1) // stride + 1 for n in extents)


def _offsets(dim: int):
    return itertools.product(range(KERNEL_TAPS), repeat=dim)


def _window(offset: Tuple[int, ...], out_extents: Tuple[int, ...], stride: int) -> tuple:
    return (slice(None),) + tuple(
        slice(o, o + stride * (m - 1) + 1, stride) for o, m in zip(offset, out_extents)
    )


def conv_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int) -> np.ndarray:
    """weight: (C_out, C_in, 3, ..., 3); returns (C_out, *out_extents)"""
    dim = x.ndim - 1
    out_extents = conv_output_extents(x.shape[1:], stride)
    padded = np.pad(x, [(0, 0)] + [(1, 1)] * dim)
    out = np.zeros((weight.shape[0],) + out_extents)
    for offset in _offsets(dim):
        tap = weight[(slice(None), slice(None)) + offset]
        out += np.tensordot(tap, padded[_window(offset, out_extents, stride)], axes=([1], [0]))
    out += bias.reshape((-1,) + (1,) * dim)
    return out


def conv_backward(
    x: np.ndarray,
    weight: np.ndarray,
    stride: int,
    grad_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_weight, grad_bias)"""
    dim = x.ndim - 1
    out_extents = grad_out.shape[1:]
    padded = np.pad(x, [(0, 0)] + [(1, 1)] * dim)
    grad_padded = np.zeros_like(padded)
    grad_weight = np.zeros_like(weight)
    spatial = list(range(1, dim + 1))
    for offset in _offsets(dim):
        window = _window(offset, out_extents, stride)
        index = (slice(None), slice(None)) + offset
        grad_weight[index] = np.tensordot(grad_out, padded[window], axes=(spatial, spatial))
        grad_padded[window] += np.tensordot(weight[index], grad_out, axes=([0], [0]))
    grad_bias = grad_out.sum(axis=tuple(spatial))
    interior = (slice(None),) + (slice(1, -1),) * dim
    return grad_padded[interior], grad_weight, grad_bias


def upsample_forward(x: np.ndarray, target: Tuple[int, ...]) -> np.ndarray:
    """Nearest-neighbour x2 upsampling cropped to the target extents"""
    out = x
    for axis in range(1, x.ndim):
        out = np.repeat(out, 2, axis=axis)
    crop = (slice(None),) + tuple(slice(0, n) for n in target)
    return out[crop]


def upsample_backward(grad_out: np.ndarray, source: Tuple[int, ...]) -> np.ndarray:
    dim = len(source)
    full = np.zeros((grad_out.shape[0],) + tuple(2 * n for n in source))
    full[(slice(None),) + tuple(slice(0, n) for n in grad_out.shape[1:])] = grad_out
    shape: List[int] = [grad_out.shape[0]]
    for n in source:
        shape.extend([n, 2])
    return full.reshape(shape).sum(axis=tuple(range(2, 2 + 2 * dim, 2)))


def tanh_backward(activated: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (1.0 - activated ** 2)
