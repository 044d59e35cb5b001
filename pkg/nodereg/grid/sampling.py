import itertools
from typing import List, Tuple

import numpy as np

from nodereg.grid.types import Image, LabelMap, VoxelCloud, require_same_shape


def _cell_coordinates(coords: np.ndarray, shape: Tuple[int, ...]):
    """Lower cell corner, fractional offset and clamp-inactive mask per axis"""
    lower: List[np.ndarray] = []
    frac: List[np.ndarray] = []
    inside: List[np.ndarray] = []
    for axis, n in enumerate(shape):
        c = coords[axis]
        clamped = np.clip(c, 0.0, n - 1.0)
        i0 = np.minimum(np.floor(clamped), n - 2).astype(np.int64)
        lower.append(i0)
        frac.append(clamped - i0)
        inside.append((c >= 0.0) & (c <= n - 1.0))
    return lower, frac, inside


def _cell_slope(values: np.ndarray, lower, frac, axis: int, shift: int) -> np.ndarray:
    """Forward difference along `axis` in the cell `shift` steps from the lower one, interpolated across the other axes"""
    dim = values.ndim
    base = np.maximum(lower[axis] + shift, 0)
    others = [b for b in range(dim) if b != axis]
    slope = np.zeros(base.shape)
    for corner in itertools.product((0, 1), repeat=dim - 1):
        index = list(lower)
        weight = np.ones(base.shape)
        for b, c in zip(others, corner):
            index[b] = lower[b] + c
            weight = weight * (frac[b] if c else 1.0 - frac[b])
        index[axis] = base + 1
        upper = values[tuple(index)]
        index[axis] = base
        slope += weight * (upper - values[tuple(index)])
    return slope


def _interpolate(values: np.ndarray, coords: np.ndarray, with_gradient: bool):
    shape = values.shape
    dim = len(shape)
    lower, frac, inside = _cell_coordinates(coords, shape)
    out = np.zeros(coords.shape[1:])
    grad = np.zeros(coords.shape) if with_gradient else None

    for corner in itertools.product((0, 1), repeat=dim):
        index = tuple(lower[a] + corner[a] for a in range(dim))
        sample = values[index]
        factors = [frac[a] if corner[a] else 1.0 - frac[a] for a in range(dim)]
        out += np.prod(factors, axis=0) * sample
        if with_gradient:
            for a in range(dim):
                others = [factors[b] for b in range(dim) if b != a]
                sign = 1.0 if corner[a] else -1.0
                grad[a] += sign * np.prod(others, axis=0) * sample

    if with_gradient:
        for a in range(dim):
            # a lattice coordinate sits on the face of two cells: average their slopes
            on_face = (frac[a] == 0.0) & (lower[a] > 0)
            if on_face.any():
                left = _cell_slope(values, lower, frac, a, shift=-1)
                grad[a] = np.where(on_face, 0.5 * (grad[a] + left), grad[a])
            grad[a] *= inside[a]
    return out, grad


def warp(image: Image, cloud: VoxelCloud) -> Image:
    """Resample J at the cloud coordinates (bilinear / trilinear, border clamped)"""
    require_same_shape(image.shape, cloud.shape)
    out, _ = _interpolate(image.values, cloud.coords, with_gradient=False)
    return Image(out)


def warp_with_gradient(image: Image, cloud: VoxelCloud) -> Tuple[Image, np.ndarray]:
    """Warp plus d(warped)/d(coords), shape (dim, *extents), zero where clamped

    Interpolation is only piecewise differentiable. On an interior lattice
    coordinate the slope is the mean of the two adjacent cells, so an identity
    cloud sees central differences.
    """
    require_same_shape(image.shape, cloud.shape)
    out, grad = _interpolate(image.values, cloud.coords, with_gradient=True)
    return Image(out), grad


def warp_labels(labelmap: LabelMap, cloud: VoxelCloud) -> LabelMap:
    """Nearest-neighbour resampling of a categorical map (halves round up)"""
    require_same_shape(labelmap.shape, cloud.shape)
    index = []
    for axis, n in enumerate(labelmap.shape):
        clamped = np.clip(cloud.coords[axis], 0.0, n - 1.0)
        index.append(np.floor(clamped + 0.5).astype(np.int64))
    return LabelMap(labelmap.labels[tuple(index)])
