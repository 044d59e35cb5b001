"""Separable Gaussian smoothing K for velocity fields and its exact transpose."""

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Tuple, Union

import numpy as np

from nodereg.errors import ConfigError, ShapeError

PerAxis = Union[int, float, Sequence[Union[int, float]]]


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    """Normalized 1D taps per spatial axis"""

    radius: Tuple[int, ...]
    sigma: Tuple[float, ...]
    taps: Tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return len(self.taps)

    @property
    def is_identity(self) -> bool:
        return all(r == 0 for r in self.radius)


def _per_axis(value: PerAxis, dim: int, name: str) -> tuple:
    if isinstance(value, (int, float, np.integer, np.floating)):
        return (value,) * dim
    values = tuple(value)
    if len(values) != dim:
        raise ConfigError(f"{name} needs {dim} entries, got {len(values)}")
    return values


def gaussian_taps(radius: int, sigma: float) -> np.ndarray:
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-offsets ** 2 / (2.0 * sigma ** 2))
    return taps / taps.sum()


def make_kernel(radius: PerAxis, sigma: PerAxis, dim: int) -> GaussianKernel:
    """Separable Gaussian; radius 0 on every axis is the identity operator"""
    radii = tuple(int(r) for r in _per_axis(radius, dim, "radius"))
    sigmas = tuple(float(s) for s in _per_axis(sigma, dim, "sigma"))
    if any(r < 0 for r in radii):
        raise ConfigError(f"Kernel radius must be >= 0, got {radii}")
    if any(not s > 0 for s in sigmas):
        raise ConfigError(f"Kernel sigma must be > 0, got {sigmas}")
    taps = []
    for r, s in zip(radii, sigmas):
        t = gaussian_taps(r, s)
        t.setflags(write=False)
        taps.append(t)
    return GaussianKernel(radius=radii, sigma=sigmas, taps=tuple(taps))


def reflect_index(index: np.ndarray, n: int) -> np.ndarray:
    """Half-sample symmetric mirror (d c b a | a b c d), repeated for long reaches"""
    m = np.mod(index, 2 * n)
    return np.where(m >= n, 2 * n - 1 - m, m)


@lru_cache(maxsize=64)
def _dense_operator(taps: Tuple[float, ...], n: int) -> np.ndarray:
    radius = (len(taps) - 1) // 2
    rows = np.repeat(np.arange(n), len(taps))
    cols = reflect_index(
        np.arange(n)[:, None] + np.arange(-radius, radius + 1)[None, :], n
    ).ravel()
    op = np.zeros((n, n))
    np.add.at(op, (rows, cols), np.tile(taps, n))
    op.setflags(write=False)
    return op


def axis_operator(taps: np.ndarray, n: int) -> np.ndarray:
    """Dense 1D smoothing matrix A with (A x)_i = sum_j taps_j x[reflect(i + j - r)]

    Built once per (taps, n) and shared read-only.
    """
    return _dense_operator(tuple(float(t) for t in taps), n)


def _check_field(kernel: GaussianKernel, field: np.ndarray) -> None:
    if field.ndim < kernel.dim:
        raise ShapeError(
            f"Field with {field.ndim} axes cannot be smoothed by a {kernel.dim}D kernel"
        )


def _sweep(kernel: GaussianKernel, field: np.ndarray, transpose: bool) -> np.ndarray:
    _check_field(kernel, field)
    out = np.asarray(field, dtype=np.float64)
    if kernel.is_identity:
        return out.copy()
    offset = field.ndim - kernel.dim
    for axis, taps in enumerate(kernel.taps):
        if len(taps) == 1:
            continue
        ax = offset + axis
        op = axis_operator(taps, out.shape[ax])
        moved = np.moveaxis(out, ax, -1)
        moved = moved @ (op if transpose else op.T)
        out = np.moveaxis(moved, -1, ax)
    return np.ascontiguousarray(out)


def apply(kernel: GaussianKernel, field: np.ndarray) -> np.ndarray:
    """Smooth every channel; the trailing kernel.dim axes are spatial"""
    return _sweep(kernel, field, transpose=False)


def apply_transpose(kernel: GaussianKernel, field: np.ndarray) -> np.ndarray:
    """Exact linear transpose of apply under the same boundary rule"""
    return _sweep(kernel, field, transpose=True)
