"""Image similarity terms and their gradients with respect to the warped image."""

import numpy as np

from nodereg.config import LossConfig
from nodereg.errors import ConfigError
from nodereg.grid.types import Image, require_same_shape


def box_sum(values: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1)^d window around each voxel, truncated at the borders"""
    out = np.asarray(values, dtype=np.float64)
    for axis in range(out.ndim):
        n = out.shape[axis]
        moved = np.moveaxis(out, axis, 0)
        csum = np.concatenate([np.zeros((1,) + moved.shape[1:]), np.cumsum(moved, axis=0)])
        upper = np.minimum(np.arange(n) + radius + 1, n)
        lower = np.maximum(np.arange(n) - radius, 0)
        out = np.moveaxis(csum[upper] - csum[lower], 0, axis)
    return out


def _window_stats(fixed: np.ndarray, moving: np.ndarray, window: int):
    radius = window // 2
    # windowed statistics are shift invariant; centering limits cancellation
    i = fixed - fixed.mean()
    j = moving - moving.mean()
    count = box_sum(np.ones_like(i), radius)
    mean_i = box_sum(i, radius) / count
    mean_j = box_sum(j, radius) / count
    cross = box_sum(i * j, radius) / count - mean_i * mean_j
    var_i = box_sum(i * i, radius) / count - mean_i ** 2
    var_j = box_sum(j * j, radius) / count - mean_j ** 2
    return i, j, count, mean_i, mean_j, cross, var_i, var_j


def local_ncc_map(fixed: Image, moving: Image, window: int, variance_floor: float = 1e-8) -> np.ndarray:
    """Correlation of each voxel's window; 0 where either variance is below the floor"""
    require_same_shape(fixed.shape, moving.shape)
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"NCC window must be odd, got {window}")
    _, _, _, _, _, cross, var_i, var_j = _window_stats(fixed.values, moving.values, window)
    valid = (var_i > variance_floor) & (var_j > variance_floor)
    denom = np.sqrt(np.where(valid, var_i * var_j, 1.0))
    return np.where(valid, cross / denom, 0.0)


def ncc(fixed: Image, moving: Image, window: int, variance_floor: float = 1e-8) -> float:
    """Mean local normalized cross correlation over all voxels, in [-1, 1]"""
    return float(np.mean(local_ncc_map(fixed, moving, window, variance_floor)))


def ncc_gradient(fixed: Image, moving: Image, window: int, variance_floor: float = 1e-8) -> np.ndarray:
    """d ncc / d moving"""
    require_same_shape(fixed.shape, moving.shape)
    radius = window // 2
    i, j, count, mean_i, mean_j, cross, var_i, var_j = _window_stats(
        fixed.values, moving.values, window
    )
    valid = (var_i > variance_floor) & (var_j > variance_floor)
    safe_i = np.where(valid, var_i, 1.0)
    safe_j = np.where(valid, var_j, 1.0)
    alpha = np.where(valid, 1.0 / (count * np.sqrt(safe_i * safe_j)), 0.0)
    beta = np.where(valid, cross / (count * np.sqrt(safe_i) * safe_j ** 1.5), 0.0)
    grad = (
        i * box_sum(alpha, radius)
        - box_sum(alpha * mean_i, radius)
        - j * box_sum(beta, radius)
        + box_sum(beta * mean_j, radius)
    )
    return grad / i.size


def mse(fixed: Image, moving: Image) -> float:
    require_same_shape(fixed.shape, moving.shape)
    return float(np.mean((moving.values - fixed.values) ** 2))


def mse_gradient(fixed: Image, moving: Image) -> np.ndarray:
    """d mse / d moving"""
    require_same_shape(fixed.shape, moving.shape)
    return 2.0 * (moving.values - fixed.values) / moving.values.size


def similarity_loss(fixed: Image, warped: Image, config: LossConfig) -> float:
    """L_sim: 1 - ncc or mse"""
    if config.similarity == "ncc":
        return 1.0 - ncc(fixed, warped, config.window, config.variance_floor)
    return mse(fixed, warped)


def similarity_gradient(fixed: Image, warped: Image, config: LossConfig) -> np.ndarray:
    if config.similarity == "ncc":
        return -ncc_gradient(fixed, warped, config.window, config.variance_floor)
    return mse_gradient(fixed, warped)
