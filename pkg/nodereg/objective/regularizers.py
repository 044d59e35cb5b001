from typing import Union

import numpy as np

from nodereg.errors import ConfigError
from nodereg.flow.integrator import Trajectory
from nodereg.grid.derivatives import (
    determinant,
    determinant_cofactors,
    field_gradient,
    spatial_gradient_transpose,
)
from nodereg.grid.types import VoxelCloud, identity_coords

CloudLike = Union[VoxelCloud, np.ndarray]


def _coords(cloud: CloudLike) -> np.ndarray:
    return cloud.coords if isinstance(cloud, VoxelCloud) else np.asarray(cloud, dtype=np.float64)


def loss_jdet(cloud: CloudLike, epsilon: float) -> float:
    """Mean of ReLU(-(|D psi| + epsilon)) over all voxels"""
    dets = determinant(field_gradient(_coords(cloud)))
    return float(np.mean(np.maximum(-(dets + epsilon), 0.0)))


def loss_jdet_gradient(cloud: CloudLike, epsilon: float) -> np.ndarray:
    coords = _coords(cloud)
    jac = field_gradient(coords)
    dets = determinant(jac)
    d_dets = -((dets + epsilon) < 0).astype(np.float64) / dets.size
    return spatial_gradient_transpose(determinant_cofactors(jac) * d_dets)


def loss_smt(cloud: CloudLike) -> float:
    """Mean squared Frobenius norm of the displacement gradient"""
    coords = _coords(cloud)
    jac = field_gradient(coords - identity_coords(coords.shape[1:]))
    return float(np.sum(jac * jac) / int(np.prod(coords.shape[1:])))


def loss_smt_gradient(cloud: CloudLike) -> np.ndarray:
    coords = _coords(cloud)
    n = int(np.prod(coords.shape[1:]))
    jac = field_gradient(coords - identity_coords(coords.shape[1:]))
    return spatial_gradient_transpose(2.0 * jac / n)


def loss_mag(trajectory: Trajectory) -> float:
    """(1/N) sum_k h ||K v(t_k)||^2 over the solver steps"""
    if not trajectory.velocity_sq_norms:
        raise ConfigError("Trajectory carries no velocity records")
    n = int(np.prod(trajectory.initial.shape[1:]))
    return float(trajectory.step_size * sum(trajectory.velocity_sq_norms) / n)


def loss_mag_source(velocity: np.ndarray, step_size: float, weight: float) -> np.ndarray:
    """Cotangent that lambda2 * L_mag adds to the step's first velocity evaluation"""
    n = int(np.prod(velocity.shape[1:]))
    return (2.0 * weight * step_size / n) * velocity
