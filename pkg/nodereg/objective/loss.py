from dataclasses import asdict, dataclass
from typing import Any, Dict, Union

import numpy as np

from nodereg.config import LossConfig
from nodereg.flow.integrator import Trajectory
from nodereg.grid.sampling import warp, warp_with_gradient
from nodereg.grid.types import Image, VoxelCloud, require_same_shape
from nodereg.metrics import neg_jacobian_ratio
from nodereg.objective.regularizers import (
    loss_jdet,
    loss_jdet_gradient,
    loss_mag,
    loss_smt,
    loss_smt_gradient,
)
from nodereg.objective.similarity import similarity_gradient, similarity_loss


@dataclass(frozen=True)
class LossReport:
    """Decomposed objective; the boundary term is structural and contributes 0"""

    total: float
    sim: float
    jdet: float
    mag: float
    smt: float
    neg_jacobian_ratio: float

    def to_record(self, iteration: int, wall_ms: float) -> Dict[str, Any]:
        """One line of the iteration log"""
        return {
            "iter": iteration,
            "total": self.total,
            "sim": self.sim,
            "jdet": self.jdet,
            "mag": self.mag,
            "smt": self.smt,
            "rD": self.neg_jacobian_ratio,
            "wall_ms": wall_ms,
        }

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def total_loss(fixed: Image, moving: Image, trajectory: Trajectory, config: LossConfig) -> LossReport:
    """sim + lambda1 jdet + lambda2 mag + lambda3 smt for the trajectory's end point"""
    require_same_shape(fixed.shape, moving.shape)
    cloud = trajectory.deformation
    require_same_shape(fixed.shape, cloud.shape)
    sim = similarity_loss(fixed, warp(moving, cloud), config)
    jdet = loss_jdet(cloud, config.epsilon)
    mag = loss_mag(trajectory)
    smt = loss_smt(cloud)
    total = sim + config.lambda_jdet * jdet + config.lambda_mag * mag + config.lambda_smt * smt
    return LossReport(
        total=total,
        sim=sim,
        jdet=jdet,
        mag=mag,
        smt=smt,
        neg_jacobian_ratio=neg_jacobian_ratio(cloud),
    )


def grad_wrt_final_cloud(
    fixed: Image,
    moving: Image,
    cloud: Union[VoxelCloud, np.ndarray],
    config: LossConfig
) -> np.ndarray:
    """d(sim + lambda1 jdet + lambda3 smt) / d psi, through the interpolation weights"""
    if not isinstance(cloud, VoxelCloud):
        cloud = VoxelCloud(cloud)
    require_same_shape(fixed.shape, moving.shape, cloud.shape)
    warped, d_warped = warp_with_gradient(moving, cloud)
    grad = similarity_gradient(fixed, warped, config)[None] * d_warped
    if config.lambda_jdet:
        grad = grad + config.lambda_jdet * loss_jdet_gradient(cloud, config.epsilon)
    if config.lambda_smt:
        grad = grad + config.lambda_smt * loss_smt_gradient(cloud)
    return grad
