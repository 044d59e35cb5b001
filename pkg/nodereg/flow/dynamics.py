from abc import ABC, abstractmethod
from typing import Any, Optional, Tuple

import numpy as np

from nodereg import smoothing
from nodereg.errors import ShapeError
from nodereg.smoothing import GaussianKernel
from nodereg.velocity.base import VelocityModel


def boundary_mask(shape: Tuple[int, ...]) -> np.ndarray:
    """1 on interior voxels, 0 on every face voxel"""
    mask = np.zeros(shape)
    mask[(slice(1, -1),) * len(shape)] = 1.0
    return mask


class Dynamics(ABC):
    """Right-hand side dz/dt = f_theta(z, t) with its vector-Jacobian products"""

    def __init__(self, theta: np.ndarray):
        self.theta = np.asarray(theta, dtype=np.float64)

    @property
    def num_params(self) -> int:
        return self.theta.shape[0]

    @abstractmethod
    def evaluate(self, z: np.ndarray, t: float) -> Tuple[np.ndarray, Any]:
        """f(z, t) and whatever backward needs to differentiate it"""

    @abstractmethod
    def vjp(self, cache: Any, cotangent: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(cotangent^T df/dz, cotangent^T df/dtheta) for an evaluated cache"""

    def f(self, z: np.ndarray, t: float) -> np.ndarray:
        value, _ = self.evaluate(z, t)
        return value


class VelocityDynamics(Dynamics):
    """f = M * K v_theta(q, t), the masked and smoothed velocity field"""

    def __init__(
        self,
        model: VelocityModel,
        kernel: GaussianKernel,
        theta: np.ndarray,
        mask: Optional[np.ndarray] = None
    ):
        super().__init__(theta)
        if mask is not None and tuple(mask.shape) != model.shape:
            raise ShapeError(f"Mask shape {mask.shape} does not match {model.shape}")
        if kernel.dim != model.dim:
            raise ShapeError(f"{kernel.dim}D kernel for a {model.dim}D model")
        self.model = model
        self.kernel = kernel
        self.mask = mask

    def evaluate(self, z: np.ndarray, t: float):
        v, cache = self.model.forward(self.theta, z, t)
        smoothed = smoothing.apply(self.kernel, v)
        if self.mask is not None:
            smoothed = smoothed * self.mask
        return smoothed, cache

    def vjp(self, cache: Any, cotangent: np.ndarray):
        if self.mask is not None:
            cotangent = cotangent * self.mask
        cotangent = smoothing.apply_transpose(self.kernel, cotangent)
        return self.model.backward(self.theta, cache, cotangent)


class LinearDynamics(Dynamics):
    """dz/dt = theta * z with a single scalar parameter"""

    def evaluate(self, z: np.ndarray, t: float):
        return self.theta[0] * z, z

    def vjp(self, cache: Any, cotangent: np.ndarray):
        return self.theta[0] * cotangent, np.array([np.sum(cotangent * cache)])
