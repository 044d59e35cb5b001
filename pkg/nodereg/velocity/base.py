from abc import ABC, abstractmethod
from typing import Any, Dict, Tuple, Union

import numpy as np

from nodereg.errors import ConfigError, ShapeError
from nodereg.grid.types import VoxelCloud

CloudLike = Union[VoxelCloud, np.ndarray]

# tolerance on the time domain check, absorbs k*h round-off at t = s
TIME_SLACK = 1e-9


def as_coords(cloud: CloudLike) -> np.ndarray:
    if isinstance(cloud, VoxelCloud):
        return cloud.coords
    return np.asarray(cloud, dtype=np.float64)


class VelocityModel(ABC):
    """Base class for parameterized velocity fields v_theta(q, t)

    Parameters live outside the model as a flat vector so that evaluation and
    both vector-Jacobian products are pure functions of (theta, cloud, t).
    """

    kind: str = ""

    def __init__(self, shape: Tuple[int, ...], horizon: float, time_mode: str):
        self.shape = tuple(shape)
        self.dim = len(self.shape)
        self.horizon = float(horizon)
        self.time_mode = time_mode

    @property
    @abstractmethod
    def num_params(self) -> int:
        """Length of the flat parameter vector"""

    @abstractmethod
    def descriptor(self) -> Dict[str, Any]:
        """Architecture description, enough to rebuild the model"""

    @abstractmethod
    def init_params(self, seed: int) -> np.ndarray:
        """Deterministic initial parameters giving a zero velocity field"""

    @abstractmethod
    def forward(self, theta: np.ndarray, coords: np.ndarray, t: float) -> Tuple[np.ndarray, Any]:
        """Velocity field (dim, *shape) plus the cache backward needs"""

    @abstractmethod
    def backward(
        self,
        theta: np.ndarray,
        cache: Any,
        cotangent: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """(cotangent^T d v/d q, cotangent^T d v/d theta) for a cached forward"""

    def check_inputs(self, theta: np.ndarray, coords: np.ndarray, t: float) -> None:
        if theta.shape != (self.num_params,):
            raise ShapeError(f"Expected {self.num_params} parameters, got {theta.shape}")
        if coords.shape != (self.dim,) + self.shape:
            raise ShapeError(
                f"Cloud shape {coords.shape} does not match model shape {(self.dim,) + self.shape}"
            )
        if not -TIME_SLACK <= t <= self.horizon + TIME_SLACK:
            raise ConfigError(f"Time {t} outside [0, {self.horizon}]")

    def eval(self, theta: np.ndarray, cloud: CloudLike, t: float) -> np.ndarray:
        """Unsmoothed velocity at every voxel"""
        field, _ = self.forward(theta, as_coords(cloud), t)
        return field

    def vjp_state(self, theta: np.ndarray, cloud: CloudLike, t: float, cotangent: np.ndarray) -> np.ndarray:
        _, cache = self.forward(theta, as_coords(cloud), t)
        d_state, _ = self.backward(theta, cache, self._check_cotangent(cotangent))
        return d_state

    def vjp_params(self, theta: np.ndarray, cloud: CloudLike, t: float, cotangent: np.ndarray) -> np.ndarray:
        _, cache = self.forward(theta, as_coords(cloud), t)
        _, d_params = self.backward(theta, cache, self._check_cotangent(cotangent))
        return d_params

    def _check_cotangent(self, cotangent: np.ndarray) -> np.ndarray:
        cotangent = np.asarray(cotangent, dtype=np.float64)
        if cotangent.shape != (self.dim,) + self.shape:
            raise ShapeError(f"Cotangent shape {cotangent.shape} does not match the field")
        return cotangent
