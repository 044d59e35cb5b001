from typing import Any, Dict, Tuple

import numpy as np

from nodereg.velocity.base import TIME_SLACK, VelocityModel


class TensorVelocity(VelocityModel):
    """One stored field per time step; parameter count = steps * dim * N"""

    kind = "tensor"

    def __init__(self, shape: Tuple[int, ...], horizon: float, steps: int):
        super().__init__(shape, horizon, time_mode="injected")
        self.steps = int(steps)

    @property
    def num_params(self) -> int:
        return self.steps * self.dim * int(np.prod(self.shape))

    def descriptor(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "shape": list(self.shape),
            "horizon": self.horizon,
            "steps": self.steps,
        }

    def init_params(self, seed: int) -> np.ndarray:
        return np.zeros(self.num_params)

    def step_index(self, t: float) -> int:
        """Step owning t: half-open [k h, (k+1) h), the last interval closed"""
        k = int(np.floor(t * self.steps / self.horizon + TIME_SLACK))
        return min(max(k, 0), self.steps - 1)

    def fields(self, theta: np.ndarray) -> np.ndarray:
        return theta.reshape((self.steps, self.dim) + self.shape)

    def forward(self, theta: np.ndarray, coords: np.ndarray, t: float):
        self.check_inputs(theta, coords, t)
        k = self.step_index(t)
        return self.fields(theta)[k].copy(), k

    def backward(self, theta: np.ndarray, cache: Any, cotangent: np.ndarray):
        d_params = np.zeros((self.steps, self.dim) + self.shape)
        d_params[cache] = cotangent
        # the stored field does not depend on where the voxels are
        return np.zeros_like(cotangent), d_params.ravel()
