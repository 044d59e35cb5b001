import logging
from dataclasses import dataclass, field
from typing import Any, List, Optional, Tuple

import numpy as np

from nodereg.config import FlowConfig
from nodereg.errors import DivergenceError
from nodereg.flow.dynamics import Dynamics, VelocityDynamics
from nodereg.flow.memory import MemoryLedger
from nodereg.grid.types import VoxelCloud
from nodereg.smoothing import GaussianKernel
from nodereg.velocity.base import CloudLike, VelocityModel, as_coords

logger = logging.getLogger(__name__)

# (stage input, stage time, model cache) for every right-hand-side evaluation of a step
StageRecord = Tuple[np.ndarray, float, Any]


@dataclass
class Trajectory:
    """Forward solve record; states hold every checkpoint or just the endpoints"""

    times: List[float]
    states: List[np.ndarray]
    step_size: float
    retain: str
    scheme: str
    velocity_sq_norms: List[float]
    velocities: List[np.ndarray] = field(default_factory=list)
    stages: Optional[List[List[StageRecord]]] = None

    @property
    def steps(self) -> int:
        return len(self.velocity_sq_norms)

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def deformation(self) -> VoxelCloud:
        """psi(q0), the final voxel cloud"""
        return VoxelCloud(self.final)

    @property
    def checkpoints(self) -> List[Tuple[float, np.ndarray]]:
        if self.retain != "full":
            return [(self.times[0], self.states[0]), (self.times[-1], self.states[-1])]
        return list(zip(self.times, self.states))


def step(
    dynamics: Dynamics,
    z: np.ndarray,
    t: float,
    h: float,
    scheme: str
) -> Tuple[np.ndarray, np.ndarray, List[StageRecord]]:
    """One solver step; returns (z_next, f(z, t), stage records)"""
    if scheme == "euler":
        f0, cache = dynamics.evaluate(z, t)
        return z + h * f0, f0, [(z, t, cache)]

    stages: List[StageRecord] = []
    k1, cache = dynamics.evaluate(z, t)
    stages.append((z, t, cache))
    z2 = z + 0.5 * h * k1
    k2, cache = dynamics.evaluate(z2, t + 0.5 * h)
    stages.append((z2, t + 0.5 * h, cache))
    z3 = z + 0.5 * h * k2
    k3, cache = dynamics.evaluate(z3, t + 0.5 * h)
    stages.append((z3, t + 0.5 * h, cache))
    z4 = z + h * k3
    k4, cache = dynamics.evaluate(z4, t + h)
    stages.append((z4, t + h, cache))
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1, stages


def integrate_dynamics(
    dynamics: Dynamics,
    z0: np.ndarray,
    config: FlowConfig,
    keep_stages: bool = False,
    ledger: Optional[MemoryLedger] = None
) -> Trajectory:
    """Fixed-step solve of dz/dt = f(z, t) over [0, s]"""
    h = config.step_size
    full = config.retain == "full"
    z = np.array(z0, dtype=np.float64)
    states = [z]
    velocities: List[np.ndarray] = []
    sq_norms: List[float] = []
    stage_log: Optional[List[List[StageRecord]]] = [] if keep_stages else None
    if ledger is not None:
        ledger.hold("state:0", z)

    for k in range(config.steps):
        t = k * h
        z_next, f0, stages = step(dynamics, z, t, h, config.scheme)
        if not np.all(np.isfinite(z_next)):
            raise DivergenceError(f"Non-finite state after step {k}", step=k)
        # f0 is already masked, so pinned voxels add nothing to L_mag
        sq_norms.append(float(np.sum(f0 * f0)))
        if full:
            states.append(z_next)
            velocities.append(f0)
            if ledger is not None:
                ledger.hold(f"state:{k + 1}", z_next)
                ledger.hold(f"velocity:{k}", f0)
        elif ledger is not None:
            ledger.hold("state:current", z_next)
        if stage_log is not None:
            stage_log.append(stages)
            if ledger is not None:
                ledger.hold(f"stages:{k}", stages)
        z = z_next

    if not full:
        states = [states[0], z]
    times = [k * h for k in range(config.steps)] + [config.horizon]
    if not full:
        times = [0.0, config.horizon]
    return Trajectory(
        times=times,
        states=states,
        step_size=h,
        retain=config.retain,
        scheme=config.scheme,
        velocity_sq_norms=sq_norms,
        velocities=velocities,
        stages=stage_log,
    )


def integrate(
    model: VelocityModel,
    kernel: GaussianKernel,
    theta: np.ndarray,
    q0: CloudLike,
    config: FlowConfig,
    boundary_mask: Optional[np.ndarray] = None
) -> Trajectory:
    """Flow the voxel cloud along M * K v_theta; the final state is psi(q0)"""
    dynamics = VelocityDynamics(model, kernel, theta, mask=boundary_mask)
    return integrate_dynamics(dynamics, as_coords(q0), config)


def compose_check(
    model: VelocityModel,
    kernel: GaussianKernel,
    theta: np.ndarray,
    q0: CloudLike,
    config: FlowConfig,
    boundary_mask: Optional[np.ndarray] = None
) -> float:
    """Max-norm gap between psi solved with n and with 2n steps"""
    coarse = integrate(model, kernel, theta, q0, config, boundary_mask)
    fine = integrate(model, kernel, theta, q0, config.with_steps(2 * config.steps), boundary_mask)
    gap = float(np.max(np.abs(coarse.final - fine.final)))
    logger.debug(f"compose_check n={config.steps}: {gap:.3e}")
    return gap
