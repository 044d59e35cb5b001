"""Parameter gradients of the registration objective.

Three ways to run the backward pass share one per-step vector-Jacobian rule:

- ``discrete``: backpropagation through the stored trajectory, re-using the
  model caches recorded during the forward solve (memory grows with steps).
- ``adjoint`` with ``retain="full"``: the adjoint sweep re-evaluates the
  dynamics at the stored checkpoints q(t_k).
- ``adjoint`` with ``retain="endpoints"``: constant memory; the state is
  re-integrated backward in time alongside the adjoint.

The terminal condition is lambda(s) = dL/dpsi; the velocity-magnitude term is
a running cost and enters every step as an extra cotangent on f(q_k, t_k).
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from nodereg.config import FlowConfig, LossConfig
from nodereg.errors import ConfigError, DivergenceError
from nodereg.flow.dynamics import Dynamics, LinearDynamics, VelocityDynamics
from nodereg.flow.integrator import StageRecord, Trajectory, integrate_dynamics, step
from nodereg.flow.memory import MemoryLedger
from nodereg.grid.types import Image
from nodereg.objective.loss import LossReport, grad_wrt_final_cloud, total_loss
from nodereg.objective.regularizers import loss_mag_source
from nodereg.smoothing import GaussianKernel
from nodereg.velocity.base import CloudLike, VelocityModel, as_coords

logger = logging.getLogger(__name__)

SourceFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class AdjointState:
    """Adjoint vector and the parameter sensitivity accumulated so far"""

    adjoint: np.ndarray
    sensitivity: np.ndarray


@dataclass
class GradientResult:
    gradient: np.ndarray
    report: Optional[LossReport]
    peak_buffers: int
    mode: str


def step_vjp(
    dynamics: Dynamics,
    stages: List[StageRecord],
    scheme: str,
    h: float,
    adjoint: np.ndarray,
    source: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Pull the adjoint of z_{k+1} back through one solver step

    `source` is an extra cotangent on the step's first evaluation f(z_k, t_k).
    Returns (adjoint of z_k, parameter gradient of the step).
    """
    if scheme == "euler":
        cotangent = h * adjoint
        if source is not None:
            cotangent = cotangent + source
        d_state, d_params = dynamics.vjp(stages[0][2], cotangent)
        return adjoint + d_state, d_params

    g1 = (h / 6.0) * adjoint
    if source is not None:
        g1 = g1 + source
    g2 = (h / 3.0) * adjoint
    g3 = (h / 3.0) * adjoint
    g4 = (h / 6.0) * adjoint
    d_z = adjoint.copy()
    d_theta = np.zeros(dynamics.num_params)

    a4, p4 = dynamics.vjp(stages[3][2], g4)
    d_z += a4
    g3 = g3 + h * a4
    a3, p3 = dynamics.vjp(stages[2][2], g3)
    d_z += a3
    g2 = g2 + 0.5 * h * a3
    a2, p2 = dynamics.vjp(stages[1][2], g2)
    d_z += a2
    g1 = g1 + 0.5 * h * a2
    a1, p1 = dynamics.vjp(stages[0][2], g1)
    d_z += a1
    for p in (p1, p2, p3, p4):
        d_theta += p
    return d_z, d_theta


def backward_sweep(
    dynamics: Dynamics,
    trajectory: Trajectory,
    terminal: np.ndarray,
    config: FlowConfig,
    mode: str,
    source_fn: Optional[SourceFn] = None,
    ledger: Optional[MemoryLedger] = None
) -> AdjointState:
    """Integrate the adjoint from t = s back to 0, accumulating dL/dtheta"""
    h = config.step_size
    state = AdjointState(adjoint=np.array(terminal, dtype=np.float64), sensitivity=np.zeros(dynamics.num_params))
    z = trajectory.final
    if ledger is not None:
        ledger.hold("adjoint", state.adjoint)

    for k in reversed(range(config.steps)):
        t = k * h
        if mode == "discrete":
            stages = trajectory.stages[k]
            velocity = trajectory.velocities[k]
        else:
            if mode == "checkpoints":
                z = trajectory.states[k]
            else:
                # reverse solver step from t_{k+1} to t_k
                z, _, _ = step(dynamics, z, (k + 1) * h, -h, config.scheme)
                if ledger is not None:
                    ledger.hold("state:backward", z)
            _, velocity, stages = step(dynamics, z, t, h, config.scheme)

        source = source_fn(velocity) if source_fn is not None else None
        state.adjoint, d_theta = step_vjp(dynamics, stages, config.scheme, h, state.adjoint, source)
        state.sensitivity += d_theta
        if not (np.all(np.isfinite(state.adjoint)) and np.all(np.isfinite(state.sensitivity))):
            raise DivergenceError(f"Non-finite adjoint at step {k}", step=k)
        if ledger is not None:
            ledger.hold("adjoint", state.adjoint)
    return state


def ode_gradient(
    dynamics: Dynamics,
    z0: np.ndarray,
    config: FlowConfig,
    terminal_grad: Callable[[np.ndarray], np.ndarray],
    mode: str = "adjoint",
    source_fn: Optional[SourceFn] = None,
    ledger: Optional[MemoryLedger] = None
) -> Tuple[np.ndarray, Trajectory]:
    """dL/dtheta for L depending on z(s) (plus an optional running cost)"""
    if mode == "discrete":
        if config.retain != "full":
            raise ConfigError("Discrete backpropagation needs the full trajectory (retain='full')")
        sweep = "discrete"
    elif mode == "adjoint":
        sweep = "checkpoints" if config.retain == "full" else "reintegrate"
    else:
        raise ConfigError(f"Unknown gradient mode: {mode}")

    trajectory = integrate_dynamics(
        dynamics, z0, config, keep_stages=(sweep == "discrete"), ledger=ledger
    )
    terminal = terminal_grad(trajectory.final)
    state = backward_sweep(dynamics, trajectory, terminal, config, sweep, source_fn, ledger)
    return state.sensitivity, trajectory


def registration_gradient(
    model: VelocityModel,
    kernel: GaussianKernel,
    theta: np.ndarray,
    q0: CloudLike,
    flow_config: FlowConfig,
    fixed: Image,
    moving: Image,
    loss_config: LossConfig,
    mask: Optional[np.ndarray] = None,
    mode: str = "adjoint"
) -> GradientResult:
    coords = as_coords(q0)
    dynamics = VelocityDynamics(model, kernel, theta, mask=mask)
    ledger = MemoryLedger(coords.nbytes)

    def terminal(psi: np.ndarray) -> np.ndarray:
        return grad_wrt_final_cloud(fixed, moving, psi, loss_config)

    source_fn = None
    if loss_config.lambda_mag:
        def source_fn(velocity: np.ndarray) -> np.ndarray:
            return loss_mag_source(velocity, flow_config.step_size, loss_config.lambda_mag)

    gradient, trajectory = ode_gradient(
        dynamics, coords, flow_config, terminal, mode=mode, source_fn=source_fn, ledger=ledger
    )
    report = total_loss(fixed, moving, trajectory, loss_config)
    logger.debug(f"{mode} gradient: total={report.total:.6g} peak_buffers={ledger.peak_buffers}")
    return GradientResult(gradient=gradient, report=report, peak_buffers=ledger.peak_buffers, mode=mode)


def adjoint_gradient(
    model: VelocityModel,
    kernel: GaussianKernel,
    theta: np.ndarray,
    q0: CloudLike,
    flow_config: FlowConfig,
    fixed: Image,
    moving: Image,
    loss_config: LossConfig,
    mask: Optional[np.ndarray] = None
) -> GradientResult:
    """dL/dtheta by the adjoint sensitivity method"""
    return registration_gradient(
        model, kernel, theta, q0, flow_config, fixed, moving, loss_config, mask, mode="adjoint"
    )


def discrete_gradient(
    model: VelocityModel,
    kernel: GaussianKernel,
    theta: np.ndarray,
    q0: CloudLike,
    flow_config: FlowConfig,
    fixed: Image,
    moving: Image,
    loss_config: LossConfig,
    mask: Optional[np.ndarray] = None
) -> GradientResult:
    """Exact gradient of the discretized objective by backpropagation"""
    return registration_gradient(
        model, kernel, theta, q0, flow_config, fixed, moving, loss_config, mask, mode="discrete"
    )


def linear_ode_sensitivity(
    theta: float,
    z0: float,
    config: FlowConfig,
    mode: str = "adjoint"
) -> Tuple[float, float]:
    """(L, dL/dtheta) for dz/dt = theta z, L = z(s)^2"""
    dynamics = LinearDynamics(np.array([theta], dtype=np.float64))
    gradient, trajectory = ode_gradient(
        dynamics, np.array([z0], dtype=np.float64), config, lambda z: 2.0 * z, mode=mode
    )
    return float(trajectory.final[0] ** 2), float(gradient[0])
