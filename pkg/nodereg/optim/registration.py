import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Any, Dict, List, Optional

import numpy as np
import orjson

from nodereg.config import RegistrationConfig
from nodereg.errors import DivergenceError, RegistrationDivergence
from nodereg.flow.dynamics import boundary_mask
from nodereg.flow.integrator import integrate
from nodereg.grid.sampling import warp
from nodereg.grid.types import Image, VoxelCloud, make_identity_grid, require_same_shape
from nodereg.objective.loss import LossReport, total_loss
from nodereg.optim.adam import Adam
from nodereg.optim.adjoint import registration_gradient
from nodereg.smoothing import make_kernel
from nodereg.velocity import VelocityModel, build_model

logger = logging.getLogger(__name__)

# iterations between progress lines in the process log
PROGRESS_EVERY = 25


@dataclass
class RegistrationResult:
    theta: np.ndarray
    model: VelocityModel
    deformation: VoxelCloud
    warped: Image
    report: LossReport
    log: List[Dict[str, Any]]
    config: RegistrationConfig
    history: List[Dict[str, Any]] = field(default_factory=list)
    peak_buffers: int = 0


class RegistrationRun:
    """Adam optimization of the velocity parameters for one image pair"""

    def __init__(
        self,
        fixed: Image,
        moving: Image,
        config: RegistrationConfig,
        log_stream: Optional[IO[bytes]] = None
    ):
        require_same_shape(fixed.shape, moving.shape)
        self.fixed = fixed
        self.moving = moving
        self.config = config
        self.log_stream = log_stream
        self.execution_history: List[Dict[str, Any]] = []

        self.model = build_model(config.model, fixed.shape, config.flow.horizon, config.flow.steps)
        self.kernel = make_kernel(config.kernel.radius, config.kernel.sigma, fixed.dim)
        self.mask = boundary_mask(fixed.shape) if config.fix_boundary else None
        self.q0 = make_identity_grid(fixed.shape)

    def log_execution(self, action: str, result: Any):
        """Log execution step for debugging"""
        self.execution_history.append({
            "action": action,
            "result": result,
            "timestamp": datetime.now(timezone.utc).isoformat()
        })

    def get_history(self) -> List[Dict[str, Any]]:
        """Get execution history"""
        return self.execution_history

    def _emit(self, record: Dict[str, Any]) -> None:
        if self.log_stream is not None:
            self.log_stream.write(orjson.dumps(record) + b"\n")

    def execute(self) -> RegistrationResult:
        """Run the configured number of Adam iterations"""
        optim = self.config.optim
        lr = optim.effective_learning_rate(self.model.kind)
        theta = self.model.init_params(optim.seed)
        adam = Adam(lr=lr, beta1=optim.beta1, beta2=optim.beta2, eps=optim.eps)
        log: List[Dict[str, Any]] = []
        peak = 0

        self.log_execution("start", {
            "shape": list(self.fixed.shape),
            "params": self.model.num_params,
            "learning_rate": lr,
        })
        logger.info(
            f"Registering {self.fixed.shape} pair: {self.model.kind} field, "
            f"{self.model.num_params} parameters, {optim.iterations} iterations"
        )

        for iteration in range(optim.iterations):
            started = time.perf_counter()
            try:
                result = registration_gradient(
                    self.model, self.kernel, theta, self.q0, self.config.flow,
                    self.fixed, self.moving, self.config.loss, self.mask,
                    mode=optim.gradient_mode
                )
            except DivergenceError as e:
                self.log_execution("divergence", {"iteration": iteration, "error": str(e)})
                raise RegistrationDivergence(
                    f"Diverged at iteration {iteration}: {e}",
                    iteration=iteration,
                    last_params=theta.copy(),
                    step=e.step
                ) from e
            if not np.all(np.isfinite(result.gradient)):
                raise RegistrationDivergence(
                    f"Non-finite gradient at iteration {iteration}",
                    iteration=iteration,
                    last_params=theta.copy()
                )

            candidate = adam.step(theta.copy(), result.gradient)
            if not np.all(np.isfinite(candidate)):
                raise RegistrationDivergence(
                    f"Non-finite parameters after iteration {iteration}",
                    iteration=iteration,
                    last_params=theta.copy()
                )
            theta = candidate
            peak = max(peak, result.peak_buffers)

            record = result.report.to_record(iteration, (time.perf_counter() - started) * 1000.0)
            log.append(record)
            self._emit(record)
            if iteration % PROGRESS_EVERY == 0 or iteration == optim.iterations - 1:
                logger.info(
                    f"iter {iteration}: total={record['total']:.6g} sim={record['sim']:.6g} "
                    f"rD={record['rD']:.4%}"
                )

        trajectory = integrate(self.model, self.kernel, theta, self.q0, self.config.flow, self.mask)
        deformation = trajectory.deformation
        report = total_loss(self.fixed, self.moving, trajectory, self.config.loss)
        self.log_execution("complete", report.as_dict())

        return RegistrationResult(
            theta=theta,
            model=self.model,
            deformation=deformation,
            warped=warp(self.moving, deformation),
            report=report,
            log=log,
            config=self.config,
            history=self.get_history(),
            peak_buffers=peak,
        )


def register(
    fixed: Image,
    moving: Image,
    config: Optional[RegistrationConfig] = None,
    log_stream: Optional[IO[bytes]] = None
) -> RegistrationResult:
    """Find theta* minimizing the objective; deterministic given the seed"""
    run = RegistrationRun(fixed, moving, config or RegistrationConfig(), log_stream=log_stream)
    return run.execute()
