from functools import lru_cache
from typing import Any, Dict, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from nodereg.errors import ConfigError


class Settings(BaseSettings):
    """Process settings loaded from environment variables"""

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Artifacts
    out_dir: str = "runs"

    model_config = SettingsConfigDict(
        env_prefix="NODEREG_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore"
    )


@lru_cache
def get_settings() -> Settings:
    """Get settings instance with caching"""
    return Settings()


class KernelConfig(BaseModel):
    """Gaussian smoothing operator K; radius 0 disables smoothing"""

    model_config = ConfigDict(frozen=True)

    radius: int = 2
    sigma: float = 1.0

    @field_validator("radius")
    @classmethod
    def _radius_non_negative(cls, value: int) -> int:
        if value < 0:
            raise ValueError("kernel radius must be >= 0")
        return value

    @field_validator("sigma")
    @classmethod
    def _sigma_positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("kernel sigma must be > 0")
        return value


class ModelConfig(BaseModel):
    """Velocity field representation"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["neural", "tensor"] = "neural"
    time_mode: Literal["autonomous", "injected"] = "autonomous"
    widths: Tuple[int, ...] = (16, 32)
    bottleneck_depth: int = 2
    # Tensor fields default to one stored field per solver step
    tensor_steps: Optional[int] = None

    @field_validator("widths")
    @classmethod
    def _widths_positive(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if not value or any(w < 1 for w in value):
            raise ValueError("widths must be a non-empty list of positive ints")
        return value

    @field_validator("bottleneck_depth")
    @classmethod
    def _depth_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("bottleneck_depth must be >= 1")
        return value

    @field_validator("tensor_steps")
    @classmethod
    def _tensor_steps_positive(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 1:
            raise ValueError("tensor_steps must be >= 1")
        return value


class FlowConfig(BaseModel):
    """Fixed-step integration of dq/dt = K v(q, t)"""

    model_config = ConfigDict(frozen=True)

    horizon: float = 1.0
    steps: int = 1
    scheme: Literal["euler", "rk4"] = "euler"
    retain: Literal["full", "endpoints"] = "full"

    @field_validator("horizon")
    @classmethod
    def _horizon_positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("horizon must be > 0")
        return value

    @field_validator("steps")
    @classmethod
    def _steps_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("steps must be >= 1")
        return value

    @property
    def step_size(self) -> float:
        return self.horizon / self.steps

    def with_steps(self, steps: int) -> "FlowConfig":
        return self.model_copy(update={"steps": steps})


class LossConfig(BaseModel):
    """Similarity and regularizer weights"""

    model_config = ConfigDict(frozen=True)

    similarity: Literal["ncc", "mse"] = "ncc"
    window: int = 21
    lambda_jdet: float = 1000.0
    lambda_mag: float = 0.01
    lambda_smt: float = 0.5
    epsilon: float = 1e-3
    variance_floor: float = 1e-8

    @field_validator("lambda_jdet", "lambda_mag", "lambda_smt", "epsilon", "variance_floor")
    @classmethod
    def _finite_non_negative(cls, value: float) -> float:
        if not (value >= 0 and value < float("inf")):
            raise ValueError("weights must be finite and >= 0")
        return value

    @model_validator(mode="after")
    def _window_odd(self) -> "LossConfig":
        if self.similarity == "ncc" and (self.window < 3 or self.window % 2 == 0):
            raise ValueError("ncc window must be odd and >= 3")
        return self


class OptimConfig(BaseModel):
    """Adam loop over the velocity parameters"""

    model_config = ConfigDict(frozen=True)

    iterations: int = 250
    learning_rate: Optional[float] = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    gradient_mode: Literal["adjoint", "discrete"] = "adjoint"
    seed: int = 0

    @field_validator("iterations")
    @classmethod
    def _iterations_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("iterations must be >= 1")
        return value

    @field_validator("learning_rate")
    @classmethod
    def _lr_positive(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not value > 0:
            raise ValueError("learning rate must be > 0")
        return value

    def effective_learning_rate(self, kind: str) -> float:
        """Explicit rate, else 1e-3 for neural fields and 1e-1 for tensors"""
        if self.learning_rate is not None:
            return self.learning_rate
        return 1e-1 if kind == "tensor" else 1e-3


class RegistrationConfig(BaseModel):
    """Everything one pair-wise registration needs"""

    model_config = ConfigDict(frozen=True)

    kernel: KernelConfig = KernelConfig()
    model: ModelConfig = ModelConfig()
    flow: FlowConfig = FlowConfig()
    loss: LossConfig = LossConfig()
    optim: OptimConfig = OptimConfig()
    fix_boundary: bool = False

    def to_flat(self) -> Dict[str, Any]:
        """Flat map of cli flag names to effective values"""
        return {
            "sim": self.loss.similarity,
            "ncc_window": self.loss.window,
            "lambda_jdet": self.loss.lambda_jdet,
            "lambda_mag": self.loss.lambda_mag,
            "lambda_smt": self.loss.lambda_smt,
            "epsilon": self.loss.epsilon,
            "variance_floor": self.loss.variance_floor,
            "kernel_radius": self.kernel.radius,
            "kernel_sigma": self.kernel.sigma,
            "field": self.model.kind,
            "time_mode": self.model.time_mode,
            "widths": list(self.model.widths),
            "bottleneck_depth": self.model.bottleneck_depth,
            "tensor_steps": self.model.tensor_steps,
            "horizon": self.flow.horizon,
            "steps": self.flow.steps,
            "scheme": self.flow.scheme,
            "retain": self.flow.retain,
            "iters": self.optim.iterations,
            "lr": self.optim.effective_learning_rate(self.model.kind),
            "beta1": self.optim.beta1,
            "beta2": self.optim.beta2,
            "adam_eps": self.optim.eps,
            "gradient_mode": self.optim.gradient_mode,
            "seed": self.optim.seed,
            "fix_boundary": self.fix_boundary,
        }

    @classmethod
    def from_flat(cls, flat: Dict[str, Any]) -> "RegistrationConfig":
        """Rebuild a config from the map written by to_flat"""
        defaults = cls().to_flat()
        unknown = set(flat) - set(defaults)
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        values = {**defaults, **flat}
        try:
            return cls(
                kernel=KernelConfig(radius=values["kernel_radius"], sigma=values["kernel_sigma"]),
                model=ModelConfig(
                    kind=values["field"],
                    time_mode=values["time_mode"],
                    widths=tuple(values["widths"]),
                    bottleneck_depth=values["bottleneck_depth"],
                    tensor_steps=values["tensor_steps"],
                ),
                flow=FlowConfig(
                    horizon=values["horizon"],
                    steps=values["steps"],
                    scheme=values["scheme"],
                    retain=values["retain"],
                ),
                loss=LossConfig(
                    similarity=values["sim"],
                    window=values["ncc_window"],
                    lambda_jdet=values["lambda_jdet"],
                    lambda_mag=values["lambda_mag"],
                    lambda_smt=values["lambda_smt"],
                    epsilon=values["epsilon"],
                    variance_floor=values["variance_floor"],
                ),
                optim=OptimConfig(
                    iterations=values["iters"],
                    learning_rate=values["lr"] if "lr" in flat else None,
                    beta1=values["beta1"],
                    beta2=values["beta2"],
                    eps=values["adam_eps"],
                    gradient_mode=values["gradient_mode"],
                    seed=values["seed"],
                ),
                fix_boundary=values["fix_boundary"],
            )
        except ValidationError as e:
            raise ConfigError(str(e)) from e
