import pytest
from pydantic import ValidationError

from nodereg.config import (
    FlowConfig,
    KernelConfig,
    LossConfig,
    ModelConfig,
    OptimConfig,
    RegistrationConfig,
    Settings,
)
from nodereg.errors import ConfigError


def test_defaults_follow_published_settings():
    config = RegistrationConfig()
    assert config.loss.window == 21
    assert config.flow.steps == 1
    assert config.optim.iterations == 250
    assert config.loss.lambda_jdet == 1000.0
    assert config.kernel.radius == 2


@pytest.mark.parametrize("build", [
    lambda: KernelConfig(sigma=0.0),
    lambda: KernelConfig(radius=-1),
    lambda: FlowConfig(steps=0),
    lambda: FlowConfig(horizon=0.0),
    lambda: LossConfig(window=20),
    lambda: LossConfig(lambda_jdet=-1.0),
    lambda: OptimConfig(iterations=0),
    lambda: OptimConfig(learning_rate=0.0),
    lambda: ModelConfig(widths=()),
])
def test_invalid_values_rejected(build):
    with pytest.raises(ValidationError):
        build()


def test_mse_ignores_window_parity():
    assert LossConfig(similarity="mse", window=4).window == 4


def test_effective_learning_rate_by_kind():
    optim = OptimConfig()
    assert optim.effective_learning_rate("neural") == 1e-3
    assert optim.effective_learning_rate("tensor") == 1e-1
    assert OptimConfig(learning_rate=0.05).effective_learning_rate("tensor") == 0.05


def test_step_size():
    assert FlowConfig(horizon=2.0, steps=4).step_size == 0.5
    assert FlowConfig(steps=2).with_steps(5).steps == 5


def test_flat_map_rebuilds_same_config():
    config = RegistrationConfig(
        model=ModelConfig(kind="tensor"),
        flow=FlowConfig(steps=3, scheme="rk4"),
        loss=LossConfig(similarity="mse", lambda_smt=0.1),
        optim=OptimConfig(iterations=7, seed=5),
        fix_boundary=True,
    )
    rebuilt = RegistrationConfig.from_flat(config.to_flat())
    assert rebuilt.to_flat() == config.to_flat()
    assert rebuilt.optim.effective_learning_rate("tensor") == 0.1


def test_from_flat_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="Unknown config keys"):
        RegistrationConfig.from_flat({"bogus": 1})


def test_from_flat_wraps_validation_errors():
    with pytest.raises(ConfigError):
        RegistrationConfig.from_flat({"steps": 0})


def test_settings_read_environment(monkeypatch):
    monkeypatch.setenv("NODEREG_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("NODEREG_OUT_DIR", "/tmp/elsewhere")
    settings = Settings()
    assert settings.log_level == "DEBUG"
    assert settings.out_dir == "/tmp/elsewhere"
