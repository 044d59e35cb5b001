from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from nodereg.config import ModelConfig
from nodereg.errors import ConfigError, DtypeMismatchError
from nodereg.grid.io import read_array, write_array
from nodereg.velocity.base import VelocityModel, as_coords
from nodereg.velocity.neural import NeuralVelocity
from nodereg.velocity.tensor import TensorVelocity


def build_model(config: ModelConfig, shape: Tuple[int, ...], horizon: float, flow_steps: int) -> VelocityModel:
    """Instantiate the configured velocity representation"""
    if config.kind == "neural":
        return NeuralVelocity(
            shape=shape,
            horizon=horizon,
            time_mode=config.time_mode,
            widths=config.widths,
            bottleneck_depth=config.bottleneck_depth
        )
    elif config.kind == "tensor":
        return TensorVelocity(
            shape=shape,
            horizon=horizon,
            steps=config.tensor_steps or flow_steps
        )
    raise ConfigError(f"Unknown velocity field kind: {config.kind}")


def model_from_descriptor(descriptor: Dict[str, Any]) -> VelocityModel:
    shape = tuple(descriptor["shape"])
    if descriptor["kind"] == "neural":
        return NeuralVelocity(
            shape=shape,
            horizon=descriptor["horizon"],
            time_mode=descriptor["time_mode"],
            widths=descriptor["widths"],
            bottleneck_depth=descriptor["bottleneck_depth"]
        )
    elif descriptor["kind"] == "tensor":
        return TensorVelocity(shape=shape, horizon=descriptor["horizon"], steps=descriptor["steps"])
    raise ConfigError(f"Unknown velocity field kind: {descriptor['kind']}")


def save_params(path: Union[str, Path], model: VelocityModel, theta: np.ndarray) -> Path:
    """Write theta with the architecture descriptor embedded in the sidecar"""
    return write_array(path, theta, dtype="f64", extra={"model": model.descriptor()})


def load_params(path: Union[str, Path]) -> Tuple[VelocityModel, np.ndarray]:
    theta, header = read_array(path, dtype="f64", channels=1)
    descriptor = header.get("extra", {}).get("model")
    if descriptor is None:
        raise DtypeMismatchError(f"{path} carries no model descriptor")
    model = model_from_descriptor(descriptor)
    if theta.shape != (model.num_params,):
        raise DtypeMismatchError(
            f"{path}: {theta.shape[0]} parameters for a model expecting {model.num_params}"
        )
    return model, theta.copy()


__all__ = [
    "NeuralVelocity",
    "TensorVelocity",
    "VelocityModel",
    "as_coords",
    "build_model",
    "load_params",
    "model_from_descriptor",
    "save_params",
]
