"""Diffeomorphic image registration with neural ODE velocity fields."""

from nodereg.config import RegistrationConfig, get_settings
from nodereg.errors import (
    ConfigError,
    DivergenceError,
    FormatError,
    NoderegError,
    RegistrationDivergence,
    ShapeError,
)
from nodereg.optim.registration import RegistrationResult, register

__version__ = "0.1.0"
