from typing import Optional

import numpy as np


class NoderegError(Exception):
    """Base class for every error raised by nodereg"""


class ConfigError(NoderegError):
    """Invalid parameter or configuration value"""


class ShapeError(NoderegError):
    """Invalid extents or mismatched array shapes"""


class FormatError(NoderegError):
    """Problem reading or writing an artifact file"""


class HeaderError(FormatError):
    """Malformed PGM header or JSON sidecar"""


class TruncatedPayloadError(FormatError):
    """Payload is shorter than its header declares"""


class DtypeMismatchError(FormatError):
    """Stored dtype or channel count differs from what the reader expects"""


class DivergenceError(NoderegError):
    """A state or adjoint vector became non-finite"""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class RegistrationDivergence(DivergenceError):
    """Divergence during optimization; keeps the last finite iterate"""

    def __init__(
        self,
        message: str,
        iteration: int,
        last_params: np.ndarray,
        step: Optional[int] = None
    ):
        super().__init__(message, step=step)
        self.iteration = iteration
        self.last_params = last_params
