from typing import Any, Dict

import numpy as np


def nbytes(obj: Any) -> int:
    """Bytes held by the arrays inside nested lists/tuples/dicts"""
    if isinstance(obj, np.ndarray):
        return obj.nbytes
    if isinstance(obj, (list, tuple)):
        return sum(nbytes(item) for item in obj)
    if isinstance(obj, dict):
        return sum(nbytes(item) for item in obj.values())
    return 0


class MemoryLedger:
    """Counts bytes retained by a forward/backward pass, in cloud-sized units"""

    def __init__(self, cloud_nbytes: int):
        self.cloud_nbytes = int(cloud_nbytes)
        self.current = 0
        self.peak = 0
        self._held: Dict[str, int] = {}

    def hold(self, key: str, obj: Any) -> None:
        self.drop(key)
        size = nbytes(obj)
        self._held[key] = size
        self.current += size
        self.peak = max(self.peak, self.current)

    def drop(self, key: str) -> None:
        self.current -= self._held.pop(key, 0)

    @property
    def peak_buffers(self) -> int:
        """Peak retention expressed as a number of cloud-sized buffers"""
        return -(-self.peak // self.cloud_nbytes) if self.cloud_nbytes else 0
