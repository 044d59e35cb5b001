from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from nodereg.errors import ShapeError


def validate_shape(shape: Sequence[int]) -> Tuple[int, ...]:
    """Normalize extents and reject anything smaller than 2 per axis"""
    extents = tuple(int(n) for n in shape)
    if len(extents) not in (2, 3):
        raise ShapeError(f"Expected 2 or 3 extents, got {len(extents)}")
    if any(n < 2 for n in extents):
        raise ShapeError(f"All extents must be >= 2, got {extents}")
    return extents


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Image:
    """Scalar intensity grid, shape (H, W) or (D, H, W)"""

    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        validate_shape(values.shape)
        if not np.all(np.isfinite(values)):
            raise ShapeError("Image values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def dim(self) -> int:
        return self.values.ndim


@dataclass(frozen=True, eq=False)
class VoxelCloud:
    """Per-voxel coordinates, channel-first: coords[a] is the axis-a coordinate"""

    coords: np.ndarray

    def __post_init__(self):
        coords = _frozen(self.coords, np.float64)
        if coords.ndim < 3:
            raise ShapeError(f"Cloud must have shape (dim, *extents), got {coords.shape}")
        validate_shape(coords.shape[1:])
        if coords.shape[0] != coords.ndim - 1:
            raise ShapeError(
                f"Cloud has {coords.shape[0]} channels for {coords.ndim - 1} spatial axes"
            )
        if not np.all(np.isfinite(coords)):
            raise ShapeError("Cloud coordinates must be finite")
        object.__setattr__(self, "coords", coords)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.coords.shape[1:]

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    def displacement(self) -> np.ndarray:
        return self.coords - identity_coords(self.shape)

    def max_displacement(self) -> float:
        return float(np.max(np.abs(self.displacement())))


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Non-negative integer segmentation"""

    labels: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.labels)
        if raw.dtype.kind == "f" and not np.all(raw == np.round(raw)):
            raise ShapeError("Labels must be integers")
        labels = _frozen(raw, np.int64)
        validate_shape(labels.shape)
        if np.any(labels < 0):
            raise ShapeError("Labels must be non-negative")
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.labels.shape


@dataclass(frozen=True, eq=False)
class JacobianMap:
    """Jacobian determinant of a deformation at every voxel"""

    dets: np.ndarray

    def __post_init__(self):
        dets = _frozen(self.dets, np.float64)
        validate_shape(dets.shape)
        object.__setattr__(self, "dets", dets)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.dets.shape


def identity_coords(shape: Sequence[int]) -> np.ndarray:
    """Integer lattice positions as float64, shape (dim, *shape)"""
    axes = [np.arange(n, dtype=np.float64) for n in shape]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=0)


def make_identity_grid(shape: Sequence[int]) -> VoxelCloud:
    """Identity cloud q0 with coords(x) = x"""
    return VoxelCloud(identity_coords(validate_shape(shape)))


def require_same_shape(*shapes: Sequence[int]) -> None:
    first = tuple(shapes[0])
    for other in shapes[1:]:
        if tuple(other) != first:
            raise ShapeError(f"Shape mismatch: {first} vs {tuple(other)}")
