"""Synthetic image pairs for demos, ablations and tests."""

from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np
from scipy import ndimage

from nodereg.errors import ConfigError
from nodereg.grid.sampling import warp, warp_labels
from nodereg.grid.types import Image, LabelMap, VoxelCloud, identity_coords

DEMO_SIZE = 64
# edge softening applied to every binary shape
EDGE_SIGMA = 1.0
BRAIN_VENTRICLE_SCALE = 1.4
BRAIN_WARP_AMPLITUDE = 4.0


@dataclass(frozen=True)
class DemoPair:
    name: str
    fixed: Image
    moving: Image
    fixed_labels: LabelMap
    moving_labels: LabelMap


def _radius(shape: Tuple[int, ...], center=None) -> np.ndarray:
    grid = identity_coords(shape)
    if center is None:
        center = [(n - 1) / 2.0 for n in shape]
    return np.sqrt(sum((grid[a] - center[a]) ** 2 for a in range(len(shape))))


def _soften(mask: np.ndarray) -> Image:
    return Image(np.clip(ndimage.gaussian_filter(mask.astype(np.float64), EDGE_SIGMA), 0.0, 1.0))


def _labels(*masks: np.ndarray) -> LabelMap:
    labels = np.zeros(masks[0].shape, dtype=np.int64)
    for value, mask in enumerate(masks, start=1):
        labels[mask] = value
    return LabelMap(labels)


def circle_mask(size: int = DEMO_SIZE, radius: float = 16.0) -> np.ndarray:
    return _radius((size, size)) <= radius


def donut_mask(size: int = DEMO_SIZE, outer: float = 20.0, inner: float = 9.0) -> np.ndarray:
    r = _radius((size, size))
    return (r <= outer) & (r >= inner)


def square_mask(size: int = DEMO_SIZE, half: int = 14) -> np.ndarray:
    grid = identity_coords((size, size))
    c = (size - 1) / 2.0
    return (np.abs(grid[0] - c) <= half) & (np.abs(grid[1] - c) <= half)


def cross_mask(size: int = DEMO_SIZE, half: int = 20, arm: int = 6) -> np.ndarray:
    grid = identity_coords((size, size))
    c = (size - 1) / 2.0
    dy, dx = np.abs(grid[0] - c), np.abs(grid[1] - c)
    return ((dy <= half) & (dx <= arm)) | ((dx <= half) & (dy <= arm))


def blobs_mask(size: int = DEMO_SIZE, offset: float = 0.0) -> np.ndarray:
    shape = (size, size)
    a = _radius(shape, center=(size * 0.35 + offset, size * 0.3)) <= 8.0
    b = _radius(shape, center=(size * 0.65 - offset, size * 0.7)) <= 8.0
    return a | b


def brain_masks(
    size: int = DEMO_SIZE, scale: float = 1.0, ventricle_scale: float = 1.0
) -> Tuple[np.ndarray, np.ndarray]:
    """(tissue, ventricles) of a schematic axial slice; ventricle_scale widens the ventricles only"""
    grid = identity_coords((size, size))
    c = (size - 1) / 2.0
    y, x = (grid[0] - c) / size, (grid[1] - c) / size
    head = (y / (0.40 * scale)) ** 2 + (x / (0.32 * scale)) ** 2 <= 1.0
    v = scale * ventricle_scale
    left = ((y + 0.02) / (0.14 * v)) ** 2 + ((x + 0.07) / (0.04 * v)) ** 2 <= 1.0
    right = ((y + 0.02) / (0.14 * v)) ** 2 + ((x - 0.07) / (0.04 * v)) ** 2 <= 1.0
    ventricles = left | right
    return head & ~ventricles, ventricles


def _pair(name: str, fixed_masks, moving_masks) -> DemoPair:
    fixed = _soften(np.any(fixed_masks, axis=0))
    moving = _soften(np.any(moving_masks, axis=0))
    return DemoPair(name, fixed, moving, _labels(*fixed_masks), _labels(*moving_masks))


def smooth_warp_cloud(shape: Tuple[int, ...], amplitude: float = 2.0) -> VoxelCloud:
    """Identity plus a smooth sinusoidal displacement vanishing at the faces"""
    grid = identity_coords(shape)
    bump = np.ones(shape)
    for a, n in enumerate(shape):
        bump = bump * np.sin(np.pi * grid[a] / (n - 1))
    coords = grid.copy()
    for a in range(len(shape)):
        b = (a + 1) % len(shape)
        coords[a] = grid[a] + amplitude * bump * np.cos(np.pi * grid[b] / (shape[b] - 1))
    return VoxelCloud(coords)


def circle_donut() -> DemoPair:
    return _pair("circle_donut", [circle_mask()], [donut_mask()])


def donut_circle() -> DemoPair:
    return _pair("donut_circle", [donut_mask()], [circle_mask()])


def square_cross() -> DemoPair:
    return _pair("square_cross", [square_mask()], [cross_mask()])


def blobs() -> DemoPair:
    return _pair("blobs", [blobs_mask()], [blobs_mask(offset=4.0)])


def _brain_image(masks: Tuple[np.ndarray, np.ndarray]) -> Image:
    tissue, ventricles = masks
    return _soften(tissue.astype(np.float64) + 0.3 * ventricles)


def brain() -> DemoPair:
    """Moving slice has wider ventricles and is bent by a smooth warp"""
    fixed_masks = brain_masks()
    moving_masks = brain_masks(ventricle_scale=BRAIN_VENTRICLE_SCALE)
    cloud = smooth_warp_cloud((DEMO_SIZE, DEMO_SIZE), amplitude=BRAIN_WARP_AMPLITUDE)
    moving = warp(_brain_image(moving_masks), cloud)
    return DemoPair(
        "brain", _brain_image(fixed_masks), moving,
        _labels(*fixed_masks), warp_labels(_labels(*moving_masks), cloud)
    )


def sphere_pair(size: int = 16, shift: float = 1.5) -> DemoPair:
    shape = (size, size, size)
    c = (size - 1) / 2.0
    fixed_mask = _radius(shape) <= size / 4.0
    moving_mask = _radius(shape, center=(c + shift, c, c - shift)) <= size / 4.0
    return _pair("sphere", [fixed_mask], [moving_mask])


DEMOS: Dict[str, Callable[[], DemoPair]] = {
    "circle_donut": circle_donut,
    "donut_circle": donut_circle,
    "square_cross": square_cross,
    "blobs": blobs,
    "brain": brain,
    "sphere": sphere_pair,
}


def load_demo(name: str) -> DemoPair:
    if name not in DEMOS:
        raise ConfigError(f"Unknown demo {name!r}; choose from {sorted(DEMOS)}")
    return DEMOS[name]()
