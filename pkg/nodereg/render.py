"""Raster views of a deformation: lattice lines, Jacobian map and fold mask."""

import logging
from typing import Optional

import numpy as np
from PIL import Image as PILImage
from PIL import ImageDraw

from nodereg.errors import ConfigError
from nodereg.grid.types import Image, JacobianMap, VoxelCloud

logger = logging.getLogger(__name__)


def _planar_coords(cloud: VoxelCloud, slice_index: Optional[int]) -> np.ndarray:
    """(2, H, W) in-plane coordinates; 3D clouds are cut across the first axis"""
    if cloud.dim == 2:
        return cloud.coords
    index = cloud.shape[0] // 2 if slice_index is None else slice_index
    return cloud.coords[1:, index]


def _planar(values: np.ndarray, slice_index: Optional[int]) -> np.ndarray:
    if values.ndim == 2:
        return values
    index = values.shape[0] // 2 if slice_index is None else slice_index
    return values[index]


def render_grid(cloud: VoxelCloud, every: int = 4, slice_index: Optional[int] = None) -> Image:
    """Every k-th lattice row and column, pushed through the cloud, white on black

    Segments join consecutive transformed lattice points rounded to integer
    pixels and are rasterized 1 pixel wide.
    """
    if every < 1:
        raise ConfigError(f"grid spacing must be >= 1, got {every}")
    coords = _planar_coords(cloud, slice_index)
    height, width = coords.shape[1:]
    canvas = PILImage.new("L", (width, height), 0)
    draw = ImageDraw.Draw(canvas)

    # Pillow points are (x, y) = (column, row)
    points = np.rint(np.stack([coords[1], coords[0]], axis=-1)).astype(np.int64)
    for i in range(0, height, every):
        row = [tuple(p) for p in points[i].tolist()]
        draw.line(row, fill=255, width=1)
    for j in range(0, width, every):
        column = [tuple(p) for p in points[:, j].tolist()]
        draw.line(column, fill=255, width=1)
    return Image(np.asarray(canvas, dtype=np.float64) / 255.0)


def render_jacobian(jac: JacobianMap, slice_index: Optional[int] = None) -> Image:
    """Determinants mapped linearly from [0, 2 * median] to [0, 1]"""
    dets = _planar(jac.dets, slice_index)
    median = float(np.median(dets))
    upper = 2.0 * median
    if not upper > 0:
        upper = float(np.max(np.abs(dets))) or 1.0
        logger.warning(f"Non-positive median determinant {median:.3g}; scaling by max |det|")
    return Image(np.clip(dets / upper, 0.0, 1.0))


def render_folds(jac: JacobianMap, slice_index: Optional[int] = None) -> Image:
    """1 where the determinant is <= 0"""
    return Image((_planar(jac.dets, slice_index) <= 0.0).astype(np.float64))
