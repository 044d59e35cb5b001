"""Registration quality metrics: Dice overlap, folding ratio and topology counts."""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from nodereg.errors import ConfigError
from nodereg.grid.derivatives import jacobian_det_map
from nodereg.grid.types import LabelMap, VoxelCloud, require_same_shape


@dataclass(frozen=True)
class DiceResult:
    per_label: Dict[int, Optional[float]]
    mean: float


def dice(a: LabelMap, b: LabelMap, labels: Sequence[int]) -> DiceResult:
    """2|A ∩ B| / (|A| + |B|) per label; labels absent from both are left out of the mean"""
    require_same_shape(a.shape, b.shape)
    if len(labels) == 0:
        raise ConfigError("Dice needs at least one label")
    per_label: Dict[int, Optional[float]] = {}
    for label in labels:
        in_a = a.labels == label
        in_b = b.labels == label
        total = int(in_a.sum() + in_b.sum())
        if total == 0:
            per_label[int(label)] = None
            continue
        per_label[int(label)] = 2.0 * int(np.sum(in_a & in_b)) / total
    present = [v for v in per_label.values() if v is not None]
    mean = float(np.mean(present)) if present else float("nan")
    return DiceResult(per_label=per_label, mean=mean)


def neg_jacobian_ratio(cloud: VoxelCloud) -> float:
    """Fraction of voxels whose Jacobian determinant is <= 0"""
    return float(np.mean(jacobian_det_map(cloud).dets <= 0.0))


def topology_counts(mask: np.ndarray) -> Tuple[int, int]:
    """(foreground components, enclosed holes) of a binary image

    Foreground uses face connectivity and background full connectivity; a
    hole is a background component that does not touch the image border.
    """
    mask = np.asarray(mask, dtype=bool)
    _, components = ndimage.label(mask)
    background, count = ndimage.label(
        ~mask, structure=ndimage.generate_binary_structure(mask.ndim, mask.ndim)
    )
    border = np.zeros_like(mask)
    for axis in range(mask.ndim):
        index = [slice(None)] * mask.ndim
        index[axis] = 0
        border[tuple(index)] = True
        index[axis] = -1
        border[tuple(index)] = True
    touching = set(np.unique(background[border & ~mask]).tolist())
    holes = sum(1 for label in range(1, count + 1) if label not in touching)
    return int(components), holes


def metrics_report(
    fixed_labels: Optional[LabelMap],
    warped_labels: Optional[LabelMap],
    cloud: Optional[VoxelCloud],
    labels: Optional[Sequence[int]] = None
) -> Dict[str, Any]:
    """JSON-ready {mean_dice, per_label, neg_jacobian_ratio}"""
    report: Dict[str, Any] = {}
    if fixed_labels is not None and warped_labels is not None:
        if labels is None:
            found = np.union1d(np.unique(fixed_labels.labels), np.unique(warped_labels.labels))
            labels = [int(v) for v in found if v != 0]
        result = dice(fixed_labels, warped_labels, labels)
        report["mean_dice"] = result.mean
        report["per_label"] = {str(k): v for k, v in result.per_label.items()}
    if cloud is not None:
        report["neg_jacobian_ratio"] = neg_jacobian_ratio(cloud)
    return report
