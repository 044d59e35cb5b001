"""Ablation runners over velocity representation, step count and regularizers.

Each runner registers the same pair under a family of configurations and
returns one row per variant: {label, sim, rD, params, wall_ms}.
"""

import logging
import time
from typing import Any, Dict, List, Sequence, Tuple

from nodereg.config import RegistrationConfig
from nodereg.grid.types import Image
from nodereg.optim.registration import register

logger = logging.getLogger(__name__)

Variant = Tuple[str, RegistrationConfig]


def _run_variants(fixed: Image, moving: Image, variants: Sequence[Variant]) -> List[Dict[str, Any]]:
    rows = []
    for label, config in variants:
        started = time.perf_counter()
        result = register(fixed, moving, config)
        wall_ms = (time.perf_counter() - started) * 1000.0
        rows.append({
            "label": label,
            "sim": result.report.sim,
            "rD": result.report.neg_jacobian_ratio,
            "params": result.model.num_params,
            "wall_ms": wall_ms,
        })
        logger.info(f"ablation {label}: sim={result.report.sim:.6g} rD={result.report.neg_jacobian_ratio:.4%}")
    return rows


def representation_variants(base: RegistrationConfig) -> List[Variant]:
    """Neural field with K, per-step tensor with K, per-step tensor without K"""
    no_smoothing = base.kernel.model_copy(update={"radius": 0})
    neural = base.model.model_copy(update={"kind": "neural"})
    tensor = base.model.model_copy(update={"kind": "tensor"})
    return [
        ("neural+K", base.model_copy(update={"model": neural})),
        ("tensor+K", base.model_copy(update={"model": tensor})),
        ("tensor", base.model_copy(update={"model": tensor, "kernel": no_smoothing})),
    ]


def steps_variants(base: RegistrationConfig, steps: Sequence[int] = (1, 2, 3, 4, 5)) -> List[Variant]:
    model = base.model.model_copy(update={"time_mode": "autonomous"})
    return [
        (f"steps={n}", base.model_copy(update={"model": model, "flow": base.flow.with_steps(n)}))
        for n in steps
    ]


def regularizer_variants(base: RegistrationConfig, lambda_jdet: float = 1000.0) -> List[Variant]:
    """K on/off crossed with the Jacobian penalty on/off"""
    variants = []
    for smooth in (True, False):
        kernel = base.kernel if smooth else base.kernel.model_copy(update={"radius": 0})
        for penalize in (False, True):
            loss = base.loss.model_copy(update={"lambda_jdet": lambda_jdet if penalize else 0.0})
            label = f"{'K' if smooth else 'noK'},{'jdet' if penalize else 'nojdet'}"
            variants.append((label, base.model_copy(update={"kernel": kernel, "loss": loss})))
    return variants


def run_representation_ablation(fixed: Image, moving: Image, base: RegistrationConfig) -> List[Dict[str, Any]]:
    return _run_variants(fixed, moving, representation_variants(base))


def run_steps_ablation(
    fixed: Image,
    moving: Image,
    base: RegistrationConfig,
    steps: Sequence[int] = (1, 2, 3, 4, 5)
) -> List[Dict[str, Any]]:
    return _run_variants(fixed, moving, steps_variants(base, steps))


def run_regularizer_ablation(
    fixed: Image,
    moving: Image,
    base: RegistrationConfig,
    lambda_jdet: float = 1000.0
) -> List[Dict[str, Any]]:
    return _run_variants(fixed, moving, regularizer_variants(base, lambda_jdet))


ABLATIONS = {
    "representation": run_representation_ablation,
    "steps": run_steps_ablation,
    "regularizer": run_regularizer_ablation,
}
