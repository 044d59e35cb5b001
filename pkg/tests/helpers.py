from typing import Callable

import numpy as np
import pytest


def directional_derivative(
    fn: Callable[[np.ndarray], float],
    x: np.ndarray,
    direction: np.ndarray,
    eps: float = 1e-6
) -> float:
    """Central difference of fn along direction"""
    return (fn(x + eps * direction) - fn(x - eps * direction)) / (2.0 * eps)


def assert_gradient_matches(fn, grad, x, rng, trials=3, rtol=1e-5, atol=1e-9, eps=1e-6):
    for _ in range(trials):
        direction = rng.standard_normal(x.shape)
        expected = directional_derivative(fn, x, direction, eps)
        actual = float(np.sum(grad * direction))
        assert actual == pytest.approx(expected, rel=rtol, abs=atol)
