"""Shared oracles and helpers.

The finite-difference functions below are the independent oracle for every
gradient assertion in the suite: they only ever evaluate forward passes.
"""

import numpy as np
import pytest


def central_difference(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Gradient of scalar-valued `fn` at `x` by central differences."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        fp = fn(x)
        xf[i] = orig - h
        fm = fn(x)
        xf[i] = orig
        flat[i] = (fp - fm) / (2.0 * h)
    return grad


def second_difference(fn, x: float, h: float = 1e-4) -> float:
    """Second derivative of scalar `fn` at scalar `x`: FD of FD."""
    return (fn(x + h) - 2.0 * fn(x) + fn(x - h)) / (h * h)


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Scale-relative worst-case error between two arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), 1e-12)
    return float(np.max(np.abs(a - b)) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
