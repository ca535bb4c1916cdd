"""Central finite differences, used as the independent oracle for backprop."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Gradient of scalar ``f()`` w.r.t. ``x``, perturbing ``x`` in place."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * eps)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    """Largest |a - n| / max(|a|, |n|, floor); the floor keeps near-zero entries absolute."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(rel.max()) if rel.size else 0.0


def check_gradients(
    f: Callable[[], float],
    arrays: Sequence[np.ndarray],
    analytic: Sequence[np.ndarray],
    eps: float = 1e-4,
    floor: float = 1e-5,
) -> float:
    """Worst relative error across all ``arrays`` between analytic and numeric gradients."""
    worst = 0.0
    for x, g in zip(arrays, analytic):
        worst = max(worst, max_rel_error(g, numeric_grad(f, x, eps), floor))
    return worst
