"""Central finite-difference verification of analytic gradients.

Meant to run on float64 tensors; float32 round-off swamps the comparison
tolerance long before any real gradient bug would.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .autodiff import ParamSet, Tensor


def numeric_gradient(loss_fn: Callable[[], float], leaf: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn`` w.r.t. one leaf tensor.

    Perturbs ``leaf.data`` in place one element at a time and restores it,
    so ``loss_fn`` must rebuild its graph from the leaf on every call.
    """
    flat = leaf.data.ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = loss_fn()
        flat[i] = keep - step
        down = loss_fn()
        flat[i] = keep
        grad[i] = (up - down) / (2.0 * step)
    return grad.reshape(leaf.data.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute difference scaled by the larger gradient magnitude.

    Returns 0 when both gradients are numerically zero.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)))
    if scale < 1e-7:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_tensor(loss_fn: Callable[[], Tensor], leaf: Tensor, step: float = 1e-5) -> float:
    """Relative error between backward() and finite differences for one leaf."""
    leaf.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data)
    numeric = numeric_gradient(lambda: float(loss_fn().data), leaf, step)
    return relative_error(analytic, numeric)


def check_params(
    loss_fn: Callable[[], Tensor], params: ParamSet, step: float = 1e-5
) -> Mapping[str, float]:
    """Relative error per named parameter for a scalar loss builder."""
    loss = loss_fn()
    params.zero_grad()
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    scalar = lambda: float(loss_fn().data)
    errors = {}
    for name, p in params.items():
        numeric = numeric_gradient(scalar, p, step)
        errors[name] = relative_error(analytic[name], numeric)
    return errors
