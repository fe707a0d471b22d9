"""Differentiable ops over :class:`~commonground.autodiff.Tensor`.

Conventions shared by every op:

* forward values are plain numpy arrays in the operands' common dtype;
* backward closures accumulate exact vector-Jacobian products into the
  parents, never approximations;
* reductions with ties (max) route the gradient to the first matching
  index in row-major order;
* norm guards clamp at ``EPS`` so zero vectors stay zero and stay
  differentiable (the clamped branch treats the denominator as constant).
"""

from __future__ import annotations

import numpy as np

from .autodiff import ShapeError, Tensor, check_same_dtype, make_node

EPS = 1e-8


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    check_same_dtype(a, b)
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return make_node(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    check_same_dtype(a, b)
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return make_node(out, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    out = x.data * c

    def backward(g):
        x.accumulate_grad(g * c)

    return make_node(out, (x,), backward)


def add_scalar(x: Tensor, c: float) -> Tensor:
    x = as_tensor(x)
    out = x.data + float(c)

    def backward(g):
        x.accumulate_grad(g)

    return make_node(out, (x,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a [..., m, k] @ b [k, n]``; the right operand must be a matrix."""
    a, b = as_tensor(a), as_tensor(b)
    check_same_dtype(a, b)
    if b.data.ndim != 2:
        raise ShapeError(f"matmul right operand must be rank 2, got shape {b.data.shape}")
    if a.data.ndim < 2 or a.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            # contract over every axis of `a` except the last
            axes = tuple(range(a.data.ndim - 1))
            b.accumulate_grad(np.tensordot(a.data, g, axes=(axes, axes)))

    return make_node(out, (a, b), backward)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul ``a [B, m, k] @ b [B, k, n]``."""
    a, b = as_tensor(a), as_tensor(b)
    check_same_dtype(a, b)
    if a.data.ndim != 3 or b.data.ndim != 3:
        raise ShapeError(f"bmm expects rank-3 operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2] != b.data.shape[1]:
        raise ShapeError(f"bmm shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.swapaxes(1, 2))
        if b.requires_grad:
            b.accumulate_grad(a.data.swapaxes(1, 2) @ g)

    return make_node(out, (a, b), backward)


def transpose(x: Tensor, axes: tuple) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    out = np.transpose(x.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        x.accumulate_grad(np.transpose(g, inverse))

    return make_node(out, (x,), backward)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    x = as_tensor(x)
    out = np.reshape(x.data, shape)

    def backward(g):
        x.accumulate_grad(np.reshape(g, x.data.shape))

    return make_node(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.data.dtype)

    def backward(g):
        x.accumulate_grad(g * mask)

    return make_node(out, (x,), backward)


def leaky_relu(x: Tensor, alpha: float) -> Tensor:
    """Leaky rectifier; subgradient at exactly zero is zero."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"leaky_relu slope must satisfy 0 <= alpha < 1, got {alpha}")
    x = as_tensor(x)
    out = np.where(x.data > 0, x.data, alpha * x.data).astype(x.data.dtype)
    factor = np.where(x.data > 0, 1.0, np.where(x.data < 0, alpha, 0.0)).astype(x.data.dtype)

    def backward(g):
        x.accumulate_grad(g * factor)

    return make_node(out, (x,), backward)


def l2_normalize(x: Tensor) -> Tensor:
    """Normalize along the last axis with a clamped denominator.

    Vectors whose norm is at most ``EPS`` are scaled by ``1/EPS`` (so an
    exact zero vector maps to the zero vector) and the denominator is
    treated as constant in the backward pass for that branch.
    """
    x = as_tensor(x)
    norm = np.sqrt(np.sum(x.data * x.data, axis=-1, keepdims=True))
    denom = np.maximum(norm, np.asarray(EPS, dtype=x.data.dtype))
    out = x.data / denom
    safe = norm > EPS

    def backward(g):
        dot = np.sum(g * out, axis=-1, keepdims=True)
        gx = np.where(safe, (g - out * dot) / denom, g / denom)
        x.accumulate_grad(gx.astype(x.data.dtype))

    return make_node(out, (x,), backward)


def _resize_axis(out_n: int, in_n: int):
    """Half-pixel-centre source coordinates, clamped to the valid range."""
    src = (np.arange(out_n) + 0.5) * (in_n / out_n) - 0.5
    src = np.clip(src, 0.0, in_n - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_n - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_resize(x: Tensor, out_h: int, out_w: int | None = None) -> Tensor:
    """Resample a ``[h, w, c]`` tensor to ``[out_h, out_w, c]``."""
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise ShapeError(f"bilinear_resize expects rank 3 [h, w, c], got shape {x.data.shape}")
    if out_w is None:
        out_w = out_h
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output extents must be positive, got ({out_h}, {out_w})")
    h, w, _ = x.data.shape
    y0, y1, fy = _resize_axis(out_h, h)
    x0, x1, fx = _resize_axis(out_w, w)
    fy = fy.astype(x.data.dtype)[:, None, None]
    fx = fx.astype(x.data.dtype)[None, :, None]
    w00 = (1 - fy) * (1 - fx)
    w01 = (1 - fy) * fx
    w10 = fy * (1 - fx)
    w11 = fy * fx
    out = (
        w00 * x.data[np.ix_(y0, x0)]
        + w01 * x.data[np.ix_(y0, x1)]
        + w10 * x.data[np.ix_(y1, x0)]
        + w11 * x.data[np.ix_(y1, x1)]
    )

    def backward(g):
        gx = np.zeros_like(x.data)
        Y0, X0 = np.meshgrid(y0, x0, indexing="ij")
        Y1, X1 = np.meshgrid(y1, x1, indexing="ij")
        np.add.at(gx, (Y0, X0), w00 * g)
        np.add.at(gx, (Y0, X1), w01 * g)
        np.add.at(gx, (Y1, X0), w10 * g)
        np.add.at(gx, (Y1, X1), w11 * g)
        x.accumulate_grad(gx)

    return make_node(out, (x,), backward)


def max_axis(x: Tensor, axis: int) -> tuple[Tensor, np.ndarray]:
    """Max along one axis; also returns the winning indices.

    Gradient flows only to the argmax positions; ties resolve to the
    lowest index.
    """
    x = as_tensor(x)
    idx = np.argmax(x.data, axis=axis)
    out = np.max(x.data, axis=axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(
            gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis
        )
        x.accumulate_grad(gx)

    return make_node(out, (x,), backward), idx


def take_axis(x: Tensor, indices, axis: int) -> Tensor:
    """Gather slices along an axis (used to restrict attention levels)."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    out = np.take(x.data, idx, axis=axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(np.moveaxis(gx, axis, 0), idx, np.moveaxis(g, axis, 0))
        x.accumulate_grad(gx)

    return make_node(out, (x,), backward)


def reduce_sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            x.accumulate_grad(np.broadcast_to(g, x.data.shape).astype(x.data.dtype))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            x.accumulate_grad(np.broadcast_to(ge, x.data.shape).astype(x.data.dtype))

    return make_node(out, (x,), backward)


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("stack requires at least one tensor")
    check_same_dtype(*ts)
    out = np.stack([t.data for t in ts], axis=axis)

    def backward(g):
        slices = np.moveaxis(g, axis, 0)
        for t, gs in zip(ts, slices):
            if t.requires_grad:
                t.accumulate_grad(np.ascontiguousarray(gs))

    return make_node(out, tuple(ts), backward)


def diag(x: Tensor) -> Tensor:
    """Main diagonal of a square matrix."""
    x = as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[0] != x.data.shape[1]:
        raise ShapeError(f"diag expects a square matrix, got shape {x.data.shape}")
    out = np.diagonal(x.data).copy()

    def backward(g):
        gx = np.zeros_like(x.data)
        np.fill_diagonal(gx, g)
        x.accumulate_grad(gx)

    return make_node(out, (x,), backward)


def logsumexp_scaled(r: Tensor, gamma: float) -> Tensor:
    """Smooth maximum ``log(sum(exp(gamma * r))) / gamma`` of a vector."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    r = as_tensor(r)
    if r.data.ndim != 1:
        raise ShapeError(f"logsumexp_scaled expects a rank-1 tensor, got shape {r.data.shape}")
    m = np.max(r.data)
    e = np.exp(gamma * (r.data - m))
    out = np.asarray(m + np.log(np.sum(e)) / gamma, dtype=r.data.dtype)
    soft = e / np.sum(e)

    def backward(g):
        r.accumulate_grad((g * soft).astype(r.data.dtype))

    return make_node(out, (r,), backward)


def logsumexp_axis(x: Tensor, axis: int) -> Tensor:
    """Numerically stable ``log(sum(exp(x)))`` along one axis."""
    x = as_tensor(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = np.sum(e, axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(s), axis=axis)
    soft = e / s

    def backward(g):
        x.accumulate_grad((np.expand_dims(g, axis) * soft).astype(x.data.dtype))

    return make_node(out, (x,), backward)


def softmax_axis(x: Tensor, axis: int) -> Tensor:
    x = as_tensor(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        x.accumulate_grad((out * (g - inner)).astype(x.data.dtype))

    return make_node(out, (x,), backward)
