"""Trainable mappings from raw modality features into the common space.

Visual path, per feature level: resample the raw ``[h, w, c]`` map to the
shared grid, flatten the cells, then a 3-layer perceptron (leaky
rectifiers between layers) into the common dimension, and unit-normalize
each cell vector.  The per-level mappings share no weights.

Word path: a stack of per-token embedding layers is collapsed by a
trainable convex-free combination vector, pushed through a 2-layer
perceptron, and unit-normalized per token.

Sentence path: same shape as the word path but over whole-sentence
direction vectors, producing a single common-space vector.

``linear_visual`` / ``linear_text`` swap each perceptron for a single
linear layer (no activation); the combination vectors remain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .autodiff import ParamSet, ShapeError, Tensor


@dataclass(frozen=True)
class MappingDims:
    """Raw feature extents the mappings must accept."""

    level_channels: tuple[int, ...]
    word_layers: int
    word_dim: int
    sentence_layers: int
    sentence_dim: int
    common_dim: int

    def __post_init__(self):
        if not self.level_channels:
            raise ValueError("at least one visual level is required")
        for name in ("word_layers", "word_dim", "sentence_layers", "sentence_dim", "common_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def levels(self) -> int:
        return len(self.level_channels)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def _fc_chain(rng, widths: list[int], dtype) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    for fan_in, fan_out in zip(widths, widths[1:]):
        w = glorot_uniform(rng, fan_in, fan_out, dtype)
        b = np.zeros(fan_out, dtype=dtype)
        layers.append((w, b))
    return layers


@dataclass
class MappingParams:
    """All trainable tensors, registered in a single named ParamSet.

    Checkpoint names: ``vis.l{level}.fc{i}.{w,b}`` (levels 1-based),
    ``word.comb`` / ``word.fc{i}.{w,b}``, ``sent.comb`` / ``sent.fc{i}.{w,b}``.
    """

    dims: MappingDims
    visual: list[list[tuple[Tensor, Tensor]]]
    word_comb: Tensor
    word_fcs: list[tuple[Tensor, Tensor]]
    sent_comb: Tensor
    sent_fcs: list[tuple[Tensor, Tensor]]
    params: ParamSet = field(repr=False)

    def weight_squares(self) -> Tensor:
        """Sum of squared entries over weight matrices only (no biases,
        no combination vectors)."""
        total = None
        for name, p in self.params.items():
            if not name.endswith(".w"):
                continue
            sq = ops.reduce_sum(ops.mul(p, p))
            total = sq if total is None else ops.add(total, sq)
        return total


def init_params(
    seed: int,
    dims: MappingDims,
    linear_visual: bool = False,
    linear_text: bool = False,
    dtype=np.float32,
) -> MappingParams:
    """Glorot-uniform weights, zero biases, uniform combination vectors.

    Draw order is fixed (visual levels in order, then word, then
    sentence) so a seed pins every tensor.
    """
    rng = np.random.default_rng(seed)
    dtype = np.dtype(dtype)
    ps = ParamSet()

    visual = []
    for level, channels in enumerate(dims.level_channels, start=1):
        if linear_visual:
            widths = [channels, dims.common_dim]
        else:
            widths = [channels, dims.common_dim, dims.common_dim, dims.common_dim]
        layers = []
        for i, (w, b) in enumerate(_fc_chain(rng, widths, dtype), start=1):
            wt = ps.add(f"vis.l{level}.fc{i}.w", Tensor(w))
            bt = ps.add(f"vis.l{level}.fc{i}.b", Tensor(b))
            layers.append((wt, bt))
        visual.append(layers)

    def text_branch(prefix: str, stack_size: int, in_dim: int):
        comb = ps.add(
            f"{prefix}.comb",
            Tensor(np.full(stack_size, 1.0 / stack_size, dtype=dtype)),
        )
        widths = [in_dim, dims.common_dim] if linear_text else [in_dim, dims.common_dim, dims.common_dim]
        fcs = []
        for i, (w, b) in enumerate(_fc_chain(rng, widths, dtype), start=1):
            wt = ps.add(f"{prefix}.fc{i}.w", Tensor(w))
            bt = ps.add(f"{prefix}.fc{i}.b", Tensor(b))
            fcs.append((wt, bt))
        return comb, fcs

    word_comb, word_fcs = text_branch("word", dims.word_layers, dims.word_dim)
    sent_comb, sent_fcs = text_branch("sent", dims.sentence_layers, dims.sentence_dim)

    return MappingParams(
        dims=dims,
        visual=visual,
        word_comb=word_comb,
        word_fcs=word_fcs,
        sent_comb=sent_comb,
        sent_fcs=sent_fcs,
        params=ps,
    )


def _run_fc(x: Tensor, layers: list[tuple[Tensor, Tensor]], alpha: float) -> Tensor:
    """Linear chain with leaky rectifiers between layers, none after the last."""
    for i, (w, b) in enumerate(layers):
        x = ops.add(ops.matmul(x, w), b)
        if i + 1 < len(layers):
            x = ops.leaky_relu(x, alpha)
    return x


def map_visual(
    raw_levels: list[np.ndarray], params: MappingParams, grid_size: int, alpha: float = 0.25
) -> Tensor:
    """Map per-level raw maps to unit cell vectors ``[cells, levels, D]``.

    ``raw_levels[l]`` is ``[h_l, w_l, c_l]``; every level is resampled to
    ``grid_size x grid_size`` before its perceptron.
    """
    if len(raw_levels) != len(params.visual):
        raise ShapeError(
            f"model expects {len(params.visual)} visual levels, got {len(raw_levels)}"
        )
    dtype = params.word_comb.data.dtype
    mapped = []
    for level, (raw, layers) in enumerate(zip(raw_levels, params.visual), start=1):
        raw = np.asarray(raw, dtype=dtype)
        if raw.ndim != 3:
            raise ShapeError(f"visual level {level} must be rank 3 [h, w, c], got {raw.shape}")
        channels = layers[0][0].data.shape[0]
        if raw.shape[2] != channels:
            raise ShapeError(
                f"visual level {level} has {raw.shape[2]} channels, mapping expects {channels}"
            )
        x = Tensor(raw)
        x = ops.bilinear_resize(x, grid_size, grid_size)
        x = ops.reshape(x, (grid_size * grid_size, channels))
        mapped.append(_run_fc(x, layers, alpha))
    stacked = ops.stack(mapped, axis=1)
    return ops.l2_normalize(stacked)


def map_words(raw_stack: np.ndarray, params: MappingParams, alpha: float = 0.25) -> Tensor:
    """Map per-token embedding stacks ``[T, K, E]`` to unit vectors ``[T, D]``."""
    dtype = params.word_comb.data.dtype
    raw_stack = np.asarray(raw_stack, dtype=dtype)
    if raw_stack.ndim != 2 + 1:
        raise ShapeError(f"word stack must be rank 3 [tokens, layers, dim], got {raw_stack.shape}")
    tokens, stack_size, width = raw_stack.shape
    if tokens < 1:
        raise ShapeError("word stack must hold at least one token")
    if stack_size != params.dims.word_layers or width != params.dims.word_dim:
        raise ShapeError(
            f"word stack is {stack_size}x{width} per token, mapping expects "
            f"{params.dims.word_layers}x{params.dims.word_dim}"
        )
    x = Tensor(raw_stack)
    comb = ops.reshape(params.word_comb, (1, stack_size, 1))
    combined = ops.reduce_sum(ops.mul(x, comb), axis=1)
    out = _run_fc(combined, params.word_fcs, alpha)
    return ops.l2_normalize(out)


def map_sentence(raw_dirs: np.ndarray, params: MappingParams, alpha: float = 0.25) -> Tensor:
    """Map sentence direction stacks ``[K_s, S]`` to one unit vector ``[D]``."""
    dtype = params.word_comb.data.dtype
    raw_dirs = np.asarray(raw_dirs, dtype=dtype)
    if raw_dirs.ndim != 2:
        raise ShapeError(f"sentence stack must be rank 2 [layers, dim], got {raw_dirs.shape}")
    stack_size, width = raw_dirs.shape
    if stack_size != params.dims.sentence_layers or width != params.dims.sentence_dim:
        raise ShapeError(
            f"sentence stack is {stack_size}x{width}, mapping expects "
            f"{params.dims.sentence_layers}x{params.dims.sentence_dim}"
        )
    x = Tensor(raw_dirs)
    comb = ops.reshape(params.sent_comb, (stack_size, 1))
    combined = ops.reshape(ops.reduce_sum(ops.mul(x, comb), axis=0), (1, width))
    out = _run_fc(combined, params.sent_fcs, alpha)
    return ops.reshape(ops.l2_normalize(out), (params.dims.common_dim,))
