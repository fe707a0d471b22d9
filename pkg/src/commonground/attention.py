"""Region attention and pertinence scoring in the common space.

For a word vector ``s_t`` and image cell vectors ``v_{n,l}`` the heatmap
value is the rectified cosine ``max(0, <s_t, v_{n,l}>)`` (all vectors
arrive unit-normalized, so the inner product is the cosine).  Attended
features are heatmap-weighted sums of cell vectors, unit-normalized.
Per-level relevance is the inner product of the attended feature with the
query vector; the level axis collapses by a hard max, and the word axis
by a smooth maximum with sharpness ``gamma1``.

The sentence path mirrors this with a single query vector; its attended
feature is left unnormalized unless ``normalized=True``.

``softmax_attention=True`` replaces the rectifier gate with a softmax
over cells within each (query, level) slice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import ShapeError, Tensor


@dataclass
class WordPertinence:
    """Per-word relevance scores for one image/caption pair."""

    per_level: Tensor  # [T, L]
    selected: Tensor  # [T], per-word score at its selected level
    selected_level: np.ndarray  # [T] int, which level won the max
    overall: Tensor  # scalar, smooth max over words


@dataclass
class SentencePertinence:
    """Sentence-to-image relevance via the single-query path."""

    heatmaps: Tensor  # [N, L]
    attended: Tensor  # [L, D]
    per_level: Tensor  # [L]
    score: Tensor  # scalar
    selected_level: int


def _check_common_dim(image_vecs: Tensor, query_dim: int) -> None:
    if image_vecs.data.ndim != 3:
        raise ShapeError(
            f"image vectors must be rank 3 [cells, levels, D], got {image_vecs.data.shape}"
        )
    if image_vecs.data.shape[2] != query_dim:
        raise ShapeError(
            f"common-space mismatch: image D={image_vecs.data.shape[2]}, query D={query_dim}"
        )


def _gate(scores: Tensor, softmax_attention: bool, cell_axis: int) -> Tensor:
    if softmax_attention:
        return ops.softmax_axis(scores, axis=cell_axis)
    return ops.relu(scores)


def word_heatmaps(image_vecs: Tensor, word_vecs: Tensor, softmax_attention: bool = False) -> Tensor:
    """Heatmaps ``[N, T, L]`` for every word at every level."""
    if word_vecs.data.ndim != 2:
        raise ShapeError(f"word vectors must be rank 2 [T, D], got {word_vecs.data.shape}")
    _check_common_dim(image_vecs, word_vecs.data.shape[1])
    n, l, d = image_vecs.data.shape
    t = word_vecs.data.shape[0]
    flat = ops.reshape(image_vecs, (n * l, d))
    sims = ops.matmul(flat, ops.transpose(word_vecs, (1, 0)))  # [N*L, T]
    sims = ops.transpose(ops.reshape(sims, (n, l, t)), (0, 2, 1))  # [N, T, L]
    return _gate(sims, softmax_attention, cell_axis=0)


def attend_words(image_vecs: Tensor, heatmaps: Tensor) -> Tensor:
    """Attended features ``[T, L, D]``: weighted cell sums, unit-normalized."""
    n, t, l = heatmaps.data.shape
    weights = ops.transpose(heatmaps, (2, 1, 0))  # [L, T, N]
    cells = ops.transpose(image_vecs, (1, 0, 2))  # [L, N, D]
    summed = ops.bmm(weights, cells)  # [L, T, D]
    return ops.l2_normalize(ops.transpose(summed, (1, 0, 2)))


def word_pertinence(attended: Tensor, word_vecs: Tensor, gamma1: float) -> WordPertinence:
    """Collapse attended features into per-word and overall scores."""
    t, l, d = attended.data.shape
    queries = ops.reshape(word_vecs, (t, 1, d))
    per_level = ops.reduce_sum(ops.mul(attended, queries), axis=2)  # [T, L]
    selected, level_idx = ops.max_axis(per_level, axis=1)
    overall = ops.logsumexp_scaled(selected, gamma1)
    return WordPertinence(per_level, selected, level_idx, overall)


def score_words(
    image_vecs: Tensor, word_vecs: Tensor, gamma1: float, softmax_attention: bool = False
) -> tuple[Tensor, WordPertinence]:
    """Full word path for one pair; returns the heatmaps and the scores."""
    maps = word_heatmaps(image_vecs, word_vecs, softmax_attention)
    attended = attend_words(image_vecs, maps)
    pert = word_pertinence(attended, word_vecs, gamma1)
    return maps, pert


def score_sentence(
    image_vecs: Tensor,
    sentence_vec: Tensor,
    softmax_attention: bool = False,
    normalized: bool = False,
) -> SentencePertinence:
    """Sentence path for one pair.

    The attended feature is a plain weighted sum by default; pass
    ``normalized=True`` for the unit-normalized variant.
    """
    if sentence_vec.data.ndim != 1:
        raise ShapeError(f"sentence vector must be rank 1 [D], got {sentence_vec.data.shape}")
    _check_common_dim(image_vecs, sentence_vec.data.shape[0])
    n, l, d = image_vecs.data.shape
    flat = ops.reshape(image_vecs, (n * l, d))
    sims = ops.matmul(flat, ops.reshape(sentence_vec, (d, 1)))  # [N*L, 1]
    maps = _gate(ops.reshape(sims, (n, l)), softmax_attention, cell_axis=0)  # [N, L]
    weights = ops.reshape(ops.transpose(maps, (1, 0)), (l, 1, n))
    cells = ops.transpose(image_vecs, (1, 0, 2))  # [L, N, D]
    attended = ops.reshape(ops.bmm(weights, cells), (l, d))
    if normalized:
        attended = ops.l2_normalize(attended)
    per_level = ops.reduce_sum(ops.mul(attended, ops.reshape(sentence_vec, (1, d))), axis=1)
    score, level_idx = ops.max_axis(per_level, axis=0)
    return SentencePertinence(maps, attended, per_level, score, int(level_idx))


def compose_query_heatmap(
    heatmaps: np.ndarray, pertinence: WordPertinence, token_indices: list[int]
) -> tuple[np.ndarray, int]:
    """Combine the selected-level heatmap slices of a query's tokens.

    Token slices are averaged with weights ``max(score, 0)``; if every
    score is non-positive the tokens are weighted uniformly.  Returns the
    combined map ``[N]`` and the selected level of the heaviest token
    (the query's reported level).
    """
    token_indices = list(token_indices)
    if not token_indices:
        raise ValueError("query has no tokens")
    t_total = heatmaps.shape[1]
    for t in token_indices:
        if not 0 <= t < t_total:
            raise IndexError(f"token index {t} out of range for {t_total} tokens")
    scores = np.asarray([float(pertinence.selected.data[t]) for t in token_indices])
    weights = np.maximum(scores, 0.0)
    if weights.sum() <= 0.0:
        weights = np.full(len(token_indices), 1.0 / len(token_indices))
    else:
        weights = weights / weights.sum()
    combined = np.zeros(heatmaps.shape[0], dtype=np.float64)
    for w, t in zip(weights, token_indices):
        level = int(pertinence.selected_level[t])
        combined += w * heatmaps[:, t, level].astype(np.float64)
    heaviest = token_indices[int(np.argmax(weights))]
    return combined, int(pertinence.selected_level[heaviest])


# ------------------------------------------------------------------ batched path
#
# The trainer scores one caption against every image of the batch in a
# single graph pass; these mirror the per-pair functions exactly (see the
# consistency tests) but build ~B fewer nodes per score matrix row.


def word_scores_batch(
    image_stack: Tensor, word_vecs: Tensor, gamma1: float, softmax_attention: bool = False
) -> Tensor:
    """Overall word-path score of one caption against ``B`` images.

    ``image_stack`` is ``[B, N, L, D]``; returns ``[B]``.
    """
    b, n, l, d = image_stack.data.shape
    t = word_vecs.data.shape[0]
    flat = ops.reshape(image_stack, (b * n * l, d))
    sims = ops.matmul(flat, ops.transpose(word_vecs, (1, 0)))  # [B*N*L, T]
    sims = ops.transpose(ops.reshape(sims, (b, n, l, t)), (0, 1, 3, 2))  # [B, N, T, L]
    maps = _gate(sims, softmax_attention, cell_axis=1)
    weights = ops.reshape(ops.transpose(maps, (0, 3, 2, 1)), (b * l, t, n))
    cells = ops.reshape(ops.transpose(image_stack, (0, 2, 1, 3)), (b * l, n, d))
    summed = ops.reshape(ops.bmm(weights, cells), (b, l, t, d))
    attended = ops.l2_normalize(ops.transpose(summed, (0, 2, 1, 3)))  # [B, T, L, D]
    queries = ops.reshape(word_vecs, (1, t, 1, d))
    per_level = ops.reduce_sum(ops.mul(attended, queries), axis=3)  # [B, T, L]
    selected, _ = ops.max_axis(per_level, axis=2)  # [B, T]
    smooth = ops.logsumexp_axis(ops.scale(selected, gamma1), axis=1)
    return ops.scale(smooth, 1.0 / gamma1)


def sentence_scores_batch(
    image_stack: Tensor,
    sentence_vec: Tensor,
    softmax_attention: bool = False,
    normalized: bool = False,
) -> Tensor:
    """Sentence-path score of one sentence against ``B`` images; ``[B]``."""
    b, n, l, d = image_stack.data.shape
    flat = ops.reshape(image_stack, (b * n * l, d))
    sims = ops.matmul(flat, ops.reshape(sentence_vec, (d, 1)))
    maps = _gate(ops.reshape(sims, (b, n, l)), softmax_attention, cell_axis=1)
    weights = ops.reshape(ops.transpose(maps, (0, 2, 1)), (b * l, 1, n))
    cells = ops.reshape(ops.transpose(image_stack, (0, 2, 1, 3)), (b * l, n, d))
    attended = ops.reshape(ops.bmm(weights, cells), (b, l, d))
    if normalized:
        attended = ops.l2_normalize(attended)
    per_level = ops.reduce_sum(ops.mul(attended, ops.reshape(sentence_vec, (1, 1, d))), axis=2)
    scores, _ = ops.max_axis(per_level, axis=1)
    return scores
