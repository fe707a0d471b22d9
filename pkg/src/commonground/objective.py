"""In-batch contrastive objective over pairwise relevance matrices.

A score matrix ``R[i, j]`` holds the relevance of caption ``i`` to image
``j``; matched pairs sit on the diagonal.  Training minimizes the
negative log posterior of the matched pairing in both directions
(caption given image, image given caption), summed over the batch, for
both the word-level and sentence-level score matrices.

The loss is evaluated in log-sum-exp form: for one matrix,

    loss = sum_j LSE_i(g R[:, j]) + sum_i LSE_j(g R[i, :]) - 2 sum_i g R[i, i]

with sharpness ``g``, which equals the summed negative log posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import ShapeError, Tensor
from .mapping import MappingParams


@dataclass
class LossBreakdown:
    word: Tensor
    sentence: Tensor
    regularization: Tensor | None
    total: Tensor

    def scalars(self) -> dict[str, float]:
        out = {
            "word_loss": float(self.word.data),
            "sentence_loss": float(self.sentence.data),
            "total_loss": float(self.total.data),
        }
        out["reg"] = float(self.regularization.data) if self.regularization is not None else 0.0
        return out


def _check_square(scores: Tensor) -> int:
    if scores.data.ndim != 2 or scores.data.shape[0] != scores.data.shape[1]:
        raise ShapeError(f"score matrix must be square [B, B], got {scores.data.shape}")
    return scores.data.shape[0]


def posteriors(scores: np.ndarray, gamma2: float) -> tuple[np.ndarray, np.ndarray]:
    """Matched-pair posteriors from a caption-by-image score matrix.

    Returns ``(caption_given_image, image_given_caption)``: the first
    normalizes each column over captions, the second each row over
    images.  Both use max-subtracted softmax at sharpness ``gamma2``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1] or scores.shape[0] == 0:
        raise ShapeError(f"score matrix must be square and non-empty, got {scores.shape}")
    if gamma2 <= 0:
        raise ValueError(f"gamma2 must be positive, got {gamma2}")
    z = gamma2 * scores
    col = np.exp(z - z.max(axis=0, keepdims=True))
    caption_given_image = col / col.sum(axis=0, keepdims=True)
    row = np.exp(z - z.max(axis=1, keepdims=True))
    image_given_caption = row / row.sum(axis=1, keepdims=True)
    return caption_given_image, image_given_caption


def _matrix_loss(scores: Tensor, gamma2: float) -> Tensor:
    _check_square(scores)
    z = ops.scale(scores, gamma2)
    over_captions = ops.reduce_sum(ops.logsumexp_axis(z, axis=0))
    over_images = ops.reduce_sum(ops.logsumexp_axis(z, axis=1))
    matched = ops.scale(ops.reduce_sum(ops.diag(z)), -2.0)
    return ops.add(ops.add(over_captions, over_images), matched)


def batch_loss(
    word_scores: Tensor,
    sentence_scores: Tensor,
    gamma2: float,
    reg_value: float = 0.0,
    params: MappingParams | None = None,
) -> LossBreakdown:
    """Word-path plus sentence-path contrastive loss, optionally with an
    L2 penalty ``reg_value * sum ||W||^2`` over mapping weight matrices."""
    b = _check_square(word_scores)
    if _check_square(sentence_scores) != b:
        raise ShapeError(
            f"score matrices disagree on batch size: {word_scores.data.shape} vs "
            f"{sentence_scores.data.shape}"
        )
    if gamma2 <= 0:
        raise ValueError(f"gamma2 must be positive, got {gamma2}")
    word = _matrix_loss(word_scores, gamma2)
    sentence = _matrix_loss(sentence_scores, gamma2)
    total = ops.add(word, sentence)
    reg = None
    if reg_value:
        if params is None:
            raise ValueError("reg_value set but no parameters supplied")
        reg = ops.scale(params.weight_squares(), reg_value)
        total = ops.add(total, reg)
    return LossBreakdown(word=word, sentence=sentence, regularization=reg, total=total)
