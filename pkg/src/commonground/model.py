"""Grounding model: mapping parameters plus scoring configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attention, ops
from .autodiff import Tensor
from .mapping import MappingDims, MappingParams, map_sentence, map_visual, map_words

LEVEL_MODES = ("multi", "middle", "last")


@dataclass
class GroundingModel:
    """Bundles trainable mappings with the attention/scoring switches.

    ``levels`` restricts scoring to a subset of the mapped feature
    levels: ``multi`` keeps all of them, ``middle`` keeps the middle one
    (lower index on ties), ``last`` keeps the deepest.
    """

    params: MappingParams
    grid_size: int
    gamma1: float = 5.0
    gamma2: float = 10.0
    alpha: float = 0.25
    levels: str = "multi"
    softmax_attention: bool = False
    normalized_sentence_attention: bool = False

    def __post_init__(self):
        if self.levels not in LEVEL_MODES:
            raise ValueError(f"levels must be one of {LEVEL_MODES}, got {self.levels!r}")
        if self.grid_size < 1:
            raise ValueError("grid_size must be positive")

    @property
    def dims(self) -> MappingDims:
        return self.params.dims

    @property
    def param_set(self):
        """The named trainable tensors behind the mappings."""
        return self.params.params

    def active_levels(self) -> list[int]:
        count = self.dims.levels
        if self.levels == "multi":
            return list(range(count))
        if self.levels == "middle":
            return [(count - 1) // 2]
        return [count - 1]

    def embed_image(self, raw_levels: list[np.ndarray]) -> Tensor:
        """Unit cell vectors ``[N, L_active, D]`` for the active levels."""
        vecs = map_visual(raw_levels, self.params, self.grid_size, self.alpha)
        active = self.active_levels()
        if len(active) != self.dims.levels:
            vecs = ops.take_axis(vecs, active, axis=1)
        return vecs

    def embed_words(self, raw_stack: np.ndarray) -> Tensor:
        return map_words(raw_stack, self.params, self.alpha)

    def embed_sentence(self, raw_dirs: np.ndarray) -> Tensor:
        return map_sentence(raw_dirs, self.params, self.alpha)

    def word_path(self, image_vecs: Tensor, word_vecs: Tensor):
        """Heatmaps plus word pertinence for one pair."""
        return attention.score_words(
            image_vecs, word_vecs, self.gamma1, self.softmax_attention
        )

    def sentence_path(self, image_vecs: Tensor, sentence_vec: Tensor):
        return attention.score_sentence(
            image_vecs,
            sentence_vec,
            self.softmax_attention,
            self.normalized_sentence_attention,
        )

    def pair_scores(self, image_vecs: Tensor, word_vecs: Tensor, sentence_vec: Tensor):
        """Overall (word_score, sentence_score) scalar nodes for one pair."""
        _, word_pert = self.word_path(image_vecs, word_vecs)
        sent_pert = self.sentence_path(image_vecs, sentence_vec)
        return word_pert.overall, sent_pert.score

    def report_level(self, active_index: int) -> int:
        """Translate an index into the active-level slice back to the
        original level id."""
        return self.active_levels()[active_index]
