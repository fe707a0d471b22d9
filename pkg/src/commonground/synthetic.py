"""Synthetic grounding corpus with planted correspondences.

Each sample is an image grid whose cells either hold one of ``concepts``
latent unit vectors or are empty (exactly zero), paired with a caption
naming the planted concepts.  Raw features are produced by fixed random
linear maps out of the latent space, one per visual level and per text
layer, plus isotropic noise on occupied cells, so the true cell-to-token
correspondence is known exactly and a brute-force decoder gives an
accuracy ceiling.

Level planting: with ``plant_levels`` on, concept ``c`` is visible only
at level ``c mod levels``; its cells at other levels hold pure noise.
This makes the correct attention level identifiable per query.

Everything is a pure function of the settings (including the seed): two
generations with equal settings produce byte-identical artifacts.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .container import write_container
from .dataset import Dataset, write_index


@dataclass(frozen=True)
class SyntheticSpec:
    concepts: int = 8
    grid: int = 8
    levels: int = 3
    level_channels: tuple[int, ...] = ()
    sigma: float = 0.05
    samples: int = 500
    seed: int = 0
    plant_levels: bool = True
    word_layers: int = 3
    word_dim: int = 48
    sentence_layers: int = 2
    sentence_dim: int = 96
    cell_pixels: int = 16
    min_caption: int = 1
    max_caption: int = 4
    max_cells: int = 2
    noise_rank: int = 4

    def __post_init__(self):
        channels = self.level_channels or tuple(32 + 16 * i for i in range(self.levels))
        object.__setattr__(self, "level_channels", tuple(channels))
        if len(self.level_channels) != self.levels:
            raise ValueError(
                f"{len(self.level_channels)} channel extents for {self.levels} levels"
            )
        if self.noise_rank < 1:
            raise ValueError("noise_rank must be positive")
        if self.concepts + self.noise_rank > min(self.level_channels):
            raise ValueError(
                f"{self.concepts} concepts plus noise rank {self.noise_rank} "
                f"exceed the latent capacity {min(self.level_channels)} "
                f"(smallest level width)"
            )
        if self.samples < 1 or self.grid < 1 or self.concepts < 1:
            raise ValueError("concepts, grid, and samples must be positive")
        if self.max_caption > self.concepts:
            raise ValueError("max_caption cannot exceed the concept count")
        if not 1 <= self.min_caption <= self.max_caption:
            raise ValueError("need 1 <= min_caption <= max_caption")

    @property
    def latent_dim(self) -> int:
        return min(self.level_channels)

    @property
    def image_size(self) -> int:
        return self.grid * self.cell_pixels

    def planted_level(self, concept: int) -> int | None:
        return concept % self.levels if self.plant_levels else None


@dataclass
class SyntheticState:
    """Fixed latent vectors and projection maps implied by a spec."""

    spec: SyntheticSpec
    concept_vecs: np.ndarray  # [C, latent]
    noise_basis: np.ndarray  # [latent, noise_rank], orthogonal to concepts
    visual_maps: list[np.ndarray] = field(default_factory=list)  # [latent, c_l] each
    word_maps: list[np.ndarray] = field(default_factory=list)  # [latent, E] each
    sentence_maps: list[np.ndarray] = field(default_factory=list)  # [latent, S] each


def build_state(spec: SyntheticSpec, rng: np.random.Generator | None = None) -> SyntheticState:
    """Latent concepts and projections; draw order is part of the format."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    d = spec.latent_dim
    concepts = rng.standard_normal((spec.concepts, d))
    concepts /= np.linalg.norm(concepts, axis=-1, keepdims=True)
    # Distractor noise lives in a fixed subspace orthogonal to every
    # concept, so a mapping can in principle screen it out entirely.
    basis = rng.standard_normal((d, spec.noise_rank))
    basis -= concepts.T @ np.linalg.lstsq(concepts.T, basis, rcond=None)[0]
    basis /= np.linalg.norm(basis, axis=0, keepdims=True)
    visual = [rng.standard_normal((d, c)) / np.sqrt(d) for c in spec.level_channels]
    words = [rng.standard_normal((d, spec.word_dim)) / np.sqrt(d) for _ in range(spec.word_layers)]
    sents = [
        rng.standard_normal((d, spec.sentence_dim)) / np.sqrt(d)
        for _ in range(spec.sentence_layers)
    ]
    return SyntheticState(spec, concepts, basis, visual, words, sents)


def _noisy_projection(base: np.ndarray, maps: list[np.ndarray], sigma: float, rng) -> np.ndarray:
    rows = [(base + sigma * rng.standard_normal(base.shape)) @ m for m in maps]
    return np.stack(rows, axis=0)


def generate(spec: SyntheticSpec, out_dir: str) -> str:
    """Write ``tensors.gtf`` and ``index.jsonl`` under ``out_dir``;
    returns the index path."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    state = build_state(spec, rng)

    tensors: dict[str, np.ndarray] = {}
    records: list[dict] = []
    px = spec.cell_pixels
    for si in range(spec.samples):
        sid = f"s{si:05d}"
        count = int(rng.integers(spec.min_caption, spec.max_caption + 1))
        chosen = rng.choice(spec.concepts, size=count, replace=False)

        # Place each concept in a few distinct free cells.
        cell_owner = np.full(spec.grid * spec.grid, -1, dtype=np.int64)
        free = list(range(spec.grid * spec.grid))
        placements: dict[int, list[int]] = {}
        for concept in chosen:
            n_cells = int(rng.integers(1, spec.max_cells + 1))
            picked = rng.choice(len(free), size=n_cells, replace=False)
            cells = [free[i] for i in sorted(picked, reverse=True)]
            for i in sorted(picked, reverse=True):
                free.pop(i)
            for cell in cells:
                cell_owner[cell] = concept
            placements[int(concept)] = sorted(cells)

        # Raw visual maps, level by level.  Background cells are exactly
        # zero so they normalize to zero vectors downstream and stay out
        # of the attention pool.  Occupied cells carry concept plus
        # isotropic noise at the planted level; at other levels the
        # concept is replaced by noise from the fixed off-concept
        # subspace, which a mapping can learn to screen out.
        visual_names = []
        for level, m in enumerate(state.visual_maps):
            feats = np.zeros((spec.grid * spec.grid, spec.level_channels[level]))
            for cell in range(spec.grid * spec.grid):
                owner = cell_owner[cell]
                if owner < 0:
                    continue
                visible = spec.planted_level(int(owner)) in (None, level)
                if visible:
                    latent = state.concept_vecs[owner] + spec.sigma * rng.standard_normal(
                        spec.latent_dim
                    )
                else:
                    latent = state.noise_basis @ (
                        spec.sigma * rng.standard_normal(spec.noise_rank)
                    )
                feats[cell] = latent @ m
            name = f"{sid}.vis{level}"
            tensors[name] = feats.reshape(spec.grid, spec.grid, -1).astype(np.float32)
            visual_names.append(name)

        # Caption tokens in randomized order, one word stack per token.
        order = rng.permutation(count)
        caption = [int(chosen[i]) for i in order]
        tokens = [f"concept{c}" for c in caption]
        word_names = []
        for t, concept in enumerate(caption):
            stack = _noisy_projection(
                state.concept_vecs[concept], state.word_maps, spec.sigma, rng
            )
            name = f"{sid}.w{t}"
            tensors[name] = stack.astype(np.float32)
            word_names.append(name)

        mean_vec = state.concept_vecs[caption].mean(axis=0)
        sent_name = f"{sid}.sent"
        tensors[sent_name] = _noisy_projection(
            mean_vec, state.sentence_maps, spec.sigma, rng
        ).astype(np.float32)

        queries = []
        for t, concept in enumerate(caption):
            boxes = []
            for cell in placements[concept]:
                row, col = divmod(cell, spec.grid)
                boxes.append([col * px, row * px, (col + 1) * px, (row + 1) * px])
            qname = f"{sid}.q{t}.sent"
            tensors[qname] = _noisy_projection(
                state.concept_vecs[concept], state.sentence_maps, spec.sigma, rng
            ).astype(np.float32)
            queries.append(
                {
                    "tokens": [t],
                    "boxes": boxes,
                    "category": f"concept{concept}",
                    "sentence": qname,
                }
            )

        records.append(
            {
                "sample_id": sid,
                "image_id": sid,
                "visual": visual_names,
                "tokens": tokens,
                "words": word_names,
                "sentence": sent_name,
                "queries": queries,
            }
        )

    write_container(os.path.join(out_dir, "tensors.gtf"), tensors)
    header = {
        "containers": ["tensors.gtf"],
        "image_width": spec.image_size,
        "image_height": spec.image_size,
        "level_channels": list(spec.level_channels),
        "word_layers": spec.word_layers,
        "word_dim": spec.word_dim,
        "sentence_layers": spec.sentence_layers,
        "sentence_dim": spec.sentence_dim,
        "generator": {
            "concepts": spec.concepts,
            "grid": spec.grid,
            "sigma": spec.sigma,
            "seed": spec.seed,
            "plant_levels": spec.plant_levels,
            "cell_pixels": spec.cell_pixels,
        },
    }
    index_path = os.path.join(out_dir, "index.jsonl")
    write_index(index_path, header, records)
    return index_path


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return float(a @ b / (na * nb))


@dataclass
class DecodedQuery:
    sample_id: str
    query_index: int
    concept: int
    cell: int
    level: int
    hit: bool


def decode_ceiling(spec: SyntheticSpec, dataset: Dataset) -> dict:
    """Brute-force grounding ceiling by direct latent-space decoding.

    Each query token's concept is recovered by max cosine of its raw
    stack against the projected concept vectors, then the image cell is
    the max-cosine cell over all levels of that concept's projection.
    This uses the generator's latent state, never the learned mappings,
    so it bounds what any grounding method can read out of the tensors.
    """
    state = build_state(spec)
    px = spec.cell_pixels
    word_proj = [
        np.stack([state.concept_vecs[c] @ m for c in range(spec.concepts)])
        for m in state.word_maps
    ]
    vis_proj = [
        np.stack([state.concept_vecs[c] @ m for c in range(spec.concepts)])
        for m in state.visual_maps
    ]

    decoded: list[DecodedQuery] = []
    hits = 0
    for i in range(len(dataset)):
        sample = dataset[i]
        flat_levels = [lv.reshape(-1, lv.shape[-1]) for lv in sample.visual]
        for qi, query in enumerate(sample.queries):
            t = query.token_indices[0]
            stack = sample.word_stack[t]
            concept = int(
                np.argmax(
                    [
                        sum(_cosine(stack[k], word_proj[k][c]) for k in range(spec.word_layers))
                        for c in range(spec.concepts)
                    ]
                )
            )
            best, best_cell, best_level = -np.inf, 0, 0
            for level, flat in enumerate(flat_levels):
                for cell in range(flat.shape[0]):
                    score = _cosine(flat[cell], vis_proj[level][concept])
                    if score > best:
                        best, best_cell, best_level = score, cell, level
            row, col = divmod(best_cell, spec.grid)
            center = (col * px + px / 2, row * px + px / 2)
            hit = any(b.contains(*center) for b in query.boxes)
            hits += hit
            decoded.append(DecodedQuery(sample.sample_id, qi, concept, best_cell, best_level, hit))

    total = len(decoded)
    return {
        "pointing_accuracy": hits / total if total else 0.0,
        "queries": decoded,
    }


def spec_from_config(entries: dict) -> SyntheticSpec:
    """Build a spec from flat config entries, rejecting unknown keys."""
    allowed = {f for f in SyntheticSpec.__dataclass_fields__}
    unknown = set(entries) - allowed
    if unknown:
        raise ValueError(f"unknown synthetic keys: {sorted(unknown)}")
    return SyntheticSpec(**entries)
