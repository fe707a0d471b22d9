"""Pointing-game evaluation and heatmap export.

A query is grounded by upsampling its cell heatmap to image resolution
with bilinear interpolation and taking the hottest pixel.  The query
counts as a hit when that pixel falls inside any of its ground-truth
boxes (half-open).  Attention correctness is the fraction of heatmap
mass inside the union of the boxes.

Word-query mode combines the selected-level heatmap slices of the
query's tokens (weights ``max(score, 0)``, uniform fallback); the
reported level is the heaviest token's selected level.  Sentence-query
mode runs the single-query path on the query's own sentence tensors and
uses its selected-level slice.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .attention import compose_query_heatmap
from .autodiff import Tensor
from .dataset import Box, Dataset
from .model import GroundingModel
from .ops import bilinear_resize

MODES = ("word", "sentence")


def upsample_heatmap(cell_values: np.ndarray, grid_size: int, width: int, height: int) -> np.ndarray:
    """Bilinearly resample a flat cell map ``[grid*grid]`` to ``[height, width]``."""
    cell_values = np.asarray(cell_values, dtype=np.float64)
    if cell_values.shape != (grid_size * grid_size,):
        raise ValueError(
            f"expected {grid_size * grid_size} cell values, got shape {cell_values.shape}"
        )
    cells = Tensor(cell_values.reshape(grid_size, grid_size, 1))
    return bilinear_resize(cells, height, width).data[:, :, 0]


def argmax_location(heatmap: np.ndarray) -> tuple[int, int]:
    """Row and column of the maximum; ties go to the first in row-major order."""
    flat = int(np.argmax(heatmap))
    return divmod(flat, heatmap.shape[1])


def pointing_hit(heatmap: np.ndarray, box: Box) -> bool:
    row, col = argmax_location(heatmap)
    return box.contains(col, row)


def _union_mask(boxes: list[Box], shape: tuple[int, int]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for b in boxes:
        mask[b.y0 : b.y1, b.x0 : b.x1] = True
    return mask


def attention_correctness(heatmap: np.ndarray, boxes: Box | list[Box]) -> float:
    """Heatmap mass inside the box(es) as a fraction of total mass.

    Zero total mass scores 0.
    """
    if isinstance(boxes, Box):
        boxes = [boxes]
    total = float(heatmap.sum())
    if total <= 0.0:
        return 0.0
    inside = float(heatmap[_union_mask(boxes, heatmap.shape)].sum())
    return inside / total


@dataclass
class QueryResult:
    sample_id: str
    query_index: int
    category: str | None
    hit: bool
    point: tuple[int, int]  # (row, col)
    level: int
    correctness: float

    def to_record(self) -> dict:
        return {
            "kind": "query",
            "sample_id": self.sample_id,
            "query_index": self.query_index,
            "category": self.category,
            "hit": self.hit,
            "point": list(self.point),
            "level": self.level,
            "correctness": self.correctness,
        }


@dataclass
class CategoryStats:
    count: int = 0
    hits: int = 0
    correctness_sum: float = 0.0
    level_counts: dict[int, int] = field(default_factory=dict)

    def add(self, result: QueryResult) -> None:
        self.count += 1
        self.hits += result.hit
        self.correctness_sum += result.correctness
        self.level_counts[result.level] = self.level_counts.get(result.level, 0) + 1

    def summary(self) -> dict:
        return {
            "count": self.count,
            "pointing_accuracy": self.hits / self.count,
            "mean_correctness": self.correctness_sum / self.count,
            "level_rates": {
                str(level): 100.0 * n / self.count for level, n in sorted(self.level_counts.items())
            },
        }


@dataclass
class EvalReport:
    mode: str
    queries: list[QueryResult]
    hits: int
    misses: int
    pointing_accuracy: float
    mean_correctness: float
    level_rates: dict[int, float]  # percent of queries per selected level
    per_category: dict[str, CategoryStats]

    def summary(self) -> dict:
        return {
            "kind": "summary",
            "mode": self.mode,
            "queries": len(self.queries),
            "hits": self.hits,
            "misses": self.misses,
            "pointing_accuracy": self.pointing_accuracy,
            "mean_correctness": self.mean_correctness,
            "level_rates": {str(k): v for k, v in sorted(self.level_rates.items())},
            "per_category": {
                name: stats.summary() for name, stats in sorted(self.per_category.items())
            },
        }

    def write(self, path: str) -> None:
        tmp = f"{path}.partial"
        with open(tmp, "w", encoding="utf-8") as fh:
            for q in self.queries:
                fh.write(json.dumps(q.to_record(), sort_keys=True) + "\n")
            fh.write(json.dumps(self.summary(), sort_keys=True) + "\n")
        os.replace(tmp, path)


def _evaluate_query(model, dataset, sample, maps, pert, image_vecs, query, qi, mode):
    if mode == "word":
        combined, active_level = compose_query_heatmap(maps.data, pert, query.token_indices)
        level = model.report_level(active_level)
    else:
        if query.sentence_dirs is None:
            raise ValueError(
                f"sample {sample.sample_id!r} query {qi} has no sentence tensors; "
                "sentence-mode evaluation needs them"
            )
        svec = model.embed_sentence(query.sentence_dirs)
        spert = model.sentence_path(image_vecs, svec)
        combined = spert.heatmaps.data[:, spert.selected_level].astype(np.float64)
        level = model.report_level(spert.selected_level)

    heatmap = upsample_heatmap(
        combined, model.grid_size, dataset.image_width, dataset.image_height
    )
    point = argmax_location(heatmap)
    hit = any(b.contains(point[1], point[0]) for b in query.boxes)
    return QueryResult(
        sample_id=sample.sample_id,
        query_index=qi,
        category=query.category,
        hit=hit,
        point=point,
        level=level,
        correctness=attention_correctness(heatmap, query.boxes),
    )


def evaluate(dataset: Dataset, model: GroundingModel, mode: str = "word") -> EvalReport:
    """Score every query in the dataset; fails on empty datasets."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")

    results: list[QueryResult] = []
    per_category: dict[str, CategoryStats] = {}
    for i in range(len(dataset)):
        sample = dataset[i]
        if not sample.queries:
            continue
        image_vecs = model.embed_image(sample.visual)
        maps = pert = None
        if mode == "word":
            words = model.embed_words(sample.word_stack)
            maps, pert = model.word_path(image_vecs, words)
        for qi, query in enumerate(sample.queries):
            result = _evaluate_query(
                model, dataset, sample, maps, pert, image_vecs, query, qi, mode
            )
            results.append(result)
            key = query.category or "uncategorized"
            per_category.setdefault(key, CategoryStats()).add(result)

    if not results:
        raise ValueError("dataset has no queries to evaluate")
    hits = sum(r.hit for r in results)
    level_counts: dict[int, int] = {}
    for r in results:
        level_counts[r.level] = level_counts.get(r.level, 0) + 1
    return EvalReport(
        mode=mode,
        queries=results,
        hits=hits,
        misses=len(results) - hits,
        pointing_accuracy=hits / len(results),
        mean_correctness=sum(r.correctness for r in results) / len(results),
        level_rates={lvl: 100.0 * n / len(results) for lvl, n in sorted(level_counts.items())},
        per_category=per_category,
    )


def export_heatmap_pgm(heatmap: np.ndarray, path: str) -> None:
    """Binary graymap scaled so the maximum maps to 255; an all-zero
    map exports as all zeros."""
    h = np.asarray(heatmap, dtype=np.float64)
    peak = h.max()
    if peak > 0:
        scaled = np.clip(np.rint(h * (255.0 / peak)), 0, 255).astype(np.uint8)
    else:
        scaled = np.zeros(h.shape, dtype=np.uint8)
    tmp = f"{path}.partial"
    with open(tmp, "wb") as fh:
        fh.write(f"P5\n{h.shape[1]} {h.shape[0]}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
    os.replace(tmp, path)


def export_heatmap_json(heatmap: np.ndarray, path: str, meta: dict | None = None) -> None:
    """Full-precision values plus metadata; reading the file back yields
    exactly the same floats."""
    h = np.asarray(heatmap, dtype=np.float64)
    payload = {
        "height": int(h.shape[0]),
        "width": int(h.shape[1]),
        "values": h.ravel().tolist(),
    }
    if meta:
        payload["meta"] = meta
    tmp = f"{path}.partial"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
    os.replace(tmp, path)


def load_heatmap_json(path: str) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return np.asarray(payload["values"], dtype=np.float64).reshape(
        payload["height"], payload["width"]
    )
