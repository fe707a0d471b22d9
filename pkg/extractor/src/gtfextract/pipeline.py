"""The extraction run: images and captions in, containers and index out.

Feature computation is parallel over items; writing stays single
threaded with one writer per container file. Results are assembled in
item order regardless of completion order, so a run's output bytes are
a pure function of the manifest, the weights, and the images. A failing
item (unreadable image, empty caption) is logged and skipped; the run
still writes every successful item and reports the failures.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from commonground.container import write_container
from commonground.dataset import write_index

from .manifest import Item, Manifest
from .text import SENTENCE_LAYERS, WORD_LAYERS, CharRecurrentEncoder, build_text_encoder
from .visual import VisualExtractor, layer_channels, load_image

log = logging.getLogger(__name__)


class ExtractionError(Exception):
    """A run-level failure: bad weights, no usable items, unwritable output."""


@dataclass(frozen=True)
class ItemFailure:
    item_id: str
    message: str


@dataclass
class ExtractionResult:
    index_path: str | None
    written: int
    failures: list[ItemFailure]

    @property
    def ok(self) -> bool:
        return not self.failures


@dataclass
class _ItemOutput:
    record: dict
    tensors: dict[str, np.ndarray]
    text_tensors: dict[str, np.ndarray]


def _process_item(
    item: Item,
    manifest: Manifest,
    visual: VisualExtractor,
    text: CharRecurrentEncoder,
) -> _ItemOutput:
    image = load_image(item.image, manifest.resize, manifest.mean, manifest.std)
    level_maps = visual.extract(image)

    tokens = item.caption.split()
    word_stacks, sentence = text.encode(tokens)

    visual_names = [f"{item.item_id}.vis.l{i}" for i in range(1, len(level_maps) + 1)]
    word_names = [f"{item.item_id}.word.{t}" for t in range(len(tokens))]
    sentence_name = f"{item.item_id}.sent"

    record = {
        "sample_id": item.item_id,
        "visual": visual_names,
        "tokens": tokens,
        "words": word_names,
        "sentence": sentence_name,
    }
    tensors = dict(zip(visual_names, level_maps))
    text_tensors = dict(zip(word_names, word_stacks))
    text_tensors[sentence_name] = sentence
    return _ItemOutput(record, tensors, text_tensors)


def extract(manifest: Manifest) -> ExtractionResult:
    """Run the full extraction and write containers plus index under
    ``manifest.out``. Raises :class:`ExtractionError` for run-level
    problems; per-item problems come back in the result's failures."""
    if not os.path.isfile(manifest.weights):
        raise ExtractionError(f"backbone weights not found: {manifest.weights!r}")
    if manifest.text_weights and not os.path.isfile(manifest.text_weights):
        raise ExtractionError(f"text weights not found: {manifest.text_weights!r}")

    visual = VisualExtractor(manifest.backbone, manifest.weights, manifest.layers)
    text = build_text_encoder(manifest.text_hidden, manifest.text_seed, manifest.text_weights)

    def run_one(item: Item) -> _ItemOutput | ItemFailure:
        try:
            return _process_item(item, manifest, visual, text)
        except (OSError, ValueError, RuntimeError) as exc:
            return ItemFailure(item.item_id, str(exc))

    with ThreadPoolExecutor(max_workers=manifest.workers) as pool:
        outcomes = list(pool.map(run_one, manifest.items))

    failures = [o for o in outcomes if isinstance(o, ItemFailure)]
    outputs = [o for o in outcomes if isinstance(o, _ItemOutput)]
    for failure in failures:
        log.error("item %s failed: %s", failure.item_id, failure.message)
    if not outputs:
        return ExtractionResult(index_path=None, written=0, failures=failures)

    visual_tensors: dict[str, np.ndarray] = {}
    text_tensors: dict[str, np.ndarray] = {}
    records = []
    for output in outputs:
        visual_tensors.update(output.tensors)
        text_tensors.update(output.text_tensors)
        records.append(output.record)

    os.makedirs(manifest.out, exist_ok=True)
    write_container(os.path.join(manifest.out, manifest.visual_container), visual_tensors)
    write_container(os.path.join(manifest.out, manifest.text_container), text_tensors)

    header = {
        "containers": [manifest.visual_container, manifest.text_container],
        "image_width": manifest.resize,
        "image_height": manifest.resize,
        "level_channels": list(layer_channels(manifest.backbone, manifest.layers)),
        "word_layers": WORD_LAYERS,
        "word_dim": 2 * manifest.text_hidden,
        "sentence_layers": SENTENCE_LAYERS,
        "sentence_dim": 2 * manifest.text_hidden,
        "extractor": {
            "backbone": manifest.backbone,
            "layers": list(manifest.layers),
            "text_model": manifest.text_model,
        },
    }
    index_path = os.path.join(manifest.out, manifest.index)
    write_index(index_path, header, records)
    log.info("wrote %d of %d items to %s", len(records), len(manifest.items), manifest.out)
    return ExtractionResult(index_path=index_path, written=len(records), failures=failures)
