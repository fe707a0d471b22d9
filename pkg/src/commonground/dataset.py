"""Dataset index and loader.

A dataset on disk is a JSONL index file plus one or more GTF1 tensor
containers.  The first index line is a header record naming the
containers (paths relative to the index) and the raw feature extents;
every following line is one sample record referencing tensors by name:

    {"kind": "header", "containers": [...], "image_width": ..,
     "image_height": .., "level_channels": [..], "word_layers": ..,
     "word_dim": .., "sentence_layers": .., "sentence_dim": ..}

    {"kind": "sample", "sample_id": "..", "image_id": "..",
     "visual": [name per level], "tokens": ["word", ..],
     "words": [name per token], "sentence": name,
     "queries": [{"tokens": [..], "boxes": [[x0, y0, x1, y1], ..],
                  "category": "..", "sentence": name-or-null}]}

Boxes are half-open pixel rectangles.  Every tensor reference is
resolved and shape-checked at load time, so iteration cannot fail late.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .container import read_container
from .mapping import MappingDims


class DatasetError(Exception):
    """Malformed index or unresolved tensor reference."""


@dataclass(frozen=True)
class Box:
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"degenerate box {(self.x0, self.y0, self.x1, self.y1)}")

    def contains(self, col: float, row: float) -> bool:
        return self.x0 <= col < self.x1 and self.y0 <= row < self.y1

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass
class Query:
    token_indices: list[int]
    boxes: list[Box]
    category: str | None = None
    sentence_dirs: np.ndarray | None = None


@dataclass
class Sample:
    sample_id: str
    image_id: str
    visual: list[np.ndarray]
    tokens: list[str]
    word_stack: np.ndarray
    sentence_dirs: np.ndarray
    queries: list[Query] = field(default_factory=list)


_HEADER_KEYS = (
    "containers",
    "image_width",
    "image_height",
    "level_channels",
    "word_layers",
    "word_dim",
    "sentence_layers",
    "sentence_dim",
)


class Dataset:
    """Validated in-memory index over container-backed tensors."""

    def __init__(self, header: dict, records: list[dict], tensors: dict[str, np.ndarray]):
        self.header = header
        self._records = records
        self._tensors = tensors

    def __len__(self) -> int:
        return len(self._records)

    @property
    def image_width(self) -> int:
        return int(self.header["image_width"])

    @property
    def image_height(self) -> int:
        return int(self.header["image_height"])

    @property
    def level_channels(self) -> tuple[int, ...]:
        return tuple(self.header["level_channels"])

    def dims(self, common_dim: int) -> MappingDims:
        return MappingDims(
            level_channels=self.level_channels,
            word_layers=int(self.header["word_layers"]),
            word_dim=int(self.header["word_dim"]),
            sentence_layers=int(self.header["sentence_layers"]),
            sentence_dim=int(self.header["sentence_dim"]),
            common_dim=common_dim,
        )

    def sample_ids(self) -> list[str]:
        return [r["sample_id"] for r in self._records]

    def index_of(self, sample_id: str) -> int:
        for i, r in enumerate(self._records):
            if r["sample_id"] == sample_id:
                return i
        raise KeyError(f"no sample with id {sample_id!r}")

    def __getitem__(self, i: int) -> Sample:
        r = self._records[i]
        queries = []
        for q in r.get("queries", []):
            queries.append(
                Query(
                    token_indices=list(q["tokens"]),
                    boxes=[Box(*b) for b in q["boxes"]],
                    category=q.get("category"),
                    sentence_dirs=self._tensors[q["sentence"]] if q.get("sentence") else None,
                )
            )
        word_stack = np.stack([self._tensors[name] for name in r["words"]], axis=0)
        return Sample(
            sample_id=r["sample_id"],
            image_id=r.get("image_id", r["sample_id"]),
            visual=[self._tensors[name] for name in r["visual"]],
            tokens=list(r["tokens"]),
            word_stack=word_stack,
            sentence_dirs=self._tensors[r["sentence"]],
            queries=queries,
        )

    def indices(self, shuffle_seed: int | None = None) -> list[int]:
        order = list(range(len(self)))
        if shuffle_seed is not None:
            np.random.default_rng(shuffle_seed).shuffle(order)
        return order


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise DatasetError(message)


def _check_tensor(
    tensors: dict[str, np.ndarray], name, sample_id: str, shape: tuple, what: str
) -> None:
    _require(
        isinstance(name, str) and name in tensors,
        f"sample {sample_id!r}: {what} references missing tensor {name!r}",
    )
    got = tensors[name].shape
    _require(
        got == shape,
        f"sample {sample_id!r}: {what} tensor {name!r} has shape {got}, expected {shape}",
    )


def load_dataset(index_path: str) -> Dataset:
    """Parse, resolve, and shape-check a dataset index."""
    try:
        with open(index_path, "r", encoding="utf-8") as fh:
            lines = [line for line in fh.read().splitlines() if line.strip()]
    except OSError as exc:
        raise DatasetError(f"cannot read index {index_path!r}: {exc}") from exc
    _require(bool(lines), f"index {index_path!r} is empty")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetError(f"index {index_path!r}: header is not valid JSON: {exc}") from exc
    _require(header.get("kind") == "header", f"index {index_path!r}: first record must be the header")
    for key in _HEADER_KEYS:
        _require(key in header, f"index {index_path!r}: header is missing {key!r}")
    _require(header["image_width"] > 0 and header["image_height"] > 0, "image extents must be positive")
    _require(bool(header["containers"]), "header names no containers")

    base = os.path.dirname(os.path.abspath(index_path))
    tensors: dict[str, np.ndarray] = {}
    for rel in header["containers"]:
        path = os.path.join(base, rel)
        _require(os.path.exists(path), f"container {rel!r} not found next to index")
        for name, arr in read_container(path).items():
            _require(name not in tensors, f"tensor {name!r} appears in more than one container")
            tensors[name] = arr

    channels = tuple(header["level_channels"])
    k, e = int(header["word_layers"]), int(header["word_dim"])
    ks, s = int(header["sentence_layers"]), int(header["sentence_dim"])
    width, height = int(header["image_width"]), int(header["image_height"])

    records = []
    seen_ids = set()
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"index {index_path!r} line {lineno}: invalid JSON: {exc}") from exc
        _require(rec.get("kind") == "sample", f"line {lineno}: expected a sample record")
        sid = rec.get("sample_id")
        _require(isinstance(sid, str) and sid, f"line {lineno}: sample_id missing")
        _require(sid not in seen_ids, f"duplicate sample_id {sid!r}")
        seen_ids.add(sid)

        visual = rec.get("visual", [])
        _require(
            len(visual) == len(channels),
            f"sample {sid!r}: {len(visual)} visual tensors for {len(channels)} levels",
        )
        for name, c in zip(visual, channels):
            _require(name in tensors, f"sample {sid!r}: visual references missing tensor {name!r}")
            shape = tensors[name].shape
            _require(
                len(shape) == 3 and shape[2] == c,
                f"sample {sid!r}: visual tensor {name!r} has shape {shape}, "
                f"expected rank 3 with {c} channels",
            )

        tokens = rec.get("tokens", [])
        words = rec.get("words", [])
        _require(len(tokens) >= 1, f"sample {sid!r}: caption has no tokens")
        _require(
            len(words) == len(tokens),
            f"sample {sid!r}: {len(words)} word tensors for {len(tokens)} tokens",
        )
        for name in words:
            _check_tensor(tensors, name, sid, (k, e), "word")
        _check_tensor(tensors, rec.get("sentence"), sid, (ks, s), "sentence")

        for qi, q in enumerate(rec.get("queries", [])):
            for t in q.get("tokens", []):
                _require(
                    0 <= t < len(tokens),
                    f"sample {sid!r} query {qi}: token index {t} out of range",
                )
            _require(bool(q.get("boxes")), f"sample {sid!r} query {qi}: no boxes")
            for b in q["boxes"]:
                _require(
                    len(b) == 4 and 0 <= b[0] < b[2] <= width and 0 <= b[1] < b[3] <= height,
                    f"sample {sid!r} query {qi}: box {b} outside {width}x{height} image",
                )
            if q.get("sentence") is not None:
                _check_tensor(tensors, q["sentence"], sid, (ks, s), f"query {qi} sentence")
        records.append(rec)

    _require(bool(records), f"index {index_path!r} holds no samples")
    return Dataset(header, records, tensors)


def write_index(index_path: str, header: dict, sample_records: list[dict]) -> None:
    """Write the JSONL index atomically; the header gains ``kind`` tags."""
    head = {"kind": "header", **header}
    tmp = f"{index_path}.partial"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for rec in sample_records:
            fh.write(json.dumps({"kind": "sample", **rec}, sort_keys=True) + "\n")
    os.replace(tmp, index_path)
