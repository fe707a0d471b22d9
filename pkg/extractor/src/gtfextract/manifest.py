"""Extraction manifests.

A manifest is a plain-text file in the flat ``key = value`` dialect the
engine uses for its configs: one assignment per line, ``#`` comments,
blank lines ignored. Items to process are numbered assignments:

    item.0.image   = photos/dog.jpg
    item.0.caption = a dog on the lawn
    item.0.id      = dog-lawn        # optional

Relative paths (weights, output directory, item images) resolve against
the directory holding the manifest file.
"""

from __future__ import annotations

import dataclasses
import os
import re
import typing
from dataclasses import dataclass

from .visual import BACKBONES


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Item:
    item_id: str
    image: str
    caption: str


@dataclass(frozen=True)
class Manifest:
    """Everything one extraction run needs.

    ``weights`` must name a local file holding the backbone parameters;
    the tool never downloads. ``layers`` picks the feature levels, in
    order; its length is the level count the index will declare.
    """

    weights: str = ""
    out: str = ""
    backbone: str = "vgg16"
    layers: tuple[str, ...] = ("conv4_1", "conv4_3", "conv5_1", "conv5_3")
    text_model: str = "charlstm"
    text_weights: str = ""
    text_seed: int = 0
    text_hidden: int = 32
    resize: int = 224
    mean: tuple[float, ...] = (0.485, 0.456, 0.406)
    std: tuple[float, ...] = (0.229, 0.224, 0.225)
    visual_container: str = "visual.gtf"
    text_container: str = "text.gtf"
    index: str = "index.jsonl"
    workers: int = 1
    items: tuple[Item, ...] = ()

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ManifestError(
                f"unknown backbone {self.backbone!r}; supported: {', '.join(sorted(BACKBONES))}"
            )
        known = BACKBONES[self.backbone]
        if not self.layers:
            raise ManifestError("layers must name at least one feature level")
        for name in self.layers:
            if name not in known:
                raise ManifestError(
                    f"backbone {self.backbone!r} has no layer {name!r}; "
                    f"supported: {', '.join(known)}"
                )
        if self.text_model != "charlstm":
            raise ManifestError(f"unknown text_model {self.text_model!r}; supported: charlstm")
        if self.resize < 32:
            raise ManifestError("resize must be at least 32 pixels")
        if self.text_hidden < 1 or self.workers < 1:
            raise ManifestError("text_hidden and workers must be positive")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ManifestError("mean and std must each hold three channel values")
        if any(s <= 0 for s in self.std):
            raise ManifestError("std values must be positive")
        if not self.weights:
            raise ManifestError("weights is required (path to local backbone parameters)")
        if not self.out:
            raise ManifestError("out is required (output directory)")
        if not self.items:
            raise ManifestError("no items: add item.N.image / item.N.caption entries")
        seen = set()
        for item in self.items:
            if item.item_id in seen:
                raise ManifestError(f"duplicate item id {item.item_id!r}")
            seen.add(item.item_id)
            if not item.caption.split():
                raise ManifestError(f"item {item.item_id!r}: caption has no tokens")


_ITEM_KEY = re.compile(r"^item\.(\d+)\.(image|caption|id)$")


def parse_assignment(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ManifestError(f"expected key=value, got {text!r}")
    key, _, value = text.partition("=")
    key, value = key.strip(), value.strip()
    if not key:
        raise ManifestError(f"expected key=value, got {text!r}")
    return key, value


def _coerce(name: str, annotation, raw: str):
    if annotation is int:
        try:
            return int(raw, 10)
        except ValueError as exc:
            raise ManifestError(f"{name}: expected an integer, got {raw!r}") from exc
    if annotation is str:
        return raw
    if annotation == tuple[str, ...]:
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    if annotation == tuple[float, ...]:
        try:
            return tuple(float(part) for part in raw.split(","))
        except ValueError as exc:
            raise ManifestError(f"{name}: expected comma-separated numbers, got {raw!r}") from exc
    raise ManifestError(f"{name}: unsupported manifest type {annotation}")


def _build_items(entries: dict[str, str], base_dir: str) -> tuple[Item, ...]:
    per_number: dict[int, dict[str, str]] = {}
    for key in list(entries):
        match = _ITEM_KEY.match(key)
        if match is None:
            continue
        number, field = int(match.group(1)), match.group(2)
        per_number.setdefault(number, {})[field] = entries.pop(key)

    items = []
    for number in sorted(per_number):
        fields = per_number[number]
        for required in ("image", "caption"):
            if required not in fields:
                raise ManifestError(f"item.{number} is missing item.{number}.{required}")
        items.append(
            Item(
                item_id=fields.get("id", f"item{number:04d}"),
                image=os.path.join(base_dir, fields["image"]),
                caption=fields["caption"],
            )
        )
    return tuple(items)


_PATH_FIELDS = ("weights", "text_weights", "out")


def manifest_from_entries(entries: dict[str, str], base_dir: str = ".") -> Manifest:
    """Build a validated manifest from raw string assignments."""
    entries = dict(entries)
    items = _build_items(entries, base_dir)

    hints = typing.get_type_hints(Manifest)
    fields = {f.name: hints[f.name] for f in dataclasses.fields(Manifest) if f.name != "items"}
    resolved = {}
    for key, raw in entries.items():
        if key not in fields:
            raise ManifestError(
                f"unknown manifest key {key!r}; valid keys: "
                f"{', '.join(sorted(fields))}, item.N.image, item.N.caption, item.N.id"
            )
        value = _coerce(key, fields[key], raw)
        if key in _PATH_FIELDS and value:
            value = os.path.join(base_dir, value)
        resolved[key] = value
    return Manifest(items=items, **resolved)


def load_manifest(path: str, overrides: list[str] | tuple[str, ...] = ()) -> Manifest:
    """Read a manifest file; ``overrides`` are extra ``key=value`` strings
    that win over file entries (paths in them resolve the same way)."""
    entries: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                try:
                    key, value = parse_assignment(stripped)
                except ManifestError as exc:
                    raise ManifestError(f"{path}:{lineno}: {exc}") from exc
                entries[key] = value
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path!r}: {exc}") from exc
    for text in overrides:
        key, value = parse_assignment(text)
        entries[key] = value
    return manifest_from_entries(entries, base_dir=os.path.dirname(os.path.abspath(path)))
