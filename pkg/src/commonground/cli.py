"""Command-line front end.

Every command resolves its settings the same way: built-in defaults,
then a ``--config`` file of ``key = value`` lines, then repeated
``--set key=value`` flags, then the dedicated switches.  Commands that
produce artifacts write them under ``--out`` together with a
``config.resolved`` snapshot of the exact settings used.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .autodiff import ShapeError
from .config import (
    ConfigError,
    TrainConfig,
    coerce_entries,
    config_lines,
    load_config_file,
    parse_assignment,
    train_config_from_entries,
)
from .container import ContainerError, MAGIC, container_summary
from .dataset import DatasetError, load_dataset
from .evaluation import evaluate, export_heatmap_json, export_heatmap_pgm, upsample_heatmap
from .synthetic import SyntheticSpec, generate, spec_from_config
from .trainer import build_model, load_checkpoint, run_ablation, save_checkpoint, train

KNOWN_ERRORS = (
    ConfigError,
    ContainerError,
    DatasetError,
    ShapeError,
    ValueError,
    KeyError,
    OSError,
)


def _add_common_flags(parser: argparse.ArgumentParser, model_flags: bool = True) -> None:
    parser.add_argument("--config", help="key=value settings file")
    parser.add_argument("--out", help="output directory for artifacts")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument(
        "--set",
        dest="assignments",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one setting (repeatable)",
    )
    if model_flags:
        parser.add_argument(
            "--softmax-ablation",
            action="store_true",
            default=None,
            help="replace the rectifier attention gate with a per-level softmax over cells",
        )
        parser.add_argument(
            "--levels",
            choices=("multi", "middle", "last"),
            default=None,
            help="restrict scoring to one feature level",
        )
        parser.add_argument(
            "--linear-text", action="store_true", default=None,
            help="single linear layer for the text mappings",
        )
        parser.add_argument(
            "--linear-visual", action="store_true", default=None,
            help="single linear layer for the visual mappings",
        )
        parser.add_argument(
            "--eq6b-normalized", action="store_true", default=None,
            help="unit-normalize the sentence-path attended features",
        )


def _gather_entries(args, extra_config: str | None = None) -> dict:
    entries: dict = {}
    if extra_config and os.path.exists(extra_config):
        entries.update(load_config_file(extra_config))
    if args.config:
        entries.update(load_config_file(args.config))
    for assignment in args.assignments:
        key, value = parse_assignment(assignment)
        entries[key] = value
    if args.seed is not None:
        entries["seed"] = args.seed
    flag_map = {
        "softmax_ablation": "softmax_attention",
        "levels": "levels",
        "linear_text": "linear_text",
        "linear_visual": "linear_visual",
        "eq6b_normalized": "eq6b_normalized",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            entries[key] = value
    return entries


def _pop_local(entries: dict, keys: dict) -> dict:
    """Extract command-local keys (with defaults) out of the entry map."""
    out = {}
    for key, default in keys.items():
        out[key] = entries.pop(key, default)
    return out


def _require_out(args) -> str:
    if not args.out:
        raise ConfigError("this command requires --out")
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_snapshot(out_dir: str, text: str) -> None:
    path = os.path.join(out_dir, "config.resolved")
    tmp = f"{path}.partial"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _spec_lines(spec: SyntheticSpec) -> str:
    pairs = []
    for name in sorted(SyntheticSpec.__dataclass_fields__):
        value = getattr(spec, name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        pairs.append(f"{name} = {value}")
    return "\n".join(pairs) + "\n"


def cmd_gen_synthetic(args) -> int:
    out = _require_out(args)
    entries = _gather_entries(args)
    spec = spec_from_config(coerce_entries(entries, SyntheticSpec))
    index_path = generate(spec, out)
    _write_snapshot(out, _spec_lines(spec))
    print(f"wrote {index_path} ({spec.samples} samples)")
    return 0


def _load_config_and_dataset(args, dataset_arg: str | None, checkpoint: str | None = None):
    sidecar = None
    if checkpoint:
        candidate = os.path.join(os.path.dirname(os.path.abspath(checkpoint)), "config.resolved")
        if os.path.exists(candidate):
            sidecar = candidate
    entries = _gather_entries(args, extra_config=sidecar)
    if dataset_arg:
        entries["dataset"] = dataset_arg
    return entries


def cmd_train(args) -> int:
    out = _require_out(args)
    entries = _load_config_and_dataset(args, args.dataset)
    config = train_config_from_entries(entries)
    if not config.dataset:
        raise ConfigError("train needs a dataset index (positional or dataset=PATH)")
    dataset = load_dataset(config.dataset)
    _write_snapshot(out, config_lines(config))
    result = train(dataset, config, metrics_path=os.path.join(out, "metrics.jsonl"))
    checkpoint = os.path.join(out, "model.gtf")
    save_checkpoint(checkpoint, result.model)
    final = result.history[-1]["total_loss"] if result.history else float("nan")
    print(f"trained {result.steps} steps; final loss {final:.4f}; checkpoint {checkpoint}")
    return 0


def _restore_model(config: TrainConfig, dataset, checkpoint: str):
    model = build_model(dataset, config)
    load_checkpoint(checkpoint, model)
    return model


def cmd_eval(args) -> int:
    entries = _load_config_and_dataset(args, args.dataset, args.checkpoint)
    local = _pop_local(entries, {"mode": "word"})
    config = train_config_from_entries(entries)
    dataset = load_dataset(config.dataset)
    model = _restore_model(config, dataset, args.checkpoint)
    report = evaluate(dataset, model, mode=str(local["mode"]))
    if args.out:
        out = _require_out(args)
        _write_snapshot(out, config_lines(config))
        report.write(os.path.join(out, "report.jsonl"))
    print(json.dumps(report.summary(), sort_keys=True))
    return 0


def cmd_ground(args) -> int:
    out = _require_out(args)
    entries = _load_config_and_dataset(args, args.dataset, args.checkpoint)
    local = _pop_local(entries, {"sample": None, "query": "0", "mode": "word"})
    if local["sample"] is None:
        raise ConfigError("ground needs sample=SAMPLE_ID")
    config = train_config_from_entries(entries)
    dataset = load_dataset(config.dataset)
    model = _restore_model(config, dataset, args.checkpoint)

    sample = dataset[dataset.index_of(str(local["sample"]))]
    qi = int(local["query"])
    if not 0 <= qi < len(sample.queries):
        raise ConfigError(
            f"sample {sample.sample_id!r} has {len(sample.queries)} queries, asked for {qi}"
        )
    query = sample.queries[qi]
    image_vecs = model.embed_image(sample.visual)
    if str(local["mode"]) == "sentence":
        if query.sentence_dirs is None:
            raise ConfigError("query has no sentence tensors; use mode=word")
        pert = model.sentence_path(image_vecs, model.embed_sentence(query.sentence_dirs))
        cells = pert.heatmaps.data[:, pert.selected_level]
        level = model.report_level(pert.selected_level)
    else:
        from .attention import compose_query_heatmap

        words = model.embed_words(sample.word_stack)
        maps, pert = model.word_path(image_vecs, words)
        cells, active = compose_query_heatmap(maps.data, pert, query.token_indices)
        level = model.report_level(active)

    heatmap = upsample_heatmap(cells, model.grid_size, dataset.image_width, dataset.image_height)
    meta = {
        "sample_id": sample.sample_id,
        "query_index": qi,
        "level": level,
        "tokens": [sample.tokens[t] for t in query.token_indices],
    }
    export_heatmap_pgm(heatmap, os.path.join(out, "heatmap.pgm"))
    export_heatmap_json(heatmap, os.path.join(out, "heatmap.json"), meta=meta)
    _write_snapshot(out, config_lines(config))
    row, col = divmod(int(heatmap.argmax()), heatmap.shape[1])
    print(json.dumps({**meta, "point": [row, col]}, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    out = _require_out(args)
    entries = _load_config_and_dataset(args, args.dataset)
    grid_axes = {
        key[len("sweep_") :]: str(entries.pop(key)).split("|")
        for key in sorted(entries)
        if key.startswith("sweep_")
    }
    local = _pop_local(entries, {"mode": "word"})
    config = train_config_from_entries(entries)
    dataset = load_dataset(config.dataset)

    rows: list[dict] = [{}]
    for key, options in sorted(grid_axes.items()):
        rows = [
            {**row, key: value}
            for row in rows
            for value in (coerce_entries({key: o}, TrainConfig)[key] for o in options)
        ]
    results = run_ablation(dataset, rows, config, eval_mode=str(local["mode"]))

    _write_snapshot(out, config_lines(config))
    table = os.path.join(out, "ablation.jsonl")
    tmp = f"{table}.partial"
    with open(tmp, "w", encoding="utf-8") as fh:
        for row in results:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    os.replace(tmp, table)
    for row in results:
        print(json.dumps(row, sort_keys=True))
    return 0


def cmd_inspect(args) -> int:
    path = args.path
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        for entry in container_summary(path):
            print(f"{entry['name']}  {entry['dtype']}  {entry['shape']}")
        return 0
    dataset = load_dataset(path)
    print(json.dumps({"samples": len(dataset), **dataset.header}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commonground",
        description="weakly-supervised phrase grounding on pre-extracted features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a planted synthetic corpus")
    _add_common_flags(p, model_flags=False)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train a grounding model")
    p.add_argument("dataset", nargs="?", help="dataset index path")
    _add_common_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the pointing evaluation")
    p.add_argument("dataset", help="dataset index path")
    p.add_argument("checkpoint", help="trained model container")
    _add_common_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ground", help="export one query's heatmap")
    p.add_argument("dataset", help="dataset index path")
    p.add_argument("checkpoint", help="trained model container")
    _add_common_flags(p)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("ablate", help="train a grid of model variants and rank them")
    p.add_argument("dataset", nargs="?", help="dataset index path")
    _add_common_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect", help="summarize a container or dataset index")
    p.add_argument("path", help="container (.gtf) or index (.jsonl) file")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KNOWN_ERRORS as exc:
        message = exc.args[0] if exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
