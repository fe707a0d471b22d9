"""Training loop over the contrastive grounding objective."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from . import ops
from .attention import sentence_scores_batch, word_scores_batch
from .config import TrainConfig
from .container import read_container, write_container
from .dataset import Dataset
from .mapping import init_params
from .model import GroundingModel
from .objective import batch_loss
from .optim import Adam


@dataclass
class TrainResult:
    model: GroundingModel
    config: TrainConfig
    history: list[dict]
    steps: int


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Base rate halved once for every listed epoch at or before this one."""
    halvings = sum(1 for e in config.lr_halving_epochs if epoch >= e)
    return config.learning_rate * (0.5**halvings)


def build_model(dataset: Dataset, config: TrainConfig) -> GroundingModel:
    dims = dataset.dims(config.common_dim)
    params = init_params(
        config.seed,
        dims,
        linear_visual=config.linear_visual,
        linear_text=config.linear_text,
        dtype=np.float32 if config.dtype == "float32" else np.float64,
    )
    return GroundingModel(
        params=params,
        grid_size=config.grid_size,
        gamma1=config.gamma1,
        gamma2=config.gamma2,
        alpha=config.alpha,
        levels=config.levels,
        softmax_attention=config.softmax_attention,
        normalized_sentence_attention=config.eq6b_normalized,
    )


def train_step(model: GroundingModel, samples: list, config: TrainConfig):
    """Score every caption against every image of the batch and return
    the loss breakdown.  Raw sample arrays are never written to."""
    image_stack = ops.stack([model.embed_image(s.visual) for s in samples], axis=0)
    word_rows = []
    sentence_rows = []
    for s in samples:
        words = model.embed_words(s.word_stack)
        sentence = model.embed_sentence(s.sentence_dirs)
        word_rows.append(
            word_scores_batch(image_stack, words, config.gamma1, model.softmax_attention)
        )
        sentence_rows.append(
            sentence_scores_batch(
                image_stack,
                sentence,
                model.softmax_attention,
                model.normalized_sentence_attention,
            )
        )
    word_scores = ops.stack(word_rows, axis=0)
    sentence_scores = ops.stack(sentence_rows, axis=0)
    return batch_loss(
        word_scores, sentence_scores, config.gamma2, config.reg_value, model.params
    )


def train(dataset: Dataset, config: TrainConfig, metrics_path: str | None = None) -> TrainResult:
    """Train from scratch; deterministic for a fixed config and dataset."""
    if len(dataset) < config.batch_size:
        raise ValueError(
            f"dataset holds {len(dataset)} samples, fewer than batch_size {config.batch_size}"
        )
    model = build_model(dataset, config)
    optimizer = Adam(model.param_set, lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    steps_per_epoch = len(dataset) // config.batch_size

    history: list[dict] = []
    step = 0
    for epoch in range(config.epochs):
        rate = lr_at(epoch, config)
        for _ in range(steps_per_epoch):
            picked = rng.choice(len(dataset), size=config.batch_size, replace=False)
            samples = [dataset[int(i)] for i in picked]
            breakdown = train_step(model, samples, config)
            model.param_set.zero_grad()
            breakdown.total.backward()
            optimizer.step(lr=rate)
            step += 1
            record = {"step": step, "epoch": epoch, "lr": rate}
            record.update(breakdown.scalars())
            record["mean_term"] = (
                record["word_loss"] + record["sentence_loss"]
            ) / (4 * config.batch_size)
            history.append(record)

    if metrics_path is not None:
        tmp = f"{metrics_path}.partial"
        with open(tmp, "w", encoding="utf-8") as fh:
            for record in history:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        os.replace(tmp, metrics_path)
    return TrainResult(model=model, config=config, history=history, steps=step)


def save_checkpoint(path: str, model: GroundingModel) -> None:
    write_container(path, model.param_set.state_arrays())


def load_checkpoint(path: str, model: GroundingModel) -> None:
    model.param_set.load_state_arrays(read_container(path))


def run_ablation(
    dataset: Dataset, grid: list[dict], config: TrainConfig, eval_mode: str = "word"
) -> list[dict]:
    """Train and evaluate one model per configuration row.

    Every row trains with the short comparison schedule (10 epochs, no
    learning-rate halving) regardless of the base config; rows come back
    sorted by pointing accuracy, best first.
    """
    from .evaluation import evaluate

    if not grid:
        raise ValueError("ablation grid is empty")
    results = []
    for row in grid:
        overrides = {**row, "epochs": 10, "lr_halving_epochs": ()}
        row_config = replace(config, **overrides)
        result = train(dataset, row_config)
        report = evaluate(dataset, result.model, mode=eval_mode)
        results.append(
            {
                **row,
                "pointing_accuracy": report.pointing_accuracy,
                "attention_correctness": report.mean_correctness,
            }
        )
    results.sort(key=lambda r: r["pointing_accuracy"], reverse=True)
    return results
