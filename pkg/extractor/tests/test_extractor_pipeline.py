import os
from pathlib import Path

import numpy as np
import pytest

from commonground.container import read_container
from commonground.dataset import load_dataset

from gtfextract.cli import main
from gtfextract.manifest import load_manifest
from gtfextract.pipeline import ExtractionError, extract
from gtfextract.text import build_text_encoder
from gtfextract.visual import VisualExtractor, load_image

CAPTION = "two dogs chase one ball"


def write_manifest(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture()
def manifest_file(tmp_path, weights_file, image_file):
    return write_manifest(
        tmp_path / "extract.cfg",
        [
            f"weights = {weights_file}",
            f"out = {tmp_path / 'out'}",
            "resize = 64",
            f"item.0.image = {image_file}",
            f"item.0.caption = {CAPTION}",
            "item.0.id = scene",
        ],
    )


def test_output_loads_in_engine_with_correct_extents(manifest_file):
    manifest = load_manifest(manifest_file)
    result = extract(manifest)
    assert result.ok and result.written == 1

    dataset = load_dataset(result.index_path)
    assert len(dataset) == 1
    assert dataset.level_channels == (512, 512, 512, 512)
    assert dataset.image_width == 64 and dataset.image_height == 64

    sample = dataset[0]
    assert sample.sample_id == "scene"
    assert sample.tokens == CAPTION.split()
    # Four levels at the published VGG16 widths; stage four runs at an
    # eighth of the input resolution, stage five at a sixteenth.
    shapes = [v.shape for v in sample.visual]
    assert shapes == [(8, 8, 512), (8, 8, 512), (4, 4, 512), (4, 4, 512)]
    assert sample.word_stack.shape == (5, 3, 64)
    assert sample.sentence_dirs.shape == (2, 64)


def test_written_tensors_read_back_bit_exactly(manifest_file):
    manifest = load_manifest(manifest_file)
    extract(manifest)

    visual = VisualExtractor(manifest.backbone, manifest.weights, manifest.layers)
    image = load_image(manifest.items[0].image, manifest.resize, manifest.mean, manifest.std)
    expected_maps = visual.extract(image)
    encoder = build_text_encoder(manifest.text_hidden, manifest.text_seed)
    expected_words, expected_sentence = encoder.encode(CAPTION.split())

    stored = read_container(os.path.join(manifest.out, "visual.gtf"))
    for level, expected in enumerate(expected_maps, start=1):
        assert np.array_equal(stored[f"scene.vis.l{level}"], expected)
    stored = read_container(os.path.join(manifest.out, "text.gtf"))
    for t, expected in enumerate(expected_words):
        assert np.array_equal(stored[f"scene.word.{t}"], expected)
    assert np.array_equal(stored["scene.sent"], expected_sentence)


def test_repeat_runs_are_byte_identical(manifest_file, tmp_path):
    first = extract(load_manifest(manifest_file))
    second = extract(load_manifest(manifest_file, [f"out={tmp_path / 'again'}"]))
    for name in ("visual.gtf", "text.gtf", "index.jsonl"):
        a = Path(first.index_path).with_name(name).read_bytes()
        b = Path(second.index_path).with_name(name).read_bytes()
        assert a == b


def test_parallel_workers_match_single_threaded_output(
    tmp_path, weights_file, image_file, second_image_file
):
    lines = [
        f"weights = {weights_file}",
        "resize = 64",
        f"item.0.image = {image_file}",
        "item.0.caption = a crowded beach",
        f"item.1.image = {second_image_file}",
        "item.1.caption = one empty pier",
    ]
    serial_cfg = write_manifest(
        tmp_path / "serial.cfg", lines + [f"out = {tmp_path / 'serial'}"]
    )
    threaded_cfg = write_manifest(
        tmp_path / "threaded.cfg",
        lines + [f"out = {tmp_path / 'threaded'}", "workers = 3"],
    )
    serial = extract(load_manifest(serial_cfg))
    threaded = extract(load_manifest(threaded_cfg))
    assert serial.written == threaded.written == 2
    for name in ("visual.gtf", "text.gtf"):
        assert (tmp_path / "serial" / name).read_bytes() == (
            tmp_path / "threaded" / name
        ).read_bytes()


def test_failing_item_is_reported_and_good_items_still_written(
    tmp_path, weights_file, image_file, caplog
):
    broken = tmp_path / "broken.png"
    broken.write_text("not an image")
    cfg = write_manifest(
        tmp_path / "extract.cfg",
        [
            f"weights = {weights_file}",
            f"out = {tmp_path / 'out'}",
            "resize = 64",
            f"item.0.image = {broken}",
            "item.0.caption = will fail",
            "item.0.id = bad",
            f"item.1.image = {image_file}",
            "item.1.caption = still fine",
            "item.1.id = good",
        ],
    )
    result = extract(load_manifest(cfg))
    assert not result.ok
    assert [f.item_id for f in result.failures] == ["bad"]
    assert any("bad" in rec.getMessage() for rec in caplog.records)

    dataset = load_dataset(result.index_path)
    assert dataset.sample_ids() == ["good"]


def test_missing_weights_fail_before_any_item(tmp_path, image_file):
    cfg = write_manifest(
        tmp_path / "extract.cfg",
        [
            f"weights = {tmp_path / 'absent.pth'}",
            f"out = {tmp_path / 'out'}",
            f"item.0.image = {image_file}",
            "item.0.caption = a dog",
        ],
    )
    with pytest.raises(ExtractionError, match="weights not found"):
        extract(load_manifest(cfg))


def test_cli_round_trip_and_exit_codes(manifest_file, tmp_path, capsys):
    assert main([manifest_file, "--quiet"]) == 0
    out = capsys.readouterr().out
    assert "wrote 1 items" in out

    missing = write_manifest(
        tmp_path / "bad.cfg",
        [
            f"weights = {tmp_path / 'absent.pth'}",
            f"out = {tmp_path / 'out2'}",
            "item.0.image = nothing.png",
            "item.0.caption = a dog",
        ],
    )
    assert main([missing, "--quiet"]) == 1
    assert "weights not found" in capsys.readouterr().err
