"""End-to-end command-line flows on a small corpus."""

import json

import numpy as np
import pytest

from commonground.cli import main
from commonground.evaluation import load_heatmap_json

GEN_ARGS = [
    "--set", "concepts=4",
    "--set", "grid=4",
    "--set", "levels=2",
    "--set", "samples=16",
    "--set", "sigma=0.05",
]

TRAIN_SETS = [
    "--set", "batch_size=4",
    "--set", "epochs=2",
    "--set", "common_dim=16",
    "--set", "grid_size=4",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliwork")
    data = root / "data"
    run = root / "run"
    assert main(["gen-synthetic", "--out", str(data), "--seed", "3", *GEN_ARGS]) == 0
    index = str(data / "index.jsonl")
    assert main(["train", index, "--out", str(run), "--seed", "1", *TRAIN_SETS]) == 0
    return root, index, str(run / "model.gtf")


def test_gen_writes_expected_artifacts(workspace):
    root, index, _ = workspace
    data = root / "data"
    assert (data / "tensors.gtf").exists()
    assert (data / "config.resolved").exists()
    snapshot = (data / "config.resolved").read_text()
    assert "concepts = 4" in snapshot
    assert "seed = 3" in snapshot


def test_train_writes_expected_artifacts(workspace):
    root, _, checkpoint = workspace
    run = root / "run"
    assert (run / "model.gtf").exists()
    assert (run / "metrics.jsonl").exists()
    snapshot = (run / "config.resolved").read_text()
    assert "batch_size = 4" in snapshot
    assert "seed = 1" in snapshot
    lines = (run / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2 * (16 // 4)
    assert {"step", "lr", "total_loss"} <= set(json.loads(lines[0]))


def test_eval_command(workspace, tmp_path, capsys):
    _, index, checkpoint = workspace
    out = tmp_path / "eval"
    assert main(["eval", index, checkpoint, "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["kind"] == "summary"
    assert summary["hits"] + summary["misses"] == summary["queries"]
    report_lines = (out / "report.jsonl").read_text().splitlines()
    assert len(report_lines) == summary["queries"] + 1


def test_eval_picks_up_sidecar_config(workspace, capsys):
    # No --set flags here: model shape comes from the checkpoint sidecar.
    _, index, checkpoint = workspace
    assert main(["eval", index, checkpoint]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["queries"] > 0


def test_eval_sentence_mode(workspace, capsys):
    _, index, checkpoint = workspace
    assert main(["eval", index, checkpoint, "--set", "mode=sentence"]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["mode"] == "sentence"


def test_ground_command(workspace, tmp_path, capsys):
    _, index, checkpoint = workspace
    out = tmp_path / "ground"
    assert (
        main(
            [
                "ground", index, checkpoint,
                "--out", str(out),
                "--set", "sample=s00000",
                "--set", "query=0",
            ]
        )
        == 0
    )
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert result["sample_id"] == "s00000"
    assert len(result["point"]) == 2
    heatmap = load_heatmap_json(str(out / "heatmap.json"))
    assert heatmap.shape == (64, 64)
    pgm = (out / "heatmap.pgm").read_bytes()
    assert pgm.startswith(b"P5\n64 64\n255\n")


def test_ground_rejects_missing_sample(workspace, tmp_path, capsys):
    _, index, checkpoint = workspace
    code = main(
        ["ground", index, checkpoint, "--out", str(tmp_path / "g"), "--set", "sample=nope"]
    )
    assert code == 1
    assert "nope" in capsys.readouterr().err


def test_ablate_command(workspace, tmp_path, capsys):
    _, index, _ = workspace
    out = tmp_path / "ablate"
    assert (
        main(
            [
                "ablate", index,
                "--out", str(out),
                "--set", "sweep_softmax_attention=false|true",
                "--set", "batch_size=4",
                "--set", "common_dim=16",
                "--set", "grid_size=4",
            ]
        )
        == 0
    )
    rows = [json.loads(line) for line in (out / "ablation.jsonl").read_text().splitlines()]
    assert len(rows) == 2
    assert {r["softmax_attention"] for r in rows} == {False, True}
    accs = [r["pointing_accuracy"] for r in rows]
    assert accs == sorted(accs, reverse=True)


def test_inspect_container_and_index(workspace, capsys):
    root, index, checkpoint = workspace
    assert main(["inspect", checkpoint]) == 0
    out = capsys.readouterr().out
    assert "vis.l1.fc1.w" in out
    assert main(["inspect", index]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["samples"] == 16


def test_unknown_set_key_fails_cleanly(workspace, tmp_path, capsys):
    _, index, _ = workspace
    code = main(
        ["train", index, "--out", str(tmp_path / "x"), "--set", "bogus_key=1", *TRAIN_SETS]
    )
    assert code == 1
    assert "bogus_key" in capsys.readouterr().err


def test_missing_out_fails_cleanly(workspace, capsys):
    _, index, _ = workspace
    assert main(["train", index, *TRAIN_SETS]) == 1
    assert "--out" in capsys.readouterr().err


def test_config_file_and_set_precedence(workspace, tmp_path):
    _, index, _ = workspace
    cfg = tmp_path / "base.cfg"
    cfg.write_text("batch_size = 4\nepochs = 1\ncommon_dim = 16\ngrid_size = 4\n")
    out = tmp_path / "run2"
    assert (
        main(["train", index, "--config", str(cfg), "--set", "epochs=2", "--out", str(out)]) == 0
    )
    snapshot = (out / "config.resolved").read_text()
    assert "epochs = 2" in snapshot
    assert "batch_size = 4" in snapshot


def test_train_is_reproducible_binary(workspace, tmp_path):
    _, index, _ = workspace
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["train", index, "--out", str(out), "--seed", "9", *TRAIN_SETS]) == 0
    assert (a / "model.gtf").read_bytes() == (b / "model.gtf").read_bytes()
    assert (a / "metrics.jsonl").read_bytes() == (b / "metrics.jsonl").read_bytes()
