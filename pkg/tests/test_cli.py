import os

import compress_json
import pandas as pd
from spatial_attention_pyramid import Checkpoint, RunConfig
from spatial_attention_pyramid.cli import load_model, main
from .toy import TOY_CONFIG


def write_config(tmp_path) -> str:
    path = str(tmp_path / "toy.txt")
    with open(path, "w") as f:
        f.write(TOY_CONFIG)
    return path


def test_full_workflow(tmp_path, capsys):
    config = write_config(tmp_path)
    data = str(tmp_path / "data")
    run = str(tmp_path / "run")
    assert main(["--quiet", "gen-data", "--out", data, "--count", "3", "--test-count", "2", "--config", config]) == 0
    assert sorted(os.listdir(data)) == ["metadata.json", "test", "train"]
    assert compress_json.load(os.path.join(data, "metadata.json"))["count"] == 3

    assert main(["--quiet", "train", "--config", config, "--data", data, "--out", run, "--lambda", "0.5"]) == 0
    metrics = pd.read_csv(os.path.join(run, "metrics.csv"))
    assert list(metrics.columns) == ["iter", "task_loss", "adv_loss", "disc_acc", "lr"]
    assert metrics.iter.tolist() == [2, 4]
    checkpoint = Checkpoint.load(os.path.join(run, "checkpoint.sapc"))
    assert checkpoint.iteration == 4
    assert RunConfig.from_text(checkpoint.config).train.lam == 0.5
    with open(os.path.join(run, "config.txt")) as f:
        assert f.read() == checkpoint.config
    assert load_model(checkpoint).config.image_size == 16

    assert main(["--quiet", "eval", "--ckpt", os.path.join(run, "checkpoint.sapc"), "--data", data]) == 0
    assert "mIoU" in capsys.readouterr().out
    with open(os.path.join(run, "report_target.txt")) as f:
        report = f.read()
    assert report.startswith("split=target\niteration=4\n")
    assert "miou=" in report
    assert "disc_acc" in compress_json.load(os.path.join(run, "report_target.json"))

    masks = str(tmp_path / "masks")
    image = os.path.join(data, "test", "target_00002.ppm")
    assert main(["--quiet", "export-attention", "--ckpt", os.path.join(run, "checkpoint.sapc"), "--image", image, "--out", masks]) == 0
    assert sorted(os.listdir(masks)) == ["level_01_k1.pgm", "level_02_k3.pgm", "level_03_k5.pgm", "weights.txt"]

    # Resuming a finished run with the same settings keeps the checkpoint.
    before = checkpoint.to_bytes()
    assert main(["--quiet", "train", "--config", config, "--data", data, "--out", run, "--lambda", "0.5", "--resume"]) == 0
    assert Checkpoint.load(os.path.join(run, "checkpoint.sapc")).to_bytes() == before
    assert main(["--quiet", "train", "--config", config, "--data", data, "--out", run, "--resume"]) == 1


def test_exit_codes(tmp_path):
    config = write_config(tmp_path)
    assert main(["unknown-command"]) == 1
    assert main(["gen-data", "--out", str(tmp_path), "--severity", "0.1"]) == 1
    assert main(["--quiet", "train", "--config", config, "--data", str(tmp_path), "--out", str(tmp_path / "r"), "--ablation", "cb"]) == 1
    assert main(["--quiet", "train", "--config", config, "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "r")]) == 2
    assert main(["--quiet", "eval", "--ckpt", str(tmp_path / "missing.sapc"), "--data", str(tmp_path)]) == 2
    assert main(["--quiet", "train", "--data", str(tmp_path), "--out", str(tmp_path / "r"), "--set", "train.lr"]) == 1


def test_header_only_image_is_a_data_error(tmp_path):
    config = write_config(tmp_path)
    data = tmp_path / "data"
    data.mkdir()
    (data / "x.ppm").write_bytes(b"P6\n2 2\n255")
    (data / "manifest.txt").write_text("x.ppm - 0\n")
    assert main(["--quiet", "train", "--config", config, "--data", str(data), "--out", str(tmp_path / "r")]) == 2


def test_experiment_command(tmp_path, capsys):
    config = write_config(tmp_path)
    data = str(tmp_path / "data")
    out = str(tmp_path / "experiment")
    assert main(["--quiet", "gen-data", "--out", data, "--count", "3", "--test-count", "2", "--config", config]) == 0
    capsys.readouterr()
    assert main([
        "--quiet", "experiment", "--config", config, "--data", data, "--out", out,
        "--seeds", "0,1", "--variants", "source_only,adapted", "--set", "train.lam=0.5"
    ]) == 0
    results = pd.read_csv(os.path.join(out, "results.csv"))
    assert results[["variant", "seed"]].values.tolist() == [
        ["source_only", 0], ["adapted", 0], ["source_only", 1], ["adapted", 1]
    ]
    summary = pd.read_csv(os.path.join(out, "summary.csv"), index_col="variant")
    assert summary.loc["source_only", "gain_mean"] == 0
    assert summary.runs.tolist() == [2, 2]
    assert "gain_mean" in capsys.readouterr().out
    assert RunConfig.load(os.path.join(out, "config.txt")).train.lam == 0.5
    assert main(["--quiet", "experiment", "--config", config, "--data", data, "--out", out, "--variants", "no_cb"]) == 1
    assert main(["--quiet", "experiment", "--config", config, "--data", data, "--out", out, "--seeds", "a,b"]) == 1
