import os
import subprocess
import sys

import pytest

from hgttrack.cli import main
from hgttrack.mot import parse_mot

SCENARIO = """seed = 4
duration = 6
width = 32
height = 32
target = class:1 kind:linear x:10 y:10 vx:1 vy:0.5 w:6 h:6
target = class:4 kind:linear x:24 y:22 vx:-0.5 vy:0 w:6 h:8
"""


@pytest.fixture
def scenario(tmp_path):
    p = tmp_path / "scene.txt"
    p.write_text(SCENARIO)
    return p


@pytest.fixture
def seq_dir(tmp_path, scenario):
    out = tmp_path / "seq"
    assert main(["synth", str(scenario), "--out", str(out)]) == 0
    return out


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def test_synth_is_deterministic(tmp_path, scenario):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", str(scenario), "--out", str(a)]) == 0
    assert main(["synth", str(scenario), "--out", str(b)]) == 0
    for name in ("frames_v.npy", "frames_t.npy", "gt_v.txt", "gt_t.txt", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert len(parse_mot(a / "gt_v.txt")) == 12


def test_usage_errors_exit_1(tmp_path, scenario, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 1
    assert main(["eval", str(scenario), str(scenario), "--iou", "1.5"]) == 1
    assert "--iou" in capsys.readouterr().err


def test_data_errors_exit_2(tmp_path, scenario):
    bad = tmp_path / "bad.txt"
    bad.write_text("duration = 5\nsize = 3\n")
    assert main(["synth", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["synth", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "o")]) == 2
    mot = tmp_path / "gt.txt"
    mot.write_text("1,1,0,0,0,4\n")
    assert main(["eval", str(mot), str(mot)]) == 2
    assert main(["track", str(tmp_path / "nothing"), "--oracle", "--out", str(tmp_path / "t")]) == 2


def test_eval_of_ground_truth_against_itself(tmp_path, seq_dir, capsys):
    out = tmp_path / "metrics"
    gt = seq_dir / "gt_v.txt"
    assert main(["eval", str(gt), str(gt), "--out", str(out)]) == 0
    kv = dict(line.split("=", 1) for line in _read(out / "metrics.kv").splitlines())
    assert float(kv["all.MOTA"]) == 1.0 and float(kv["all.IDF1"]) == 1.0 and float(kv["all.HOTA"]) == 1.0
    assert "HOTA" in capsys.readouterr().out


def test_oracle_track_then_eval(tmp_path, seq_dir):
    res = tmp_path / "res"
    assert main(["track", str(seq_dir), "--oracle", "--out", str(res)]) == 0
    assert {"results_v.txt", "results_t.txt", "events.log"} <= set(os.listdir(res))
    assert main(["eval", str(seq_dir), str(res), "--out", str(res)]) == 0
    kv = dict(line.split("=", 1) for line in _read(res / "metrics.kv").splitlines())
    assert float(kv["V.MOTA"]) == 1.0 and float(kv["T.IDs"]) == 0


def test_track_empty_sequence(tmp_path):
    scene = tmp_path / "empty.txt"
    scene.write_text("duration = 3\nwidth = 16\nheight = 16\n")
    assert main(["synth", str(scene), "--out", str(tmp_path / "seq")]) == 0
    assert main(["track", str(tmp_path / "seq"), "--oracle", "--out", str(tmp_path / "res")]) == 0
    assert _read(tmp_path / "res" / "results_v.txt") == ""
    assert main(["track", str(tmp_path / "seq"), "--out", str(tmp_path / "res2")]) == 0


def test_train_with_zero_lr_keeps_the_loss(tmp_path, seq_dir):
    out = tmp_path / "run"
    # a batch of 5 covers all frame pairs of the 6-frame sequence at every step
    assert main(["train", str(seq_dir), "--steps", "3", "--lr", "0", "--batch", "5", "--out", str(out)]) == 0
    values = [float(line.split()[1]) for line in _read(out / "loss_curve.txt").splitlines()]
    assert len(values) == 3 and values == pytest.approx([values[0]] * 3, rel=1e-12)
    summary = dict(line.split("=", 1) for line in _read(out / "train_summary.txt").splitlines())
    assert float(summary["ratio"]) == 1.0


def test_trained_checkpoint_drives_the_tracker(tmp_path, seq_dir):
    out = tmp_path / "run"
    assert main(["train", str(seq_dir), "--steps", "2", "--out", str(out)]) == 0
    res = tmp_path / "res"
    assert main(["track", str(seq_dir), "--checkpoint", str(out / "model.ckpt"), "--out", str(res)]) == 0
    parse_mot(res / "results_v.txt")
    # a checkpoint from a different architecture is a data error
    assert main(["track", str(seq_dir), "--checkpoint", str(out / "model.ckpt"), "--layers", "2",
                 "--out", str(res)]) == 2


def test_ablate_writes_one_row_per_variant_and_modality(tmp_path, seq_dir):
    out = tmp_path / "abl"
    assert main(["ablate", str(seq_dir), "--oracle", "--variants", "full,no-redet", "--out", str(out)]) == 0
    rows = [line.split()[0] for line in _read(out / "ablation.txt").splitlines()[2:]]
    assert rows == ["full/V", "full/T", "no-redet/V", "no-redet/T"]
    assert main(["ablate", str(seq_dir), "--oracle", "--variants", "nope", "--out", str(out)]) == 1


def test_module_entry_point(tmp_path, scenario):
    proc = subprocess.run([sys.executable, "-m", "hgttrack", "synth", str(scenario), "--out", str(tmp_path / "s")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "wrote 6 frames" in proc.stdout
