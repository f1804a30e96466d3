import json
import subprocess
import sys

import numpy as np
import pytest

from lifelong_metric import LifelongMetricLearner, load_csv
from lifelong_metric.cli import main, read_config_file, ENGINE_OPTIONS

FAST = ["--d", "3", "--dict-steps", "2", "--iterations", "20", "--j-scales", "2,3", "--kind", "distance"]


@pytest.fixture
def synth(tmp_path):
    out = tmp_path / "synth"
    assert main(["synth-gen", "--seed", "7", "--num-tasks", "3", "--d-hat", "6", "--d-true", "2",
                 "--samples-per-class", "12", "-o", str(out)]) == 0
    return sorted(str(p) for p in out.glob("task_*.csv"))


def lines(path):
    return [json.loads(line) for line in open(path)]


def test_synth_gen_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["synth-gen", "--seed", "7", "--num-tasks", "4", "-o", str(tmp_path / name)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "task_03.csv" in files and "truth_dictionary.txt" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert load_csv(tmp_path / "a" / "task_00.csv").n == 200


def test_train_sequence_outputs(synth, tmp_path):
    out = tmp_path / "run"
    assert main(["train-sequence", "--data", *synth, *FAST, "--reps", "2", "-o", str(out)]) == 0
    rows = lines(out / "report.jsonl")
    assert len(rows) == 2 * (1 + 2 + 3)
    assert list(rows[0]) == ["stage", "task", "rep", "error", "seconds", "lambda", "d"]
    assert all(r["seconds"] is None for r in rows)
    learner = LifelongMetricLearner.load(out / "checkpoint.zip")
    assert learner.m == 3 and learner.dictionary.d == 3


def test_record_timing(synth, tmp_path):
    out = tmp_path / "run"
    assert main(["train-sequence", "--data", *synth, *FAST, "--record-timing", "-o", str(out)]) == 0
    assert all(r["seconds"] >= 0 for r in lines(out / "report.jsonl"))


def test_missing_dataset_names_path(tmp_path, capsys):
    missing = str(tmp_path / "nope.csv")
    assert main(["train-sequence", "--data", missing]) == 2
    assert missing in capsys.readouterr().err


def test_usage_errors_exit_2(capsys):
    assert main(["no-such-command"]) == 2
    assert main(["synth-gen", "--bogus-flag", "1"]) == 2
    assert main([]) == 2


def test_configuration_error_exit_2(synth, tmp_path):
    assert main(["train-sequence", "--data", *synth, "--lambda-t", "-1", "-o", str(tmp_path)]) == 2
    assert main(["synth-gen", "--d-true", "50", "-o", str(tmp_path / "x")]) == 2


def test_runtime_error_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("label,a\n1,oops\n0,1\n")
    good = tmp_path / "good.csv"
    good.write_text("label,a\n1,2\n0,1\n")
    assert main(["train-sequence", "--data", str(bad), str(good)]) == 1
    assert "row 2, column 2" in capsys.readouterr().err


def test_sweep_lambda_five_rows(synth, tmp_path):
    out = tmp_path / "sweep.jsonl"
    assert main(["sweep-lambda", "--data", *synth, *FAST, "--values", "0.001,0.01,0.1,1,10",
                 "-o", str(out)]) == 0
    rows = lines(out)
    assert [r["lambda"] for r in rows] == [0.001, 0.01, 0.1, 1.0, 10.0]
    assert all(0 <= r["error"] <= 1 for r in rows)


def test_sweep_d_records_bad_point(synth, tmp_path, capsys):
    out = tmp_path / "sweep.jsonl"
    assert main(["sweep-d", "--data", *synth, *FAST, "--values", "2,9", "-o", str(out)]) == 0
    rows = lines(out)
    assert [r["d"] for r in rows] == [2, 9]
    assert rows[0]["error"] is not None and rows[1]["error"] is None
    assert "d=9" in capsys.readouterr().err


def test_config_file_and_flag_override(synth, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nd = 2\nlambda-t = 0.5\ndict_steps = 1\niterations = 20\nj_scales = 2,3\n")
    out = tmp_path / "run"
    assert main(["train-sequence", "--data", *synth, "--config", str(cfg), "--d", "3", "-o", str(out)]) == 0
    learner = LifelongMetricLearner.load(out / "checkpoint.zip")
    assert learner.dictionary.d == 3 and learner.config.lambda_t == 0.5
    assert read_config_file(cfg, ENGINE_OPTIONS + [("iterations", int, "")])["lambda_t"] == 0.5


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 1\n")
    assert main(["synth-gen", "--config", str(bad), "-o", str(tmp_path / "x")]) == 2
    assert main(["synth-gen", "--config", str(tmp_path / "none.cfg")]) == 2


def test_init_dict_and_eval_and_checkpoint(synth, tmp_path, capsys):
    dict_path = tmp_path / "dict.txt"
    assert main(["init-dict", "--data", synth[0], "--d", "2", "--j-scales", "3,5", "-o", str(dict_path)]) == 0
    assert dict_path.read_text().splitlines()[0] == "2 6"

    ckpt = tmp_path / "state.zip"
    assert main(["checkpoint", "save", "--data", *synth, *FAST, "-o", str(ckpt)]) == 0
    capsys.readouterr()
    assert main(["checkpoint", "load", str(ckpt)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["tasks"] == ["task_00", "task_01", "task_02"] and summary["d"] == 3

    report = tmp_path / "eval.jsonl"
    assert main(["eval", "--checkpoint", str(ckpt), "--data", *synth, "-o", str(report)]) == 0
    rows = lines(report)
    assert [r["task"] for r in rows] == ["task_00", "task_01", "task_02"]
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.zip"), "--data", *synth]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lifelong_metric", "synth-gen", "--num-tasks", "1",
                           "-o", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert np.isfinite(load_csv(tmp_path / "m" / "task_00.csv").X).all()
