import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mmfilter.cli import git_blob_sha1, main

DATA_CFG = "n = 60\nseq_len.language = 3\nseq_len.acoustic = 3\nseq_len.visual = 3\nnoise_prob.acoustic = 1.0\n"
TRAIN_CFG = "d = 4\nepochs = 1\nbatch_size = 16\n"


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "data.cfg").write_text(DATA_CFG)
    (tmp_path / "train.cfg").write_text(TRAIN_CFG)
    return tmp_path


def _gen(w, name="d.jsonl", seed=0):
    return main(["gen-data", "--config", str(w / "data.cfg"), "--out", str(w / name), "--seed", str(seed)])


def _train(w, *extra, cfg="train.cfg", out="run"):
    return main(["train", "--config", str(w / cfg), "--data", str(w / "d.jsonl"), "--out", str(w / out), *extra])


def test_git_blob_hash_matches_git():
    # known value of `git hash-object` on "hello\n"
    assert git_blob_sha1(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_gen_data(workdir):
    assert _gen(workdir) == 0
    lines = (workdir / "d.jsonl").read_text().splitlines()
    assert len(lines) == 60
    assert all(json.loads(line)["noise_flags"]["acoustic"] for line in lines)
    manifest = json.loads((workdir / "d.jsonl.manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["n"] == 60
    assert manifest["dataset_sha1"] == git_blob_sha1((workdir / "d.jsonl").read_bytes())


def test_gen_data_deterministic(workdir):
    assert _gen(workdir, "a.jsonl", 7) == 0 and _gen(workdir, "b.jsonl", 7) == 0
    assert (workdir / "a.jsonl").read_bytes() == (workdir / "b.jsonl").read_bytes()
    assert _gen(workdir, "c.jsonl", 8) == 0
    assert (workdir / "a.jsonl").read_bytes() != (workdir / "c.jsonl").read_bytes()


def test_gen_data_bad_config(workdir, capsys):
    (workdir / "bad.cfg").write_text("noise_prob.acoustic = 2\n")
    rc = main(["gen-data", "--config", str(workdir / "bad.cfg"), "--out", str(workdir / "x.jsonl")])
    assert rc == 2
    assert "noise probability" in capsys.readouterr().err


def test_gen_data_io_failure(workdir):
    assert main(["gen-data", "--config", str(workdir / "data.cfg"), "--out", str(workdir / "missing" / "x.jsonl")]) == 1
    assert main(["gen-data", "--config", str(workdir / "nope.cfg"), "--out", str(workdir / "x.jsonl")]) == 1


def test_train_writes_artifacts(workdir):
    _gen(workdir)
    assert _train(workdir) == 0
    run = workdir / "run"
    assert (run / "model.bin").exists()
    log = (run / "train.log").read_text().splitlines()
    assert len(log) == 1 and "keep_acoustic=" in log[0] and "keep_language=" in log[0]
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["ablation"] == "full"
    assert manifest["dataset_sha1"] == git_blob_sha1((workdir / "d.jsonl").read_bytes())
    assert manifest["started"] <= manifest["finished"]
    assert set(manifest["test_metrics"]) >= {"acc7", "acc2", "f1", "mae", "corr"}
    assert manifest["config"]["epochs"] == 1


def test_train_zero_epochs(workdir):
    _gen(workdir)
    (workdir / "zero.cfg").write_text("d = 4\nepochs = 0\n")
    assert _train(workdir, cfg="zero.cfg") == 0
    assert (workdir / "run" / "train.log").read_text() == ""
    assert json.loads((workdir / "run" / "manifest.json").read_text())["test_metrics"]["mae"] >= 0


def test_ablation_manifests_are_distinct(workdir):
    _gen(workdir)
    names = set()
    for flag in ("--no-ml", "--no-mfm", "--no-be"):
        out = flag.strip("-")
        assert _train(workdir, flag, out=out) == 0
        names.add(json.loads((workdir / out / "manifest.json").read_text())["ablation"])
    assert names == {"no-ml", "no-mfm", "no-be"}


def test_train_rerun_reproduces_metrics(workdir):
    _gen(workdir)
    _train(workdir, out="a")
    _train(workdir, out="b")
    a = json.loads((workdir / "a" / "manifest.json").read_text())
    b = json.loads((workdir / "b" / "manifest.json").read_text())
    assert a["test_metrics"] == b["test_metrics"]
    assert (workdir / "a" / "model.bin").read_bytes() == (workdir / "b" / "model.bin").read_bytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_nan_exits_3(workdir, capsys):
    _gen(workdir)
    (workdir / "nan.cfg").write_text("d = 4\nepochs = 1\nlearning_rate = 1e308\n")
    assert _train(workdir, cfg="nan.cfg") == 3
    assert "non-finite loss" in capsys.readouterr().err


def test_train_bad_config_and_schema(workdir):
    _gen(workdir)
    (workdir / "bad.cfg").write_text("fusion = graph\n")
    assert _train(workdir, cfg="bad.cfg") == 2
    (workdir / "d.jsonl").write_text("{broken\n")
    assert _train(workdir) == 2


def test_eval_output_and_repeatability(workdir, capsys):
    _gen(workdir)
    _train(workdir)
    capsys.readouterr()
    args = ["eval", "--model", str(workdir / "run" / "model.bin"), "--data", str(workdir / "d.jsonl")]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    keys = [line.split("=")[0] for line in first.splitlines()]
    assert keys == ["acc7", "acc2", "f1", "mae", "corr", "keep_language", "keep_acoustic", "keep_visual"]


def test_eval_hard_model_reports_binary_keep_rates(workdir, capsys):
    _gen(workdir)
    (workdir / "hard.cfg").write_text(TRAIN_CFG + "filter_mode = hard\n")
    assert _train(workdir, cfg="hard.cfg") == 0
    capsys.readouterr()
    assert main(["eval", "--model", str(workdir / "run" / "model.bin"), "--data", str(workdir / "d.jsonl")]) == 0
    rates = {k: float(v) for k, v in (line.split("=") for line in capsys.readouterr().out.splitlines())}
    for m in ("language", "acoustic", "visual"):
        # mean of 0/1 gates over 60 utterances
        assert rates[f"keep_{m}"] * 60 == pytest.approx(round(rates[f"keep_{m}"] * 60), abs=1e-4)


def test_eval_dim_mismatch(workdir):
    _gen(workdir)
    _train(workdir)
    (workdir / "data.cfg").write_text(DATA_CFG + "dims.visual = 7\n")
    _gen(workdir, "other.jsonl")
    assert main(["eval", "--model", str(workdir / "run" / "model.bin"), "--data", str(workdir / "other.jsonl")]) == 2


def test_eval_missing_model(workdir):
    _gen(workdir)
    assert main(["eval", "--model", str(workdir / "none.bin"), "--data", str(workdir / "d.jsonl")]) == 1


def test_inspect_masks(workdir, capsys):
    _gen(workdir)
    _train(workdir)
    capsys.readouterr()
    out = workdir / "masks.csv"
    assert main(["inspect-masks", "--model", str(workdir / "run" / "model.bin"), "--data", str(workdir / "d.jsonl"), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["utterance_id", "modality", "keep", "replace", "penalty"]
    assert len(rows) == 3 * 60
    for r in rows:
        assert abs(float(r["keep"]) + float(r["replace"]) - 1.0) <= 1e-9
    summary = capsys.readouterr().out.strip()
    assert summary.startswith("mean_keep ")
    keep = {m: np.mean([float(r["keep"]) for r in rows if r["modality"] == m]) for m in ("language", "acoustic", "visual")}
    assert f"acoustic={keep['acoustic']:.6f}" in summary


def test_inspect_masks_without_filter(workdir, capsys):
    _gen(workdir)
    _train(workdir, "--no-mfm")
    capsys.readouterr()
    rc = main(["inspect-masks", "--model", str(workdir / "run" / "model.bin"), "--data", str(workdir / "d.jsonl"), "--out", str(workdir / "m.csv")])
    assert rc == 2
    assert "model has no filter" in capsys.readouterr().err


def test_module_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "mmfilter", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("gen-data", "train", "eval", "inspect-masks"):
        assert cmd in proc.stdout
