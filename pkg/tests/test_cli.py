import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from gasl.cli import main
from gasl.datamodel import HyperParams
from gasl.embeddings.semantic import toy_corpus
from gasl.harness import load_data_dir, load_records

SPEC = {"p": 4, "q": 2, "d_x": 8, "d_a": 6, "per_class": 20}
HP = HyperParams(hidden=16, latent_dim=4, noise_dim=4, epochs=2, classifier_epochs=3, syn_per_class=10, batch_size=16)


@pytest.fixture
def prepared(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SPEC))
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "data")]) == 0
    return tmp_path / "data"


def write_config(tmp_path, data_dir, **kw):
    cfg = {"dataset_id": "toy", "model": "cvae", "task": "ZSL", "hp": HP.to_dict(), "data_dir": str(data_dir),
           "output": str(tmp_path / "results")}
    cfg.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_synth_run_report(prepared, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("GASL_RESULTS_DIR", raising=False)
    assert load_data_dir(prepared)[2].p == 4
    for model, task in (("cvae", "ZSL"), ("tfvaegan", "ZSL")):
        assert main(["run", "--config", str(write_config(tmp_path, prepared, model=model, task=task))]) == 0
    out = capsys.readouterr().out
    assert '"Z"' in out
    assert len(load_records(tmp_path / "results")) == 2
    assert main(["report", "--in", str(tmp_path / "results"), "--out", str(tmp_path / "report")]) == 0
    assert "[ZSL]" in capsys.readouterr().out
    assert (tmp_path / "report" / "results.csv").exists()


def test_exit_codes(prepared, tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["run", "--config", str(write_config(tmp_path, prepared, task="UFSL"))]) == 2
    assert main(["run", "--config", str(write_config(tmp_path, tmp_path / "nowhere"))]) == 4
    assert main(["splits", "--dataset", "SUN", "--task", "SFSL", "--shots", "20"]) == 2
    assert main(["report", "--in", str(tmp_path / "empty"), "--out", str(tmp_path / "r")]) == 1
    assert main(["embed-visual", "--variant", "finetune", "--images", str(tmp_path / "noimgs"),
                 "--out", str(tmp_path / "v")]) == 4
    assert "gasl: error:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_protocol_violation_exit_code(tmp_path, monkeypatch):
    from gasl.harness import pipeline

    def leak(split):
        raise pipeline.ProtocolViolation("test rows in training")

    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SPEC))
    main(["synth", "--spec", str(spec), "--out", str(tmp_path / "data")])
    monkeypatch.setattr(pipeline, "assert_protocol", leak)
    assert main(["run", "--config", str(write_config(tmp_path, tmp_path / "data"))]) == 3


def test_splits_command(tmp_path, capsys):
    out = tmp_path / "split.json"
    assert main(["splits", "--dataset", "FLO", "--task", "GUFSL", "--shots", "5", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["train_unseen"] == 100 and summary["test_seen"] == 1403
    assert all(summary["checks"].values())
    assert json.loads(out.read_text())["task"] == "GUFSL"


def test_embedding_commands(tmp_path, capsys):
    r = np.random.default_rng(0)
    for c in (1, 2, 3):
        (tmp_path / "img" / str(c)).mkdir(parents=True)
        for k in range(2):
            Image.fromarray(r.integers(0, 255, (24, 24, 3), dtype=np.uint8)).save(tmp_path / "img" / str(c) / f"{k}.png")
    assert main(["embed-visual", "--variant", "finetune", "--images", str(tmp_path / "img"), "--seen", "2",
                 "--epochs", "1", "--out", str(tmp_path / "vis")]) == 0
    for c, texts in toy_corpus(3, texts_per_class=2, length=16).items():
        (tmp_path / "txt" / str(c)).mkdir(parents=True)
        for k, t in enumerate(texts):
            (tmp_path / "txt" / str(c) / f"{k}.txt").write_text(t)
    assert main(["embed-semantic", "--variant", "imb-gru", "--corpus", str(tmp_path / "txt"), "--visual",
                 str(tmp_path / "vis"), "--hidden", "8", "--epochs", "1", "--out", str(tmp_path / "sem")]) == 0
    assert main(["embed-visual", "--variant", "regularized", "--images", str(tmp_path / "img"), "--seen", "2",
                 "--semantics", str(tmp_path / "sem"), "--epochs", "1", "--out", str(tmp_path / "vis2")]) == 0


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "gasl.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "splits" in res.stdout
