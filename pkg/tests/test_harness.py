import json

import numpy as np
import pytest
from scipy.io import savemat

from gasl.datamodel import HyperParams, ResultRecord, SplitSpec, Task
from gasl.errors import ConfigError, EmptyReport, ExperimentError, IngestError, ProtocolViolation, ValidationError
from gasl.harness import (
    ExperimentConfig,
    SyntheticDatasetSpec,
    emit_report,
    ingest_community_splits,
    load_data_dir,
    load_records,
    make_synthetic_dataset,
    persist_record,
    prepare_inputs,
    run_experiment,
    toy_hp,
    write_prepared,
)
from gasl.harness.config import RESULTS_ENV, TOY_HP
from gasl.harness.pipeline import assert_protocol
from gasl.harness.report import consistency_warnings, rank_table

SPEC = SyntheticDatasetSpec(p=4, q=2, d_x=8, d_a=6, per_class=20)
HP = HyperParams(hidden=16, latent_dim=4, noise_dim=4, epochs=2, classifier_epochs=3, syn_per_class=10, batch_size=16)


def config(**kw):
    base = dict(dataset_id="toy", model="fclswgan", task="GZSL", hp=HP, synthetic=SPEC)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation_and_roundtrip(tmp_path):
    cfg = config(task="UFSL", shots=2, seed=3)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.fingerprint == cfg.fingerprint
    assert config(output="elsewhere").fingerprint == config().fingerprint
    assert config(seed=1).fingerprint != config().fingerprint
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg
    for bad in (dict(task="UFSL"), dict(shots=2), dict(task="SFSL", shots=0), dict(model="gan"),
                dict(synthetic=None), dict(data_dir="x")):
        with pytest.raises(ConfigError):
            config(**bad)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"dataset_id": "x", "model": "cvae"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**cfg.to_dict(), "colour": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**cfg.to_dict(), "hp": {"hidden": -1}})
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")


def test_results_dir_env_override(monkeypatch, tmp_path):
    monkeypatch.delenv(RESULTS_ENV, raising=False)
    assert str(config(output="out").results_dir()) == "out"
    monkeypatch.setenv(RESULTS_ENV, str(tmp_path))
    assert config(output="out").results_dir() == tmp_path


def test_toy_hyperparameters():
    assert toy_hp("fclswgan") == TOY_HP
    assert toy_hp("cadavae").gamma != TOY_HP.gamma


def test_synthetic_dataset_layout():
    features, semantics, meta, base = make_synthetic_dataset(SPEC)
    assert features.X.shape == (120, 8) and semantics.A.shape == (6, 6)
    assert (meta.p, meta.q, meta.n_total) == (4, 2, 120)
    assert len(base.train_seen) == 64 and len(base.test_seen) == 16 and len(base.test_unseen) == 40
    assert set(features.y[base.test_unseen]) == {5, 6}
    again = make_synthetic_dataset(SPEC)[0]
    assert np.array_equal(features.X, again.X)
    with pytest.raises(ValidationError):
        SyntheticDatasetSpec(per_class=1)
    with pytest.raises(ValidationError):
        SyntheticDatasetSpec(test_seen_fraction=1.0)


def community_fields():
    """Original ids 1..6 with seen classes {2, 4, 5, 6} and unseen {1, 3}; row 0 is in no list."""
    r = np.random.default_rng(0)
    labels = np.repeat([1, 2, 3, 4, 5, 6], 5)
    X = r.normal(size=(30, 7))
    att = r.normal(size=(6, 3))
    seen_rows = np.where(np.isin(labels, [2, 4, 5, 6]))[0]
    unseen_rows = np.where(np.isin(labels, [1, 3]))[0][1:]
    return dict(
        features=X.T, labels=labels[:, None], att=att.T,
        trainval_loc=seen_rows[::2] + 1, test_seen_loc=seen_rows[1::2] + 1, test_unseen_loc=unseen_rows + 1,
    )


def check_ingested(out, fields):
    features, semantics, meta, base = out
    assert (meta.p, meta.q, meta.n_total) == (4, 2, 29)
    assert features.X.shape == (29, 7)
    # Original class 2 becomes dense 1, original 1 becomes dense 5.
    assert np.allclose(semantics.A[0], fields["att"].T[1]) and np.allclose(semantics.A[4], fields["att"].T[0])
    assert np.allclose(features.X[0], fields["features"].T[1])
    assert set(features.y[base.test_unseen]) == {5, 6}


def test_ingest_npz_and_mat(tmp_path):
    fields = community_fields()
    np.savez(tmp_path / "cub.npz", **fields)
    out = ingest_community_splits(tmp_path / "cub.npz")
    check_ingested(out, fields)
    assert out[2].dataset_id == "CUB"
    mat = tmp_path / "mat"
    mat.mkdir()
    savemat(mat / "res101.mat", {k: fields[k] for k in ("features", "labels")})
    savemat(mat / "att_splits.mat", {k: v for k, v in fields.items() if k not in ("features", "labels")})
    check_ingested(load_data_dir(mat, "flo"), fields)


@pytest.mark.parametrize("breakage", ["missing_field", "bad_loc", "overlap", "rows", "suffix"])
def test_ingest_errors(tmp_path, breakage):
    fields = community_fields()
    name = "x.npz"
    if breakage == "missing_field":
        del fields["att"]
    elif breakage == "bad_loc":
        fields["trainval_loc"] = np.array([0, 1])
    elif breakage == "overlap":
        fields["test_unseen_loc"] = np.array([6, 1])
    elif breakage == "rows":
        fields["labels"] = fields["labels"][:-2]
    else:
        name = "x.csv"
    np.savez(tmp_path / "x.npz", **fields)
    if name != "x.npz":
        (tmp_path / name).write_text("1,2")
    with pytest.raises(IngestError):
        ingest_community_splits(tmp_path / name)


def test_ingest_missing_mat(tmp_path):
    with pytest.raises(IngestError):
        ingest_community_splits(tmp_path)


def test_prepared_directory_roundtrip(tmp_path):
    data = make_synthetic_dataset(SPEC)
    write_prepared(tmp_path / "prep", *data)
    features, semantics, meta, base = load_data_dir(tmp_path / "prep")
    assert np.array_equal(features.X, data[0].X) and meta == data[2]
    assert np.array_equal(base.test_unseen, data[3].test_unseen)
    (tmp_path / "prep" / "partition.json").write_text("{")
    with pytest.raises(IngestError):
        load_data_dir(tmp_path / "prep")
    cfg = config(synthetic=None, data_dir=str(tmp_path / "prep"))
    with pytest.raises(IngestError):
        prepare_inputs(cfg)


def test_protocol_guard():
    features, semantics, meta, split = prepare_inputs(config(task="GZSL"))
    assert_protocol(split)
    with pytest.raises(ValidationError):
        SplitSpec(split.task, None, split.seed, np.concatenate([split.train_seen, split.test_seen[:1]]),
                  split.train_unseen, split.test_seen, split.test_unseen)
    # Bypass construction-time validation to exercise the pipeline's own guard.
    leaky = SplitSpec(split.task, None, split.seed, split.train_seen, split.train_unseen, split.test_seen,
                      split.test_unseen)
    object.__setattr__(leaky, "train_seen", np.concatenate([split.train_seen, split.test_seen[:1]]))
    with pytest.raises(ProtocolViolation):
        assert_protocol(leaky)
    with pytest.raises(ExperimentError) as err:
        run_experiment(config(task="GZSL"), features, semantics, leaky, meta, persist=False)
    assert err.value.exit_code == 3


@pytest.mark.parametrize("model,task,shots", [("fclswgan", "GZSL", None), ("cadavae", "ZSL", None),
                                              ("lisgan", "GSFSL", 2), ("gcmcf", "GUFSL", 1)])
def test_run_experiment_records(model, task, shots, tmp_path, monkeypatch):
    monkeypatch.setenv(RESULTS_ENV, str(tmp_path))
    cfg = config(model=model, task=task, shots=shots)
    rec = run_experiment(cfg)
    generalized = Task(task).generalized
    assert (rec.H is not None) == generalized and (rec.Z is None) == generalized
    if generalized:
        assert rec.h_mismatch() < 1e-9 and rec.HT >= 0
    assert rec.config_hash == cfg.fingerprint and rec.model == model
    assert set(rec.per_class_acc) >= {5, 6}
    stored = load_records(tmp_path)
    assert stored == [rec]


def test_persist_is_append_only(tmp_path):
    rec = ResultRecord("ab" * 20, 0, Z=50.0, dataset="d", model="cvae", task="ZSL")
    paths = [persist_record(rec, tmp_path) for _ in range(3)]
    assert [p.name for p in paths] == [f"{'ab' * 8}-s0.json", f"{'ab' * 8}-s0-1.json", f"{'ab' * 8}-s0-2.json"]
    assert len(load_records(tmp_path)) == 3


def test_report(tmp_path):
    recs = [
        ResultRecord("a", 0, U=40.0, S=60.0, H=47.0, dataset="D", model="m1", task="GZSL"),
        ResultRecord("b", 0, U=50.0, S=50.0, H=50.0, dataset="D", model="m2", task="GZSL"),
        ResultRecord("c", 0, U=30.0, S=30.0, H=30.0, dataset="E", model="m1", task="GZSL"),
        ResultRecord("d", 0, U=10.0, S=10.0, H=10.0, dataset="E", model="m2", task="GZSL"),
        ResultRecord("e", 0, Z=70.0, dataset="D", model="m1", task="ZSL"),
    ]
    assert rank_table(recs) == {("GZSL", None): {"m1": 1.5, "m2": 1.5}, ("ZSL", None): {"m1": 1.0}}
    warnings = consistency_warnings(recs)
    assert len(warnings) == 1 and "D/m1/GZSL" in warnings[0]
    out = emit_report(recs, tmp_path)
    assert out["warnings"] == warnings
    text = out["text"].read_text()
    assert "50.0*" in text and "warnings:" in text
    assert out["csv"].read_text().splitlines()[0].startswith("dataset,model,task")
    with pytest.raises(EmptyReport):
        emit_report([], tmp_path)
    (tmp_path / "junk.json").write_text("{")
    with pytest.raises(IngestError):
        load_records(tmp_path)
