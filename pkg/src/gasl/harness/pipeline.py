"""train generator -> synthesize -> compose -> train classifier -> evaluate, with timing."""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

import numpy as np

from gasl.classify import (
    ClassifierKind,
    classifier_kind_for,
    compose_training_set,
    evaluate,
    harmonic_mean,
    per_class_table,
    train_classifier,
)
from gasl.datamodel import DatasetMeta, FeatureSet, ResultRecord, SemanticTable, SplitSpec, atomic_write_text
from gasl.errors import ConfigError, ExperimentError, GaslError, ProtocolViolation
from gasl.generators import (
    ModelKind,
    build_state,
    classifier_view,
    counterfactual_seen_unseen_gate,
    real_latents,
    synthesize_features,
    train_generator,
)
from gasl.harness.config import ExperimentConfig
from gasl.harness.ingest import load_data_dir
from gasl.harness.synthetic import make_synthetic_dataset
from gasl.seeding import derive_seed
from gasl.splits import build_split

log = logging.getLogger(__name__)


def prepare_inputs(cfg: ExperimentConfig):
    """Load or generate the data of ``cfg`` and build its split."""
    if cfg.synthetic is not None:
        features, semantics, meta, base = make_synthetic_dataset(cfg.synthetic)
    else:
        features, semantics, meta, base = load_data_dir(cfg.data_dir, cfg.dataset_id)
    split = build_split(meta, features.y, base, cfg.task, cfg.shots, cfg.seed)
    return features, semantics, meta, split


def assert_protocol(split: SplitSpec):
    """No test index may reach a training call."""
    leak = np.intersect1d(split.train_indices, split.test_indices)
    if len(leak):
        raise ProtocolViolation(f"{len(leak)} test indices appear in the training lists, e.g. {leak[:5].tolist()}")


def _run(cfg: ExperimentConfig, features: FeatureSet, semantics: SemanticTable, split: SplitSpec, meta: DatasetMeta):
    if split.task != cfg.task:
        raise ConfigError(f"split is for {split.task.value}, config asks for {cfg.task.value}")
    assert_protocol(split)
    hp, task, kind = cfg.hp, cfg.task, cfg.model
    p, q = meta.p, meta.q
    seen = tuple(range(1, p + 1))
    unseen = tuple(range(p + 1, p + q + 1))
    train = features.subset(split.train_indices)
    test_seen = features.subset(split.test_seen) if task.generalized else None
    test_unseen = features.subset(split.test_unseen)

    t0 = time.perf_counter()
    state = build_state(kind, train.X, train.y, semantics.A, hp, seed=derive_seed(cfg.seed, "model"))
    history = train_generator(state, train.X, train.y, seed=derive_seed(cfg.seed, "generator"), seen_classes=seen)

    syn_classes = seen + unseen if (kind == ModelKind.CVAE and task.generalized) else unseen
    syn, syn_latent = synthesize_features(state, syn_classes, hp.syn_per_class, seed=derive_seed(cfg.seed, "synth"))
    latents = {"real": real_latents(state, train.X), "synthetic": syn_latent}
    train_set = compose_training_set(kind, train, syn, latents, task, p)
    scope = seen + unseen if task.generalized else unseen

    views = {"unseen": classifier_view(state, test_unseen.X)}
    if test_seen is not None:
        views["seen"] = classifier_view(state, test_seen.X)
    route = None
    if kind == ModelKind.GCMCF and task.generalized:
        route = {name: counterfactual_seen_unseen_gate(state, fs.X, seen)
                 for name, fs in (("unseen", test_unseen), ("seen", test_seen))}

    def predictor(bundle):
        def predict(X):
            name = "unseen" if X is test_unseen.X else "seen"
            V = views[name]
            if route is None:
                return bundle.predict(V)
            return np.where(route[name], bundle.predict_within(V, seen), bundle.predict_within(V, unseen))
        return predict

    best = {"score": -1.0}

    def on_epoch(epoch, bundle):
        metrics = evaluate(predictor(bundle), test_seen, test_unseen, task, p, q)
        score = metrics["H"] if task.generalized else metrics["Z"]
        if score > best["score"]:
            predict = predictor(bundle)
            pcs = per_class_table(predict(test_unseen.X), test_unseen.y, unseen)
            if test_seen is not None:
                pcs.update(per_class_table(predict(test_seen.X), test_seen.y, seen))
            best.update(score=score, metrics=metrics, epoch=epoch, hours=(time.perf_counter() - t0) / 3600.0,
                        per_class=pcs)

    ckind = classifier_kind_for(kind, task)
    train_classifier(ckind, train_set, scope, epochs=hp.classifier_epochs, lr=hp.classifier_lr,
                     seed=derive_seed(cfg.seed, "classifier"), p=p, callback=on_epoch)
    m = best["metrics"]
    common = dict(
        config_hash=cfg.fingerprint,
        seed=cfg.seed,
        per_class_acc=best["per_class"],
        dataset=cfg.dataset_id,
        model=kind.value,
        task=task.value,
        shots=cfg.shots,
        provenance_x=cfg.provenance_x.value,
        provenance_a=cfg.provenance_a.value,
        best_epoch=best["epoch"],
        epochs=hp.classifier_epochs if ckind == ClassifierKind.SOFTMAX else 1,
    )
    log.info("%s %s: %s (generator epochs %d)", kind.value, task.value, m, len(history))
    if task.generalized:
        return ResultRecord(U=m["U"], S=m["S"], H=harmonic_mean(m["U"], m["S"]), HT=best["hours"], **common)
    return ResultRecord(Z=m["Z"], ZT=best["hours"], **common)


def persist_record(record: ResultRecord, directory) -> Path:
    """Append-only store: never overwrites an existing record file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{record.config_hash[:16]}-s{record.seed}"
    path = directory / f"{stem}.json"
    k = 1
    while path.exists():
        path = directory / f"{stem}-{k}.json"
        k += 1
    atomic_write_text(path, json.dumps(record.to_dict(), indent=2, sort_keys=True))
    return path


def run_experiment(cfg: ExperimentConfig, features=None, semantics=None, split=None, meta=None,
                   persist: bool = True) -> ResultRecord:
    """Run one experiment; module errors are wrapped with the config fingerprint."""
    try:
        if features is None:
            features, semantics, meta, split = prepare_inputs(cfg)
        record = _run(cfg, features, semantics, split, meta)
    except GaslError as exc:
        raise ExperimentError(cfg.fingerprint, exc) from exc
    if persist:
        persist_record(record, cfg.results_dir())
    return record
