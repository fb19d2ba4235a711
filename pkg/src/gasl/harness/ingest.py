"""Ingestion of community feature/split archives and of prepared data directories.

A community archive is either a directory holding ``res101.mat`` and
``att_splits.mat`` (features as d x n, attributes as d_a x C, 1-based
``*_loc`` index vectors) or a single ``.npz`` with the same field names.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from gasl.datamodel import (
    DatasetMeta,
    FeatureSet,
    SemanticProvenance,
    SemanticTable,
    VisualProvenance,
    atomic_write_text,
    read_feature_container,
    read_semantic_container,
    write_feature_container,
    write_semantic_container,
)
from gasl.datasets import BENCHMARKS
from gasl.errors import IngestError, ValidationError
from gasl.splits import BasePartition

FIELDS = ("features", "labels", "att", "trainval_loc", "test_seen_loc", "test_unseen_loc")


def _load_fields(path: Path) -> dict:
    if path.is_dir():
        from scipy.io import loadmat

        out = {}
        for name in ("res101.mat", "att_splits.mat"):
            f = path / name
            if not f.exists():
                raise IngestError(f"archive {path} is missing {name}")
            try:
                out.update({k: v for k, v in loadmat(f).items() if not k.startswith("__")})
            except Exception as exc:  # scipy raises several unrelated types
                raise IngestError(f"cannot read {f}: {exc}") from exc
        return out
    if path.suffix == ".npz":
        try:
            with np.load(path, allow_pickle=False) as npz:
                return {k: npz[k] for k in npz.files}
        except (OSError, ValueError) as exc:
            raise IngestError(f"cannot read {path}: {exc}") from exc
    raise IngestError(f"unrecognized archive {path}; expected a directory of .mat files or an .npz")


def ingest_community_splits(path, dataset_id: str | None = None):
    """Returns (FeatureSet, SemanticTable, DatasetMeta, BasePartition) with dense labels.

    Seen classes (those of the train/test-seen lists) are renumbered 1..p in
    order of their original ids, unseen classes p+1..p+q likewise.
    """
    path = Path(path)
    fields = _load_fields(path)
    for name in FIELDS:
        if name not in fields:
            raise IngestError(f"archive {path} lacks the {name!r} field")
    X = np.asarray(fields["features"], dtype=np.float32)
    labels = np.asarray(fields["labels"]).reshape(-1).astype(np.int64)
    att = np.asarray(fields["att"], dtype=np.float32)
    if X.shape[0] != len(labels) and X.shape[1] == len(labels):
        X = X.T
    if X.shape[0] != len(labels):
        raise IngestError(f"features have {X.shape[0]} rows but there are {len(labels)} labels")
    n_cls_orig = int(labels.max())
    if att.shape[0] != n_cls_orig and att.shape[1] == n_cls_orig:
        att = att.T
    if att.shape[0] < n_cls_orig:
        raise IngestError(f"attribute matrix has {att.shape[0]} rows for {n_cls_orig} classes")

    locs = {}
    for name in ("trainval_loc", "test_seen_loc", "test_unseen_loc"):
        loc = np.asarray(fields[name]).reshape(-1).astype(np.int64) - 1
        if len(loc) and (loc.min() < 0 or loc.max() >= len(labels)):
            raise IngestError(f"{name} has indices outside 1..{len(labels)}")
        locs[name] = loc

    seen_orig = np.unique(labels[np.concatenate([locs["trainval_loc"], locs["test_seen_loc"]])])
    unseen_orig = np.unique(labels[locs["test_unseen_loc"]])
    if np.intersect1d(seen_orig, unseen_orig).size:
        raise IngestError("a class appears in both seen and unseen lists")
    order = np.concatenate([seen_orig, unseen_orig])
    remap = {int(o): i + 1 for i, o in enumerate(order)}
    used = np.concatenate(list(locs.values()))
    dense = np.zeros(len(labels), dtype=np.int64)
    dense[used] = [remap[int(v)] for v in labels[used]]
    # Rows outside every split list are dropped.
    keep = np.sort(used)
    pos = np.full(len(labels), -1, dtype=np.int64)
    pos[keep] = np.arange(len(keep))
    X, dense = X[keep], dense[keep]
    A = att[order - 1]

    p, q = len(seen_orig), len(unseen_orig)
    name = (dataset_id or path.stem).upper()
    known = BENCHMARKS.get(name)
    counts = np.bincount(dense, minlength=p + q + 1)
    meta = DatasetMeta(
        dataset_id=name,
        p=p,
        q=q,
        d_a=A.shape[1],
        n_total=len(dense),
        n_seen=int(counts[1 : p + 1].sum()),
        n_unseen=int(counts[p + 1 :].sum()),
        per_class_counts={c: int(counts[c]) for c in range(1, p + q + 1)},
        images_available=known.images_available if known else True,
    )
    try:
        base = BasePartition(dense, p, pos[locs["trainval_loc"]], pos[locs["test_seen_loc"]], pos[locs["test_unseen_loc"]])
        features = FeatureSet(X, dense, VisualProvenance.ORIGINAL, name, p + q)
        semantics = SemanticTable(A, SemanticProvenance.ATTRIBUTES, name)
    except ValidationError as exc:
        raise IngestError(f"archive {path} is inconsistent: {exc}") from exc
    return features, semantics, meta, base


def checksum_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- prepared data directories ----------------------------------------------
def write_prepared(directory, features: FeatureSet, semantics: SemanticTable, meta: DatasetMeta, base: BasePartition):
    """Layout: features/, semantics/ containers plus partition.json (meta and base partition)."""
    directory = Path(directory)
    write_feature_container(features, directory / "features")
    write_semantic_container(semantics, directory / "semantics")
    atomic_write_text(directory / "partition.json", json.dumps({"meta": meta.to_dict(), "base": base.to_dict()}))
    return directory


def load_data_dir(directory, dataset_id: str | None = None):
    directory = Path(directory)
    if (directory / "partition.json").exists():
        try:
            part = json.loads((directory / "partition.json").read_text())
            meta = DatasetMeta.from_dict(part["meta"])
            base = BasePartition.from_dict(part["base"])
        except (KeyError, json.JSONDecodeError, ValidationError) as exc:
            raise IngestError(f"bad partition.json in {directory}: {exc}") from exc
        return read_feature_container(directory / "features"), read_semantic_container(directory / "semantics"), meta, base
    return ingest_community_splits(directory, dataset_id)
