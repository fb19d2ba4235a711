"""Desk-scale synthetic dataset whose class descriptions genuinely predict visual features."""

from __future__ import annotations

import numpy as np

from gasl.datamodel import DatasetMeta, FeatureSet, SemanticProvenance, SemanticTable, VisualProvenance
from gasl.harness.config import SyntheticDatasetSpec
from gasl.seeding import rng
from gasl.splits import BasePartition


def make_synthetic_dataset(spec: SyntheticDatasetSpec):
    """Returns (FeatureSet, SemanticTable, DatasetMeta, BasePartition).

    Descriptions are Gaussian prototypes; features are a fixed random linear
    map of the class prototype plus isotropic noise.  Seen classes are
    1..p, unseen p+1..p+q; the last ``test_seen_fraction`` of every seen
    class is held out as test-seen.
    """
    C = spec.p + spec.q
    A = rng(spec.seed, "prototypes").standard_normal((C, spec.d_a)).astype(np.float32)
    W = rng(spec.seed, "map").standard_normal((spec.d_a, spec.d_x)).astype(np.float32) / np.sqrt(spec.d_a)
    y = np.repeat(np.arange(1, C + 1), spec.per_class)
    noise = rng(spec.seed, "noise").standard_normal((len(y), spec.d_x)).astype(np.float32)
    X = A[y - 1] @ W + spec.noise * noise

    n_test = max(1, int(round(spec.test_seen_fraction * spec.per_class)))
    n_test = min(n_test, spec.per_class - 1)
    train_seen, test_seen = [], []
    for c in range(spec.p):
        idx = np.arange(c * spec.per_class, (c + 1) * spec.per_class)
        train_seen.append(idx[: spec.per_class - n_test])
        test_seen.append(idx[spec.per_class - n_test :])
    test_unseen = np.arange(spec.p * spec.per_class, C * spec.per_class)

    dataset_id = f"synthetic-{spec.seed}"
    meta = DatasetMeta(
        dataset_id=dataset_id,
        p=spec.p,
        q=spec.q,
        d_a=spec.d_a,
        n_total=len(y),
        n_seen=spec.p * spec.per_class,
        n_unseen=spec.q * spec.per_class,
        per_class_counts={c: spec.per_class for c in range(1, C + 1)},
        images_available=False,
    )
    features = FeatureSet(X, y, VisualProvenance.ORIGINAL, dataset_id, C)
    semantics = SemanticTable(A, SemanticProvenance.ATTRIBUTES, dataset_id)
    base = BasePartition(y, spec.p, np.concatenate(train_seen), np.concatenate(test_seen), test_unseen)
    return features, semantics, meta, base
