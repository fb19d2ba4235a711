"""Index-level realization of the six any-shot tasks.

A :class:`BasePartition` is the canonical ZSL/GZSL assignment of a dataset
(train-seen / test-seen / test-unseen).  :func:`build_split` derives every
task from it:

========  ==================  =================  ==========  ===============
task      train_seen          train_unseen       test_seen   test_unseen
========  ==================  =================  ==========  ===============
ZSL       all seen            --                 --          unseen
GZSL      train-seen          --                 test-seen   unseen
UFSL      all seen            N per unseen class --          unseen - shots
GUFSL     train-seen          N per unseen class test-seen   unseen - shots
SFSL      N per seen class    --                 --          unseen
GSFSL     N of train-seen     --                 test-seen   unseen
========  ==================  =================  ==========  ===============

Seen samples dropped by SFSL/GSFSL are discarded, never moved to a test list.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from gasl.datamodel import DatasetMeta, SplitSpec, Task, _frozen_array
from gasl.errors import InvalidTask, ShotOverflow, ValidationError
from gasl.seeding import rng

SELECTION_RULE = "uniform-without-replacement/sorted"


@dataclass(frozen=True, eq=False)
class BasePartition:
    labels: np.ndarray
    p: int
    train_seen: np.ndarray
    test_seen: np.ndarray
    test_unseen: np.ndarray

    def __post_init__(self):
        for name in ("labels", "train_seen", "test_seen", "test_unseen"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), np.int64).reshape(-1))
        n = len(self.labels)
        allidx = np.concatenate([self.train_seen, self.test_seen, self.test_unseen])
        if len(allidx) and (allidx.min() < 0 or allidx.max() >= n):
            raise ValidationError("partition index out of range")
        if len(np.unique(allidx)) != len(allidx):
            raise ValidationError("partition lists overlap")
        if np.any(self.labels[self.train_seen] > self.p) or np.any(self.labels[self.test_seen] > self.p):
            raise ValidationError("seen partition contains unseen-class samples")
        if np.any(self.labels[self.test_unseen] <= self.p):
            raise ValidationError("unseen partition contains seen-class samples")

    @property
    def all_seen(self) -> np.ndarray:
        return np.sort(np.concatenate([self.train_seen, self.test_seen]))

    def to_dict(self) -> dict:
        return {
            "labels": self.labels.tolist(),
            "p": self.p,
            "train_seen": self.train_seen.tolist(),
            "test_seen": self.test_seen.tolist(),
            "test_unseen": self.test_unseen.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BasePartition":
        return cls(**{k: d[k] for k in ("labels", "p", "train_seen", "test_seen", "test_unseen")})


@dataclass(frozen=True)
class ShotSelection:
    chosen: Mapping[int, tuple[int, ...]]
    seed: int
    rule: str = SELECTION_RULE

    @property
    def indices(self) -> np.ndarray:
        if not self.chosen:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate([np.asarray(v, dtype=np.int64) for v in self.chosen.values()]))


def select_shots(labels, pool, classes, shots: int, seed: int, tag: str = "") -> ShotSelection:
    """Draw ``shots`` indices per class from ``pool`` (seeded, sorted by index)."""
    labels = np.asarray(labels)
    pool = np.sort(np.asarray(pool, dtype=np.int64))
    gen = rng(seed, "shots", tag, shots)
    chosen = {}
    for c in classes:
        members = pool[labels[pool] == c]
        if shots >= len(members):
            raise ShotOverflow(
                f"{shots} shots requested but class {c} has only {len(members)} samples in the pool"
            )
        pick = gen.choice(len(members), size=shots, replace=False)
        chosen[int(c)] = tuple(np.sort(members[pick]).tolist())
    return ShotSelection(chosen, seed)


def build_split(meta: DatasetMeta, labels, base: BasePartition, task, shots: int | None, seed: int) -> SplitSpec:
    try:
        task = Task(task)
    except ValueError:
        raise InvalidTask(f"unknown task {task!r}; expected one of {[t.value for t in Task]}") from None
    if task.few_shot and shots is None:
        raise ValidationError(f"{task.value} needs a shot count")
    if not task.few_shot and shots is not None:
        raise ValidationError(f"{task.value} takes no shot count")
    if shots is not None and shots < 1:
        raise ValidationError("shot count must be >= 1")
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(base.labels) or not np.array_equal(labels, base.labels):
        raise ValidationError("labels do not match the base partition")

    # Generalized tasks train on the train-seen part; the others use every seen sample.
    seen_pool = base.train_seen if task.generalized else base.all_seen
    empty = np.zeros(0, dtype=np.int64)
    train_unseen, test_unseen = empty, np.sort(base.test_unseen)
    train_seen = np.sort(seen_pool)
    tag = f"{meta.dataset_id}/{task.value}"

    if task.unseen_shots:
        sel = select_shots(labels, base.test_unseen, meta.unseen_classes, shots, seed, tag)
        train_unseen = sel.indices
        test_unseen = np.setdiff1d(base.test_unseen, train_unseen)
    elif task.seen_shots:
        sel = select_shots(labels, seen_pool, meta.seen_classes, shots, seed, tag)
        train_seen = sel.indices

    return SplitSpec(
        task=task,
        shots=shots,
        seed=seed,
        train_seen=train_seen,
        train_unseen=train_unseen,
        test_seen=np.sort(base.test_seen) if task.generalized else empty,
        test_unseen=test_unseen,
    )


def expected_cardinalities(base: BasePartition, task, shots: int | None, q: int, p: int) -> dict[str, int]:
    task = Task(task)
    n_seen_all = len(base.train_seen) + len(base.test_seen)
    n_seen = len(base.train_seen) if task.generalized else n_seen_all
    n_unseen = len(base.test_unseen)
    out = {"train_seen": n_seen, "train_unseen": 0, "test_seen": 0, "test_unseen": n_unseen}
    if task.generalized:
        out["test_seen"] = len(base.test_seen)
    if task.unseen_shots:
        out["train_unseen"] = shots * q
        out["test_unseen"] = n_unseen - shots * q
    if task.seen_shots:
        out["train_seen"] = shots * p
    return out


@dataclass
class SplitReport:
    checks: dict[str, bool] = field(default_factory=dict)
    messages: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]


def validate_split(split: SplitSpec, labels, meta: DatasetMeta, base: BasePartition | None = None) -> SplitReport:
    """Check a split against every invariant; never raises on a failed check."""
    labels = np.asarray(labels, dtype=np.int64)
    rep = SplitReport()
    lists = {
        "train_seen": split.train_seen,
        "train_unseen": split.train_unseen,
        "test_seen": split.test_seen,
        "test_unseen": split.test_unseen,
    }

    in_range = all(len(v) == 0 or (v.min() >= 0 and v.max() < len(labels)) for v in lists.values())
    rep.checks["index_range"] = in_range
    if not in_range:
        rep.messages["index_range"] = "index outside the label vector"
        return rep

    flat = np.concatenate(list(lists.values()))
    rep.checks["index_disjointness"] = len(np.unique(flat)) == len(flat)
    if not rep.checks["index_disjointness"]:
        uniq, counts = np.unique(flat, return_counts=True)
        rep.messages["index_disjointness"] = f"repeated indices: {uniq[counts > 1][:10].tolist()}"

    seen_ok = all(np.all(labels[lists[k]] <= meta.p) for k in ("train_seen", "test_seen"))
    unseen_ok = all(np.all(labels[lists[k]] > meta.p) for k in ("train_unseen", "test_unseen"))
    rep.checks["class_disjointness"] = bool(seen_ok and unseen_ok)

    shape_ok = True
    if split.task in (Task.ZSL, Task.GZSL, Task.SFSL, Task.GSFSL) and len(split.train_unseen):
        shape_ok = False
    if split.task in (Task.ZSL, Task.UFSL, Task.SFSL) and len(split.test_seen):
        shape_ok = False
    if split.task.generalized and len(split.test_seen) == 0:
        shape_ok = False
    rep.checks["task_shape"] = shape_ok

    if split.task.few_shot:
        if split.task.unseen_shots:
            lst, classes = split.train_unseen, meta.unseen_classes
        else:
            lst, classes = split.train_seen, meta.seen_classes
        counts = np.bincount(labels[lst], minlength=meta.n_classes + 1)
        bad = [c for c in classes if counts[c] != split.shots]
        rep.checks["shot_counts"] = not bad
        if bad:
            rep.messages["shot_counts"] = f"classes without exactly {split.shots} shots: {bad[:10]}"

    if base is not None:
        expected = expected_cardinalities(base, split.task, split.shots, meta.q, meta.p)
        actual = {k: len(v) for k, v in lists.items()}
        rep.checks["cardinality"] = expected == actual
        if expected != actual:
            rep.messages["cardinality"] = f"expected {expected}, got {actual}"
        rep.checks["within_total"] = len(flat) <= len(labels)
        if split.task.unseen_shots:
            rep.checks["unseen_pool_exact"] = len(split.train_unseen) + len(split.test_unseen) == len(base.test_unseen)
    return rep
