"""Core value types shared across gasl, plus their on-disk containers.

All types are frozen dataclasses; numpy payloads are made read-only on
construction so a value can be shared between threads without copying.
Labels are dense integers ``1..p+q`` with seen classes ``1..p``.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from gasl.errors import IngestError, ValidationError


class Task(str, enum.Enum):
    ZSL = "ZSL"
    GZSL = "GZSL"
    UFSL = "UFSL"
    GUFSL = "GUFSL"
    SFSL = "SFSL"
    GSFSL = "GSFSL"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            for member in cls:
                if member.value == value.upper():
                    return member
        return None

    @property
    def generalized(self) -> bool:
        return self in (Task.GZSL, Task.GUFSL, Task.GSFSL)

    @property
    def few_shot(self) -> bool:
        return self in (Task.UFSL, Task.GUFSL, Task.SFSL, Task.GSFSL)

    @property
    def unseen_shots(self) -> bool:
        return self in (Task.UFSL, Task.GUFSL)

    @property
    def seen_shots(self) -> bool:
        return self in (Task.SFSL, Task.GSFSL)


class VisualProvenance(str, enum.Enum):
    ORIGINAL = "original"
    NAIVE = "naive"
    FINETUNED = "finetuned"
    REGULARIZED = "regularized"
    SYNTHETIC = "synthetic"


class SemanticProvenance(str, enum.Enum):
    ORIGINAL = "original"
    NAIVE = "naive"
    GRU = "gru"
    IMB_GRU = "imb_gru"
    ATTRIBUTES = "attributes"


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _checksum(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr, dtype="<f4").tobytes()).hexdigest()


@dataclass(frozen=True)
class DatasetMeta:
    dataset_id: str
    p: int
    q: int
    d_a: int
    n_total: int
    n_seen: int
    n_unseen: int
    per_class_counts: Mapping[int, int] = field(default_factory=dict)
    images_available: bool = True

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise ValidationError(f"{self.dataset_id}: need p>0 and q>0, got p={self.p}, q={self.q}")
        if self.n_seen + self.n_unseen != self.n_total:
            raise ValidationError(
                f"{self.dataset_id}: n_seen+n_unseen={self.n_seen + self.n_unseen} != n_total={self.n_total}"
            )
        counts = {int(k): int(v) for k, v in dict(self.per_class_counts).items()}
        if counts:
            if set(counts) != set(range(1, self.p + self.q + 1)):
                raise ValidationError(f"{self.dataset_id}: per_class_counts must cover classes 1..{self.p + self.q}")
            if sum(counts[c] for c in self.seen_classes) != self.n_seen:
                raise ValidationError(f"{self.dataset_id}: seen class counts do not sum to n_seen")
            if sum(counts[c] for c in self.unseen_classes) != self.n_unseen:
                raise ValidationError(f"{self.dataset_id}: unseen class counts do not sum to n_unseen")
        object.__setattr__(self, "per_class_counts", counts)

    @property
    def n_classes(self) -> int:
        return self.p + self.q

    @property
    def seen_classes(self) -> tuple[int, ...]:
        return tuple(range(1, self.p + 1))

    @property
    def unseen_classes(self) -> tuple[int, ...]:
        return tuple(range(self.p + 1, self.p + self.q + 1))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["per_class_counts"] = {str(k): v for k, v in sorted(self.per_class_counts.items())}
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DatasetMeta":
        d = dict(d)
        d["per_class_counts"] = {int(k): int(v) for k, v in d.get("per_class_counts", {}).items()}
        return cls(**d)


@dataclass(frozen=True, eq=False)
class FeatureSet:
    X: np.ndarray
    y: np.ndarray
    provenance: VisualProvenance
    dataset_id: str
    n_classes: int | None = None

    def __post_init__(self):
        X = _frozen_array(self.X, np.float32)
        y = _frozen_array(self.y, np.int64)
        if X.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or len(y) != X.shape[0]:
            raise ValidationError(f"rows(X)={X.shape[0]} but len(y)={y.shape}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("feature matrix has non-finite entries")
        if len(y) and y.min() < 1:
            raise ValidationError("labels are dense integers starting at 1")
        if self.n_classes is not None and len(y) and y.max() > self.n_classes:
            raise ValidationError(f"label {int(y.max())} outside class set 1..{self.n_classes}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "provenance", VisualProvenance(self.provenance))

    def __len__(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "FeatureSet":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureSet(self.X[idx], self.y[idx], self.provenance, self.dataset_id, self.n_classes)

    def __eq__(self, other):
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return (
            self.provenance == other.provenance
            and self.dataset_id == other.dataset_id
            and self.n_classes == other.n_classes
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )

    def to_dict(self) -> dict:
        return {
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "provenance": self.provenance.value,
            "dataset_id": self.dataset_id,
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FeatureSet":
        X = np.asarray(d["X"], dtype=np.float32).reshape(len(d["y"]), -1)
        return cls(X, d["y"], d["provenance"], d["dataset_id"], d.get("n_classes"))


@dataclass(frozen=True, eq=False)
class SemanticTable:
    """One description row per class; row ``i`` describes class ``i+1``."""

    A: np.ndarray
    provenance: SemanticProvenance
    dataset_id: str

    def __post_init__(self):
        A = _frozen_array(self.A, np.float32)
        if A.ndim != 2 or A.shape[0] == 0:
            raise ValidationError(f"semantic table must be a non-empty 2-D matrix, got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValidationError("semantic table has non-finite rows")
        if len(np.unique(A, axis=0)) != A.shape[0]:
            raise ValidationError("semantic table has identical rows; classes would be indistinguishable")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "provenance", SemanticProvenance(self.provenance))

    @property
    def n_classes(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def rows(self, classes) -> np.ndarray:
        classes = np.asarray(classes, dtype=np.int64)
        if len(classes) and (classes.min() < 1 or classes.max() > self.n_classes):
            from gasl.errors import MissingDescription

            raise MissingDescription(f"no description for classes outside 1..{self.n_classes}")
        return self.A[classes - 1]

    def __eq__(self, other):
        if not isinstance(other, SemanticTable):
            return NotImplemented
        return (
            self.provenance == other.provenance
            and self.dataset_id == other.dataset_id
            and np.array_equal(self.A, other.A)
        )

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "provenance": self.provenance.value, "dataset_id": self.dataset_id}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SemanticTable":
        return cls(np.asarray(d["A"], dtype=np.float32), d["provenance"], d["dataset_id"])


_SPLIT_LISTS = ("train_seen", "train_unseen", "test_seen", "test_unseen")
_EMPTY_TRAIN_UNSEEN = {Task.ZSL, Task.GZSL, Task.SFSL, Task.GSFSL}
_EMPTY_TEST_SEEN = {Task.ZSL, Task.UFSL, Task.SFSL}


@dataclass(frozen=True, eq=False)
class SplitSpec:
    task: Task
    shots: int | None
    seed: int
    train_seen: np.ndarray
    train_unseen: np.ndarray
    test_seen: np.ndarray
    test_unseen: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        for name in _SPLIT_LISTS:
            object.__setattr__(self, name, _frozen_array(getattr(self, name), np.int64).reshape(-1))
        self._check()

    def _check(self):
        if self.task.few_shot != (self.shots is not None):
            raise ValidationError(f"{self.task.value}: shots must be given iff the task is few-shot")
        if self.task in _EMPTY_TRAIN_UNSEEN and len(self.train_unseen):
            raise ValidationError(f"{self.task.value} must have an empty train_unseen list")
        if self.task in _EMPTY_TEST_SEEN and len(self.test_seen):
            raise ValidationError(f"{self.task.value} must have an empty test_seen list")
        seen: set[int] = set()
        for name in _SPLIT_LISTS:
            lst = getattr(self, name)
            if len(np.unique(lst)) != len(lst) or seen.intersection(lst.tolist()):
                raise ValidationError(f"index list {name} overlaps another list or repeats an index")
            seen.update(lst.tolist())

    @classmethod
    def unchecked(cls, **kwargs) -> "SplitSpec":
        """Build without invariant checks (used to inject faults in validation tests)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "task", Task(kwargs["task"]))
        object.__setattr__(obj, "shots", kwargs.get("shots"))
        object.__setattr__(obj, "seed", kwargs.get("seed", 0))
        for name in _SPLIT_LISTS:
            object.__setattr__(obj, name, np.asarray(kwargs.get(name, []), dtype=np.int64).reshape(-1))
        return obj

    @property
    def train_indices(self) -> np.ndarray:
        return np.concatenate([self.train_seen, self.train_unseen])

    @property
    def test_indices(self) -> np.ndarray:
        return np.concatenate([self.test_seen, self.test_unseen])

    def __eq__(self, other):
        if not isinstance(other, SplitSpec):
            return NotImplemented
        return self.to_json() == other.to_json()

    def to_dict(self) -> dict:
        d = {"task": self.task.value, "shots": self.shots, "seed": self.seed}
        for name in _SPLIT_LISTS:
            d[name] = getattr(self, name).tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SplitSpec":
        return cls(**{k: d[k] for k in ("task", "shots", "seed", *_SPLIT_LISTS)})


@dataclass(frozen=True)
class HyperParams:
    beta: float = 1.0
    delta: float = 1.0
    gamma: float = 1.0
    xi: float = 1.0
    lambda_gp: float = 10.0
    epsilon: float = 0.15
    samc_margin: float = 1.0
    eta: float = 0.5
    K: int = 1
    latent_dim: int = 16
    noise_dim: int = 16
    hidden: int = 4096
    syn_per_class: int = 300
    lr: float = 1e-4
    classifier_lr: float = 1e-3
    epochs: int = 30
    classifier_epochs: int = 25
    batch_size: int = 64
    critic_iters: int = 5
    temperature: float = 1.0
    warmup_scale: float = 1.0

    def __post_init__(self):
        for name in ("beta", "delta", "gamma", "xi", "lambda_gp", "samc_margin"):
            if getattr(self, name) < 0:
                raise ValidationError(f"weight {name} must be >= 0")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be > 0")
        if not 0.0 <= self.eta <= 1.0:
            raise ValidationError("eta must lie in [0, 1]")
        if self.K < 1:
            raise ValidationError("K must be >= 1")
        if self.syn_per_class < 1:
            raise ValidationError("syn_per_class must be >= 1")
        for name in ("latent_dim", "noise_dim", "hidden", "epochs", "classifier_epochs", "batch_size", "critic_iters"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if self.lr <= 0 or self.classifier_lr <= 0 or self.temperature <= 0 or self.warmup_scale <= 0:
            raise ValidationError("learning rates, temperature and warmup_scale must be > 0")

    def replace(self, **changes) -> "HyperParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "HyperParams":
        return cls(**d)


def _harmonic(u: float, s: float) -> float:
    return 0.0 if u + s == 0 else 2.0 * s * u / (s + u)


@dataclass(frozen=True)
class ResultRecord:
    """Metrics of one experiment. Accuracies are percentages, times hours."""

    config_hash: str
    seed: int
    Z: float | None = None
    ZT: float | None = None
    U: float | None = None
    S: float | None = None
    H: float | None = None
    HT: float | None = None
    per_class_acc: Mapping[int, float] = field(default_factory=dict)
    dataset: str = ""
    model: str = ""
    task: str = ""
    shots: int | None = None
    provenance_x: str = ""
    provenance_a: str = ""
    best_epoch: int | None = None
    epochs: int | None = None

    def __post_init__(self):
        for name in ("Z", "U", "S", "H"):
            v = getattr(self, name)
            if v is not None and not (0.0 <= v <= 100.0 and math.isfinite(v)):
                raise ValidationError(f"{name}={v} outside [0, 100]")
        for name in ("ZT", "HT"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValidationError(f"{name} must be non-negative hours")
        if self.H is not None and (self.U == 0 or self.S == 0) and self.H != 0:
            raise ValidationError("H must be 0 when U or S is 0")
        object.__setattr__(self, "per_class_acc", {int(k): float(v) for k, v in dict(self.per_class_acc).items()})

    def h_mismatch(self) -> float:
        """Absolute gap between stored H and H recomputed from U and S."""
        if self.H is None or self.U is None or self.S is None:
            return 0.0
        return abs(self.H - _harmonic(self.U, self.S))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["per_class_acc"] = {str(k): v for k, v in sorted(self.per_class_acc.items())}
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ResultRecord":
        d = dict(d)
        d["per_class_acc"] = {int(k): float(v) for k, v in d.get("per_class_acc", {}).items()}
        return cls(**d)


def _canonical(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return _canonical(obj.to_dict())
        return _canonical(dataclasses.asdict(obj))
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, Mapping):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and obj.is_integer():
        # 1.0 and 1 must hash alike after a JSON round trip
        return int(obj)
    return obj


def fingerprint(config: Any) -> str:
    """Stable sha256 digest of a configuration (dataclass or mapping)."""
    payload = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


# ---------------------------------------------------------------------------
# on-disk containers: manifest.json + raw little-endian float32 row-major data


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    _atomic_write_bytes(Path(path), text.encode())


def write_feature_container(fs: FeatureSet, directory) -> Path:
    directory = Path(directory)
    raw = np.ascontiguousarray(fs.X, dtype="<f4")
    _atomic_write_bytes(directory / "features.f32", raw.tobytes())
    manifest = {
        "kind": "features",
        "dataset_id": fs.dataset_id,
        "n": int(len(fs)),
        "d_x": int(fs.dim),
        "provenance": fs.provenance.value,
        "labels": fs.y.tolist(),
        "n_classes": fs.n_classes,
        "checksum": _checksum(raw),
    }
    atomic_write_text(directory / "manifest.json", json.dumps(manifest))
    return directory


def read_feature_container(directory) -> FeatureSet:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
        raw = np.fromfile(directory / "features.f32", dtype="<f4")
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot read feature container {directory}: {exc}") from exc
    if raw.size != manifest["n"] * manifest["d_x"]:
        raise IngestError(f"{directory}: matrix has {raw.size} values, manifest says {manifest['n']}x{manifest['d_x']}")
    if _checksum(raw) != manifest["checksum"]:
        raise IngestError(f"{directory}: checksum mismatch")
    X = raw.reshape(manifest["n"], manifest["d_x"])
    return FeatureSet(X, manifest["labels"], manifest["provenance"], manifest["dataset_id"], manifest.get("n_classes"))


def write_semantic_container(st: SemanticTable, directory) -> Path:
    directory = Path(directory)
    raw = np.ascontiguousarray(st.A, dtype="<f4")
    _atomic_write_bytes(directory / "semantics.f32", raw.tobytes())
    manifest = {
        "kind": "semantics",
        "dataset_id": st.dataset_id,
        "n_classes": int(st.n_classes),
        "d_a": int(st.dim),
        "provenance": st.provenance.value,
        "checksum": _checksum(raw),
    }
    atomic_write_text(directory / "manifest.json", json.dumps(manifest))
    return directory


def read_semantic_container(directory) -> SemanticTable:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
        raw = np.fromfile(directory / "semantics.f32", dtype="<f4")
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot read semantic container {directory}: {exc}") from exc
    if raw.size != manifest["n_classes"] * manifest["d_a"]:
        raise IngestError(f"{directory}: semantic matrix size does not match manifest")
    if _checksum(raw) != manifest["checksum"]:
        raise IngestError(f"{directory}: checksum mismatch")
    return SemanticTable(raw.reshape(manifest["n_classes"], manifest["d_a"]), manifest["provenance"], manifest["dataset_id"])
