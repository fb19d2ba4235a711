"""Experiment configuration (JSON document mirroring :class:`ExperimentConfig`)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from gasl.datamodel import HyperParams, SemanticProvenance, Task, VisualProvenance, fingerprint
from gasl.errors import ConfigError, ValidationError
from gasl.generators.state import ModelKind

RESULTS_ENV = "GASL_RESULTS_DIR"


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    p: int = 8
    q: int = 4
    d_x: int = 32
    d_a: int = 16
    per_class: int = 50
    noise: float = 0.5
    seed: int = 0
    test_seen_fraction: float = 0.2

    def __post_init__(self):
        for name in ("p", "q", "d_x", "d_a"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if self.per_class < 2:
            raise ValidationError("samples per class must be >= 2")
        if self.noise < 0:
            raise ValidationError("noise scale must be >= 0")
        if not 0.0 < self.test_seen_fraction < 1.0:
            raise ValidationError("test_seen_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SyntheticDatasetSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic-spec fields {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.

    Data comes from exactly one of ``synthetic`` (a :class:`SyntheticDatasetSpec`)
    or ``data_dir`` (feature/semantic containers plus ``partition.json``, or a
    community split archive).
    """

    dataset_id: str
    model: ModelKind
    task: Task
    shots: int | None = None
    provenance_x: VisualProvenance = VisualProvenance.ORIGINAL
    provenance_a: SemanticProvenance = SemanticProvenance.ATTRIBUTES
    hp: HyperParams = field(default_factory=HyperParams)
    schedule: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0
    output: str | None = None
    synthetic: SyntheticDatasetSpec | None = None
    data_dir: str | None = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "model", ModelKind(self.model))
            object.__setattr__(self, "task", Task(self.task))
            object.__setattr__(self, "provenance_x", VisualProvenance(self.provenance_x))
            object.__setattr__(self, "provenance_a", SemanticProvenance(self.provenance_a))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.task.few_shot and self.shots is None:
            raise ConfigError(f"{self.task.value} needs a shot count")
        if not self.task.few_shot and self.shots is not None:
            raise ConfigError(f"{self.task.value} takes no shot count")
        if self.shots is not None and self.shots < 1:
            raise ConfigError("shots must be >= 1")
        if (self.synthetic is None) == (self.data_dir is None):
            raise ConfigError("exactly one of 'synthetic' and 'data_dir' must be given")

    @property
    def fingerprint(self) -> str:
        d = self.to_dict()
        d.pop("output", None)
        return fingerprint(d)

    def results_dir(self) -> Path:
        root = os.environ.get(RESULTS_ENV) or self.output or "results"
        return Path(root)

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "model": self.model.value,
            "task": self.task.value,
            "shots": self.shots,
            "provenance_x": self.provenance_x.value,
            "provenance_a": self.provenance_a.value,
            "hp": self.hp.to_dict(),
            "schedule": dict(self.schedule),
            "seed": self.seed,
            "output": self.output,
            "synthetic": self.synthetic.to_dict() if self.synthetic else None,
            "data_dir": self.data_dir,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        for key in ("dataset_id", "model", "task"):
            if key not in d:
                raise ConfigError(f"config is missing {key!r}")
        try:
            d["hp"] = HyperParams.from_dict(d.get("hp") or {})
        except (TypeError, ValidationError) as exc:
            raise ConfigError(f"bad hyperparameters: {exc}") from None
        if d.get("synthetic") is not None:
            try:
                d["synthetic"] = SyntheticDatasetSpec.from_dict(d["synthetic"])
            except ValidationError as exc:
                raise ConfigError(f"bad synthetic spec: {exc}") from None
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(d)


# Small networks and schedules that train all ten models on the synthetic
# dataset in minutes on one CPU core.
TOY_HP = HyperParams(
    hidden=64,
    latent_dim=16,
    noise_dim=16,
    lr=1e-3,
    classifier_lr=1e-2,
    epochs=50,
    classifier_epochs=25,
    batch_size=32,
    critic_iters=2,
    syn_per_class=50,
    beta=0.1,
    delta=1.0,
    gamma=0.1,
    xi=0.1,
    lambda_gp=1.0,
    warmup_scale=0.2,
)

# Per-model departures from TOY_HP.  CADA-VAE trains its classifier in the
# shared latent space, which needs a stronger reconstruction and alignment
# weight and more synthetic latents at this scale.
TOY_OVERRIDES = {
    ModelKind.CADAVAE: {"beta": 1.0, "gamma": 4.0, "syn_per_class": 100},
}


def toy_hp(model) -> HyperParams:
    return TOY_HP.replace(**TOY_OVERRIDES.get(ModelKind(model), {}))
