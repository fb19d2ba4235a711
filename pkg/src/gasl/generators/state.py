"""ModelState: parameters and auxiliary state of one embedding-aware generative model."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from gasl.datamodel import HyperParams
from gasl.errors import ConfigError, MissingDescription, ValidationError
from gasl.generators.networks import (
    MLP,
    ConditionalFlow,
    Critic,
    GaussianEncoder,
    Generator,
    SemanticDecoder,
)
from gasl.seeding import derive_seed


class ModelKind(str, enum.Enum):
    FCLSWGAN = "fclswgan"
    LISGAN = "lisgan"
    LSRGAN = "lsrgan"
    CVAE = "cvae"
    CADAVAE = "cadavae"
    VAECFLOW = "vaecflow"
    FVAEGAND2 = "fvaegand2"
    TFVAEGAN = "tfvaegan"
    FREE = "free"
    GCMCF = "gcmcf"

    @property
    def family(self) -> str:
        if self in (ModelKind.FCLSWGAN, ModelKind.LISGAN, ModelKind.LSRGAN):
            return "gan"
        if self in (ModelKind.CVAE, ModelKind.CADAVAE, ModelKind.VAECFLOW):
            return "vae"
        return "vaegan"


# Components each kind must carry (and no others).
REQUIRED = {
    ModelKind.FCLSWGAN: {"G", "D", "cls"},
    ModelKind.LISGAN: {"G", "D", "cls"},
    ModelKind.LSRGAN: {"G", "D", "cls"},
    ModelKind.CVAE: {"E", "G"},
    ModelKind.CADAVAE: {"E_x", "E_a", "G_x", "G_a"},
    ModelKind.VAECFLOW: {"E_a", "G_a", "flow", "hcls"},
    ModelKind.FVAEGAND2: {"E", "G", "D"},
    ModelKind.TFVAEGAN: {"E", "G", "D", "Dec"},
    ModelKind.FREE: {"E", "G", "D", "Dec", "samc_head"},
    ModelKind.GCMCF: {"E", "G", "D", "Dec"},
}


@dataclass
class LatentBatch:
    h: torch.Tensor
    source: str
    a_hat: torch.Tensor | None = None

    SOURCES = ("encoder_mean", "encoder_sample", "feedback")

    def __post_init__(self):
        if self.source not in self.SOURCES:
            raise ValidationError(f"unknown latent source {self.source!r}")
        if not torch.all(torch.isfinite(self.h)):
            raise ValidationError("latent batch has non-finite entries")


class ModelState(nn.Module):
    """Components of one model plus class descriptions and auxiliary buffers.

    ``train_classes`` are the classes with real training samples; the
    remaining classes are "novel" and only ever reached through their
    descriptions.
    """

    def __init__(self, kind, d_x, A, train_classes, hp: HyperParams, seed: int = 0, feedback: bool | None = None):
        super().__init__()
        self.kind = ModelKind(kind)
        self.hp = hp
        self.seed = int(seed)
        self.d_x = int(d_x)
        A = torch.tensor(np.array(A, dtype=np.float32))
        self.register_buffer("A", A)
        self.n_classes = A.shape[0]
        self.d_a = A.shape[1]
        self.train_classes = tuple(sorted(int(c) for c in train_classes))
        if not self.train_classes or min(self.train_classes) < 1 or max(self.train_classes) > self.n_classes:
            raise MissingDescription("training classes must all have a description row")
        self.novel_classes = tuple(c for c in range(1, self.n_classes + 1) if c not in self.train_classes)
        self.feedback = (self.kind == ModelKind.TFVAEGAN) if feedback is None else bool(feedback)

        torch.manual_seed(derive_seed(seed, "init", self.kind.value))
        self.parts = nn.ModuleDict(self._build())
        self.cls_pretrained = False
        self.register_buffer("soul", torch.zeros(0))
        self.register_buffer("soul_mask", torch.zeros(0, dtype=torch.bool))
        self.register_buffer("real_means", torch.zeros(self.n_classes, self.d_x))
        self.register_buffer("ema_means", torch.zeros(self.n_classes, self.d_x))
        self.register_buffer("ema_ready", torch.zeros(self.n_classes, dtype=torch.bool))
        if self.kind == ModelKind.FREE:
            self.centers = nn.Parameter(torch.zeros(self.n_classes, hp.latent_dim))
        self.gate_threshold: float | None = None
        self.gate_classes: tuple[int, ...] = ()
        self._check_components()

    # -- construction -----------------------------------------------------
    @property
    def z_dim(self) -> int:
        return self.hp.noise_dim if self.kind.family == "gan" else self.hp.latent_dim

    def _build(self) -> dict:
        hp, dx, da, C, H, L = self.hp, self.d_x, self.d_a, self.n_classes, self.hp.hidden, self.hp.latent_dim
        k = self.kind
        parts = {}
        if k.family == "gan":
            parts["G"] = Generator(hp.noise_dim, da, H, dx)
            parts["D"] = Critic(dx, da, H)
            parts["cls"] = nn.Linear(dx, C)
        elif k == ModelKind.CVAE:
            parts["E"] = GaussianEncoder(dx + da, H, L)
            parts["G"] = Generator(L, da, H, dx)
        elif k == ModelKind.CADAVAE:
            parts["E_x"] = GaussianEncoder(dx, H, L)
            parts["E_a"] = GaussianEncoder(da, H, L)
            parts["G_x"] = MLP(L, H, dx)
            parts["G_a"] = MLP(L, H, da)
        elif k == ModelKind.VAECFLOW:
            parts["E_a"] = GaussianEncoder(da, H, dx)
            parts["G_a"] = MLP(dx, H, da)
            parts["flow"] = ConditionalFlow(dx, da, H, n_blocks=4)
            parts["hcls"] = nn.Linear(dx, C)
        else:
            parts["E"] = GaussianEncoder(dx + da, H, L)
            parts["G"] = Generator(L, da, H, dx, feedback_dim=L if self.feedback else None)
            parts["D"] = Critic(dx, da, H)
            if k in (ModelKind.TFVAEGAN, ModelKind.FREE, ModelKind.GCMCF):
                parts["Dec"] = SemanticDecoder(dx, L, da)
            if k == ModelKind.FREE:
                parts["samc_head"] = nn.Linear(L, L)
        return parts

    def _check_components(self):
        have = set(self.parts.keys())
        if have != REQUIRED[self.kind]:
            raise ValidationError(f"{self.kind.value} needs components {sorted(REQUIRED[self.kind])}, has {sorted(have)}")

    def __getitem__(self, name):
        try:
            return self.parts[name]
        except KeyError:
            raise ConfigError(f"{self.kind.value} has no component {name!r}") from None

    def has(self, name) -> bool:
        return name in self.parts

    # -- helpers ----------------------------------------------------------
    def descriptions(self, labels) -> torch.Tensor:
        labels = torch.as_tensor(labels, dtype=torch.long)
        if labels.numel() and (labels.min() < 1 or labels.max() > self.n_classes):
            raise MissingDescription(f"labels outside 1..{self.n_classes} have no description")
        return self.A[labels - 1]

    def generate(self, z, a):
        """G(z, a), including the feedback pass when the state has one."""
        G = self["G"]
        x = G(z, a)
        if self.feedback and self.has("Dec"):
            x = G(z, a, feedback=self["Dec"].hidden(x))
        return x

    def set_soul_samples(self, souls: dict[int, np.ndarray]):
        K = max(len(v) for v in souls.values())
        soul = torch.zeros(self.n_classes, K, self.d_x)
        mask = torch.zeros(self.n_classes, K, dtype=torch.bool)
        for c, cent in souls.items():
            cent = torch.tensor(np.asarray(cent), dtype=torch.float32)
            soul[c - 1, : len(cent)] = cent
            mask[c - 1, : len(cent)] = True
        self.soul = soul
        self.soul_mask = mask

    def set_real_means(self, X, y):
        X = torch.tensor(np.asarray(X), dtype=torch.float32)
        y = torch.tensor(np.asarray(y), dtype=torch.long)
        means = torch.zeros(self.n_classes, self.d_x)
        for c in self.train_classes:
            sel = y == c
            if sel.any():
                means[c - 1] = X[sel].mean(0)
        self.real_means = means

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        """Critic parameters vs everything trained by the main objective."""
        critic = list(self["D"].parameters()) if self.has("D") else []
        frozen = set()
        if self.has("cls"):
            frozen = {id(p) for p in self["cls"].parameters()}
        critic_ids = {id(p) for p in critic}
        main = [p for p in self.parameters() if id(p) not in critic_ids and id(p) not in frozen]
        return {"critic": critic, "main": main}
