"""Visual feature provenances: naive extraction and (regularized) finetuning of a backbone."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from gasl.datamodel import FeatureSet, VisualProvenance
from gasl.errors import IngestError, MissingDescription, ProtocolViolation, ValidationError
from gasl.generators.primitives import cosine_similarity
from gasl.seeding import derive_seed, rng

log = logging.getLogger(__name__)

RESIZE = 256
CROP = 224
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)
IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".gif", ".ppm", ".tif", ".tiff", ".webp"}


# -- images ---------------------------------------------------------------
def preprocess(img: Image.Image, resize: int = RESIZE, crop: int = CROP) -> torch.Tensor:
    """Resize to resize x resize, center-crop to crop x crop, normalize; returns (3, crop, crop)."""
    img = img.convert("RGB").resize((resize, resize), Image.BILINEAR)
    off = (resize - crop) // 2
    img = img.crop((off, off, off + crop, off + crop))
    arr = (np.asarray(img, dtype=np.float32) / 255.0 - IMAGENET_MEAN) / IMAGENET_STD
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def load_image(path) -> torch.Tensor:
    try:
        with Image.open(path) as img:
            return preprocess(img)
    except (UnidentifiedImageError, OSError) as exc:
        raise IngestError(f"cannot decode image {path}: {exc}") from exc


def scan_image_folder(root) -> tuple[list[Path], np.ndarray]:
    """Collect ``<class_id>/<file>`` images; class ids are integers >= 1."""
    root = Path(root)
    paths, labels = [], []
    if not root.is_dir():
        raise IngestError(f"image directory {root} does not exist")
    for cdir in sorted(root.iterdir(), key=lambda p: p.name):
        if not cdir.is_dir():
            continue
        try:
            cid = int(cdir.name)
        except ValueError:
            raise IngestError(f"class directory {cdir.name!r} is not an integer class id") from None
        for f in sorted(cdir.iterdir()):
            if f.suffix.lower() in IMAGE_SUFFIXES:
                paths.append(f)
                labels.append(cid)
    if not paths:
        raise IngestError(f"no images found under {root}")
    return paths, np.asarray(labels, dtype=np.int64)


class ImageSource:
    """Images given either as file paths or as an already preprocessed tensor."""

    def __init__(self, images):
        if isinstance(images, torch.Tensor):
            if images.dim() != 4:
                raise ValidationError("image tensor must have shape (n, 3, H, W)")
            self.tensor, self.paths = images.float(), None
        else:
            self.tensor, self.paths = None, [Path(p) for p in images]

    def __len__(self):
        return len(self.tensor) if self.tensor is not None else len(self.paths)

    def batch(self, idx) -> torch.Tensor:
        if self.tensor is not None:
            return self.tensor[torch.as_tensor(idx, dtype=torch.long)]
        return torch.stack([load_image(self.paths[i]) for i in idx])


# -- backbones ------------------------------------------------------------
class ToyBackbone(nn.Module):
    """Seeded random-projection encoder: average-pool to a small grid, then linear + ReLU."""

    def __init__(self, out_dim: int = 64, grid: int = 8, seed: int = 0):
        super().__init__()
        self.grid = grid
        gen = torch.Generator().manual_seed(derive_seed(seed, "toy-backbone"))
        self.proj = nn.Linear(3 * grid * grid, out_dim)
        with torch.no_grad():
            self.proj.weight.copy_(torch.randn(out_dim, 3 * grid * grid, generator=gen) / np.sqrt(3 * grid * grid))
            self.proj.bias.zero_()
        self.out_dim = out_dim

    def forward(self, images):
        pooled = F.adaptive_avg_pool2d(images, self.grid).flatten(1)
        return F.relu(self.proj(pooled))


def resnet101_backbone(pretrained: bool = False) -> nn.Module:
    """ResNet101 trunk returning 2048-dim pooled features (needs torchvision)."""
    try:
        import torchvision
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise ValidationError("torchvision is required for the ResNet101 backbone") from exc
    weights = torchvision.models.ResNet101_Weights.IMAGENET1K_V1 if pretrained else None
    net = torchvision.models.resnet101(weights=weights)
    net.fc = nn.Identity()
    net.out_dim = 2048
    return net


@dataclass
class BackboneHandle:
    """An image encoder plus the classifier head used while finetuning."""

    encoder: nn.Module
    out_dim: int
    head: nn.Module | None = None
    resize: int = RESIZE
    crop: int = CROP

    @classmethod
    def toy(cls, out_dim: int = 64, seed: int = 0) -> "BackboneHandle":
        return cls(ToyBackbone(out_dim, seed=seed), out_dim)

    @classmethod
    def resnet101(cls, pretrained: bool = False) -> "BackboneHandle":
        return cls(resnet101_backbone(pretrained), 2048)

    @torch.no_grad()
    def embed(self, batch: torch.Tensor) -> torch.Tensor:
        self.encoder.eval()
        return self.encoder(batch)


# -- extraction -------------------------------------------------------------
def extract_features(images, labels, backbone: BackboneHandle, provenance=VisualProvenance.NAIVE,
                     dataset_id: str = "", batch_size: int = 32, n_classes: int | None = None) -> FeatureSet:
    src = ImageSource(images)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(src):
        raise ValidationError(f"{len(src)} images but {len(labels)} labels")
    rows = []
    for i in range(0, len(src), batch_size):
        rows.append(backbone.embed(src.batch(range(i, min(i + batch_size, len(src))))).numpy())
    X = np.concatenate(rows) if rows else np.zeros((0, backbone.out_dim), np.float32)
    return FeatureSet(X, labels, provenance, dataset_id, n_classes)


def extract_naive(images, labels, backbone: BackboneHandle, **kw) -> FeatureSet:
    return extract_features(images, labels, backbone, VisualProvenance.NAIVE, **kw)


# -- finetuning -------------------------------------------------------------
@dataclass(frozen=True)
class VisualFinetuneConfig:
    alpha_se: float = 0.0
    delta_se: float = 1.0
    lambda_se: float = 0.9
    lr: float = 0.01
    momentum: float = 0.9
    decay: float = 0.1
    decay_every: int = 7
    epochs: int = 10
    batch_size: int = 32
    printed_sign: bool = False  # literal sign of the printed regularizer (rewards misalignment)

    def __post_init__(self):
        if not 0.0 < self.lambda_se < 1.0:
            raise ValidationError("lambda_se must lie in (0, 1)")
        if self.alpha_se < 0 or self.delta_se < 0:
            raise ValidationError("alpha_se and delta_se must be >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.decay_every < 1:
            raise ValidationError("epochs, batch_size and decay_every must be positive")

    @classmethod
    def for_dataset(cls, name: str, **kw) -> "VisualFinetuneConfig":
        from gasl.datasets import REGULARIZED_FINETUNE

        try:
            alpha, delta, lam = REGULARIZED_FINETUNE[name.upper()]
        except KeyError:
            raise ValidationError(f"no regularized-finetune settings for {name!r}") from None
        return cls(alpha_se=alpha, delta_se=delta, lambda_se=lam, **kw)


def lr_at(epoch: int, cfg: VisualFinetuneConfig = VisualFinetuneConfig()) -> float:
    return cfg.lr * cfg.decay ** (epoch // cfg.decay_every)


def semantic_regularizer(x, a_pos, a_neg, delta: float, lam: float, printed_sign: bool = False):
    """Mean hinge max(0, delta - lam*C(x, a_pos) + (1-lam)*C(x, a_neg)).

    ``printed_sign=True`` evaluates max(0, delta + lam*C(x, a_pos) - (1-lam)*C(x, a_neg)).
    """
    c_pos = cosine_similarity(x, a_pos)
    c_neg = cosine_similarity(x, a_neg)
    if printed_sign:
        val = delta + lam * c_pos - (1 - lam) * c_neg
    else:
        val = delta - lam * c_pos + (1 - lam) * c_neg
    return F.relu(val).mean()


def sample_negatives(labels, seen_classes, seed) -> np.ndarray:
    """One other seen class per element, uniformly at random."""
    gen = rng(seed, "negatives")
    seen = np.asarray(sorted(seen_classes))
    if len(seen) < 2:
        raise ValidationError("negative descriptions need at least two seen classes")
    out = np.empty(len(labels), dtype=np.int64)
    for i, y in enumerate(np.asarray(labels)):
        others = seen[seen != y]
        out[i] = others[gen.integers(len(others))]
    return out


def _check_protocol(labels, p):
    labels = np.asarray(labels)
    if np.any(labels > p) or np.any(labels < 1):
        bad = np.unique(labels[(labels > p) | (labels < 1)])
        raise ProtocolViolation(f"finetuning data contains non-seen classes {bad[:10].tolist()}")


def _finetune(backbone: BackboneHandle, images, labels, p: int, cfg: VisualFinetuneConfig, A=None, seed: int = 0):
    _check_protocol(labels, p)
    src = ImageSource(images)
    labels = np.asarray(labels, dtype=np.int64)
    torch.manual_seed(derive_seed(seed, "finetune"))
    if backbone.head is None:
        backbone.head = nn.Linear(backbone.out_dim, p)
    params = list(backbone.encoder.parameters()) + list(backbone.head.parameters())
    proj = None
    if A is not None and cfg.alpha_se > 0:
        A = torch.tensor(np.asarray(A), dtype=torch.float32)
        if A.shape[0] < p:
            raise MissingDescription("semantic table does not cover every seen class")
        # Visual features and descriptions live in different spaces; a learned
        # projection maps features into the description space for the cosine.
        proj = nn.Linear(backbone.out_dim, A.shape[1], bias=False)
        params += list(proj.parameters())
    opt = torch.optim.SGD(params, lr=cfg.lr, momentum=cfg.momentum)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=cfg.decay_every, gamma=cfg.decay)
    gen = rng(seed, "finetune-batches")
    history = []
    backbone.encoder.train()
    for epoch in range(cfg.epochs):
        order = gen.permutation(len(labels))
        total, n = 0.0, 0
        for b, i in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[i : i + cfg.batch_size]
            feats = backbone.encoder(src.batch(idx))
            y = torch.as_tensor(labels[idx])
            loss = F.cross_entropy(backbone.head(feats), y - 1)
            if proj is not None:
                neg = torch.as_tensor(sample_negatives(labels[idx], range(1, p + 1), derive_seed(seed, epoch, b)))
                se = semantic_regularizer(proj(feats), A[y - 1], A[neg - 1], cfg.delta_se, cfg.lambda_se, cfg.printed_sign)
                loss = loss + cfg.alpha_se * se
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            n += len(idx)
        sched.step()
        history.append(total / n)
        log.info("finetune epoch %d loss %.4f lr %.5f", epoch, history[-1], opt.param_groups[0]["lr"])
    backbone.encoder.eval()
    return backbone, history


def finetune_ce(backbone: BackboneHandle, images, labels, p: int, cfg: VisualFinetuneConfig | None = None, seed: int = 0):
    """Cross-entropy finetuning on seen-class training images; returns (backbone, loss history)."""
    cfg = cfg or VisualFinetuneConfig()
    return _finetune(backbone, images, labels, p, VisualFinetuneConfig(**{**cfg.__dict__, "alpha_se": 0.0}), None, seed)


def finetune_regularized(backbone: BackboneHandle, images, labels, p: int, A, cfg: VisualFinetuneConfig, seed: int = 0):
    """Cross-entropy plus alpha times the semantic alignment hinge."""
    return _finetune(backbone, images, labels, p, cfg, A, seed)
