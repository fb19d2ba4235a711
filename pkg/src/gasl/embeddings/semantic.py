"""Character-level text encoders trained with joint visual-semantic embedding losses."""

from __future__ import annotations

import logging
import string
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from gasl.datamodel import FeatureSet, SemanticProvenance, SemanticTable
from gasl.errors import DegenerateInput, IngestError, MissingDescription, ValidationError
from gasl.generators.primitives import cosine_matrix
from gasl.seeding import derive_seed, rng

log = logging.getLogger(__name__)

VOCAB = string.printable
PAD = 0
MAX_LEN = 256
CORES = ("lstm_like", "gru_like")


def encode_text(text: str, max_len: int = MAX_LEN) -> np.ndarray:
    """Character ids (1-based over printable ASCII, 0 = padding), truncated/padded."""
    ids = [VOCAB.index(ch) + 1 for ch in text if ch in VOCAB][:max_len]
    out = np.zeros(max_len, dtype=np.int64)
    out[: len(ids)] = ids
    return out


class TextEncoder(nn.Module):
    """Char embedding -> 1-D conv -> recurrent core; output = mean hidden state over time."""

    def __init__(self, core: str = "gru_like", hidden: int = 1024, emb: int = 32, channels: int = 64,
                 visual_dim: int | None = None, alpha: float = 0.5):
        super().__init__()
        if core not in CORES:
            raise ValidationError(f"core must be one of {CORES}")
        self.core_kind = core
        self.hidden = hidden
        self.alpha = alpha
        self.embed = nn.Embedding(len(VOCAB) + 1, emb, padding_idx=PAD)
        self.conv = nn.Conv1d(emb, channels, kernel_size=3, padding=1)
        rnn = nn.GRU if core == "gru_like" else nn.LSTM
        self.rnn = rnn(channels, hidden, batch_first=True)
        self.visual = nn.Linear(visual_dim, hidden) if visual_dim else None

    def forward(self, ids):
        ids = torch.as_tensor(ids, dtype=torch.long)
        mask = (ids != PAD).float()
        h = F.relu(self.conv(self.embed(ids).transpose(1, 2))).transpose(1, 2)
        out, _ = self.rnn(h)
        denom = mask.sum(1, keepdim=True).clamp_min(1.0)
        return (out * mask[..., None]).sum(1) / denom

    @property
    def provenance(self) -> SemanticProvenance:
        if self.core_kind == "lstm_like":
            return SemanticProvenance.NAIVE
        return SemanticProvenance.GRU if self.alpha == 0.5 else SemanticProvenance.IMB_GRU


# -- losses -----------------------------------------------------------------
def sje_direction_loss(anchors, anchor_labels, pool, pool_labels) -> torch.Tensor:
    """mean_i max_y max(0, Gamma(y_i, y) + E_{pool of y}[C] - E_{pool of y_i}[C]).

    Expectations are per-class means of the cosine similarity over the pool;
    Gamma is the 0-1 loss.
    """
    if len(pool) == 0:
        raise DegenerateInput("empty comparison pool")
    anchor_labels = torch.as_tensor(anchor_labels, dtype=torch.long)
    pool_labels = torch.as_tensor(pool_labels, dtype=torch.long)
    classes = torch.unique(pool_labels)
    if not torch.isin(anchor_labels, classes).all():
        raise DegenerateInput("pool lacks an entry for an anchor's class")
    C = cosine_matrix(anchors, pool)
    onehot = (pool_labels[:, None] == classes[None, :]).to(C.dtype)
    S = (C @ onehot) / onehot.sum(0)  # (n, k) per-class mean similarity
    true_col = (anchor_labels[:, None] == classes[None, :]).to(C.dtype).argmax(1)
    s_true = S.gather(1, true_col[:, None])
    gamma = 1.0 - F.one_hot(true_col, len(classes)).to(C.dtype)
    return F.relu(gamma + S - s_true).max(1).values.mean()


def joint_embedding_loss(x, a, labels, alpha: float = 0.5) -> torch.Tensor:
    """(1-alpha) * visual-anchored + alpha * description-anchored loss."""
    return (1 - alpha) * sje_direction_loss(x, labels, a, labels) + alpha * sje_direction_loss(a, labels, x, labels)


# -- training ---------------------------------------------------------------
def _check_corpus(corpus, classes):
    missing = [c for c in classes if not corpus.get(c)]
    if missing:
        raise MissingDescription(f"no text for classes {missing[:10]}")


def train_text_encoder(corpus: dict, visual: FeatureSet, core: str = "gru_like", alpha: float = 0.5,
                       hidden: int = 1024, epochs: int = 10, lr: float = 1e-3, classes_per_batch: int = 8,
                       per_class: int = 4, max_len: int = MAX_LEN, seed: int = 0, steps_per_epoch: int | None = None):
    """Train on the classes present in ``visual`` only; returns (encoder, loss history)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    classes = sorted(int(c) for c in np.unique(visual.y))
    _check_corpus(corpus, classes)
    torch.manual_seed(derive_seed(seed, "text-init"))
    enc = TextEncoder(core, hidden, visual_dim=visual.dim, alpha=alpha)
    opt = torch.optim.Adam(enc.parameters(), lr=lr)
    gen = rng(seed, "text-batches")
    vis_rows = {c: np.where(visual.y == c)[0] for c in classes}
    steps = steps_per_epoch or max(1, len(classes) // min(classes_per_batch, len(classes)))
    history = []
    enc.train()
    for epoch in range(epochs):
        losses = []
        for _ in range(steps):
            batch_classes = gen.choice(classes, size=min(classes_per_batch, len(classes)), replace=False)
            texts, xs, ys = [], [], []
            for c in batch_classes:
                t_idx = gen.integers(len(corpus[c]), size=per_class)
                v_idx = gen.choice(vis_rows[c], size=per_class)
                texts += [encode_text(corpus[c][i], max_len) for i in t_idx]
                xs.append(visual.X[v_idx])
                ys += [int(c)] * per_class
            a = enc(np.stack(texts))
            x = enc.visual(torch.as_tensor(np.concatenate(xs)))
            loss = joint_embedding_loss(x, a, torch.tensor(ys), alpha)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        history.append(float(np.mean(losses)))
        log.info("text encoder epoch %d loss %.4f", epoch, history[-1])
    enc.eval()
    return enc, history


@torch.no_grad()
def class_embeddings(encoder: TextEncoder, corpus: dict, classes=None, dataset_id: str = "",
                     max_len: int = MAX_LEN) -> SemanticTable:
    """One row per class: the mean encoder output over that class's texts."""
    classes = sorted(corpus) if classes is None else [int(c) for c in classes]
    if classes != list(range(1, len(classes) + 1)):
        raise ValidationError("classes must be the dense range 1..C")
    _check_corpus(corpus, classes)
    encoder.eval()
    rows = []
    for c in classes:
        ids = np.stack([encode_text(t, max_len) for t in corpus[c]])
        rows.append(encoder(ids).mean(0).numpy())
    return SemanticTable(np.stack(rows), encoder.provenance, dataset_id)


# -- corpora ----------------------------------------------------------------
def read_corpus(root) -> dict[int, list[str]]:
    """Load ``<class_id>/<k>.txt`` files."""
    root = Path(root)
    if not root.is_dir():
        raise IngestError(f"corpus directory {root} does not exist")
    corpus = {}
    for cdir in sorted(root.iterdir()):
        if cdir.is_dir():
            try:
                cid = int(cdir.name)
            except ValueError:
                raise IngestError(f"corpus directory {cdir.name!r} is not an integer class id") from None
            corpus[cid] = [f.read_text(errors="replace") for f in sorted(cdir.glob("*.txt"))]
    return corpus


def toy_corpus(n_classes: int, texts_per_class: int = 5, length: int = 48, seed: int = 0) -> dict[int, list[str]]:
    """Class-correlated character strings: each class favours its own small word list."""
    gen = rng(seed, "toy-corpus")
    letters = np.array(list(string.ascii_lowercase))
    corpus = {}
    for c in range(1, n_classes + 1):
        words = ["".join(gen.choice(letters, size=gen.integers(3, 7))) for _ in range(4)]
        texts = []
        for _ in range(texts_per_class):
            parts, size = [], 0
            while size < length:
                w = words[gen.integers(len(words))] if gen.random() < 0.8 else "".join(gen.choice(letters, size=4))
                parts.append(w)
                size += len(w) + 1
            texts.append(" ".join(parts)[:length])
        corpus[c] = texts
    return corpus
