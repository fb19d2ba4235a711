"""Training loop shared by all ten models."""

from __future__ import annotations

import logging

import numpy as np
import torch
import torch.nn.functional as F

from gasl.datamodel import HyperParams
from gasl.errors import NumericalError
from gasl.generators.objectives import critic_loss, objective_for, soul_samples, update_ema
from gasl.generators.state import ModelKind, ModelState
from gasl.generators.synthesis import calibrate_gate
from gasl.seeding import derive_seed, rng

log = logging.getLogger(__name__)


def pretrain_classifier(state: ModelState, X, y, epochs: int = 20, lr: float = 1e-3, seed: int = 0):
    """Fit the frozen softmax head the GAN kinds use for their cls term."""
    head = state["cls"]
    X = torch.tensor(np.asarray(X), dtype=torch.float32)
    y = torch.tensor(np.asarray(y), dtype=torch.long) - 1
    opt = torch.optim.Adam(head.parameters(), lr=lr)
    bs = state.hp.batch_size
    gen = rng(seed, "cls-pretrain")
    for _ in range(epochs):
        order = torch.as_tensor(gen.permutation(len(y)))
        for i in range(0, len(y), bs):
            idx = order[i : i + bs]
            opt.zero_grad()
            F.cross_entropy(head(X[idx]), y[idx]).backward()
            opt.step()
    for p in head.parameters():
        p.requires_grad_(False)
    state.cls_pretrained = True


def build_state(kind, X, y, A, hp: HyperParams, seed: int = 0, **kw) -> ModelState:
    train_classes = np.unique(np.asarray(y)).tolist()
    return ModelState(kind, np.asarray(X).shape[1], A, train_classes, hp, seed=seed, **kw)


def train_generator(state: ModelState, X, y, seed: int = 0, epochs: int | None = None, callback=None,
                    seen_classes=None) -> list[dict]:
    """Train ``state`` on real features (seen plus any few-shot unseen rows).

    ``callback(epoch, state)`` runs after each epoch.  ``seen_classes``
    restricts the GCM-CF gate calibration to the seen classes.  Returns the
    per-epoch mean loss values.
    """
    hp = state.hp
    epochs = hp.epochs if epochs is None else epochs
    X = torch.tensor(np.asarray(X), dtype=torch.float32)
    y_np = np.asarray(y, dtype=np.int64)
    y = torch.tensor(y_np)
    kind = state.kind
    objective = objective_for(kind)
    torch.manual_seed(derive_seed(seed, "train", kind.value))

    if kind.family == "gan" and not state.cls_pretrained:
        pretrain_classifier(state, X, y_np, lr=hp.classifier_lr, seed=seed)
    if kind == ModelKind.LSRGAN:
        state.set_real_means(X, y_np)

    groups = state.parameter_groups()
    opt = torch.optim.Adam(groups["main"], lr=hp.lr, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(groups["critic"], lr=hp.lr, betas=(0.5, 0.999)) if groups["critic"] else None
    gen = rng(seed, "batches")
    history = []
    state.train()
    for epoch in range(epochs):
        if kind == ModelKind.LISGAN:
            state.set_soul_samples(soul_samples(X.numpy(), y_np, hp.K, derive_seed(seed, "soul", epoch)))
        order = torch.as_tensor(gen.permutation(len(y)))
        sums, n_batches = {}, 0
        for b, i in enumerate(range(0, len(y), hp.batch_size)):
            idx = order[i : i + hp.batch_size]
            xb, yb = X[idx], y[idx]
            step_seed = derive_seed(seed, epoch, b)
            if opt_d is not None:
                for k in range(hp.critic_iters):
                    opt_d.zero_grad()
                    critic_loss(state, xb, yb, derive_seed(step_seed, "critic", k)).backward()
                    opt_d.step()
            out = objective(state, xb, yb, seed=step_seed, epoch=epoch)
            loss = out.total + sum(out.aux.values(), torch.zeros(()))
            if not torch.isfinite(loss):
                raise NumericalError(f"{kind.value}: non-finite loss at epoch {epoch}")
            opt.zero_grad()
            if opt_d is not None:
                opt_d.zero_grad()
            loss.backward()
            opt.step()
            if "gen_means" in out.extras:
                update_ema(state, *out.extras["gen_means"])
            for k, v in out.values().items():
                sums[k] = sums.get(k, 0.0) + v
            n_batches += 1
        record = {k: v / max(n_batches, 1) for k, v in sums.items()}
        record["epoch"] = epoch
        history.append(record)
        log.debug("%s epoch %d: %s", kind.value, epoch, record)
        if callback is not None:
            callback(epoch, state)
    state.eval()
    if kind == ModelKind.GCMCF:
        seen = state.train_classes if seen_classes is None else tuple(seen_classes)
        calibrate_gate(state, X[torch.as_tensor(np.isin(y_np, seen))], seen)
    return history
