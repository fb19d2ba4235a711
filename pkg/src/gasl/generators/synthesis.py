"""Feature synthesis, classifier-input views and the counterfactual seen/unseen gate."""

from __future__ import annotations

import numpy as np
import torch

from gasl.datamodel import FeatureSet, VisualProvenance
from gasl.errors import MissingDescription, ValidationError
from gasl.generators.state import LatentBatch, ModelKind, ModelState
from gasl.seeding import torch_generator


def _check_classes(state: ModelState, classes):
    classes = [int(c) for c in classes]
    bad = [c for c in classes if c < 1 or c > state.n_classes]
    if bad:
        raise MissingDescription(f"no description for classes {bad}")
    return classes


@torch.no_grad()
def synthesize_features(state: ModelState, classes, n_per_class: int, seed: int = 0, A=None):
    """Draw ``n_per_class`` synthetic visual features for each class.

    Returns ``(FeatureSet, LatentBatch | None)``.  The latent batch carries
    the auxiliary representation the classifier of the kind consumes
    (CADA-VAE: latent codes; tf-VAEGAN / GCM-CF: decoder hidden features;
    FREE: decoder hidden features plus reconstructed descriptions).
    ``A`` optionally overrides the state's description table.
    """
    if n_per_class < 1:
        raise ValidationError("n_per_class must be >= 1")
    classes = _check_classes(state, classes)
    table = state.A if A is None else torch.tensor(np.asarray(A), dtype=torch.float32)
    if max(classes) > table.shape[0]:
        raise MissingDescription("description table has fewer rows than requested classes")
    y = torch.tensor(classes, dtype=torch.long).repeat_interleave(n_per_class)
    a = table[y - 1]
    gen = torch_generator(seed, "synth", state.kind.value)
    was_training = state.training
    state.eval()
    latent = None
    k = state.kind
    if k == ModelKind.CADAVAE:
        mu, logvar = state["E_a"](a)
        h = mu + torch.randn(mu.shape, generator=gen) * torch.exp(0.5 * logvar)
        x = state["G_x"](h)
        latent = LatentBatch(h, "encoder_sample")
    elif k == ModelKind.VAECFLOW:
        mu, logvar = state["E_a"](a)
        std = torch.exp(0.5 * logvar) * np.sqrt(state.hp.temperature)
        h = mu + torch.randn(mu.shape, generator=gen) * std
        x, _ = state["flow"].inverse(h, a)
    else:
        z = torch.randn(len(y), state.z_dim, generator=gen)
        x = state.generate(z, a)
        if state.has("Dec"):
            Dec = state["Dec"]
            a_hat = Dec(x) if k == ModelKind.FREE else None
            latent = LatentBatch(Dec.hidden(x), "feedback", a_hat)
    state.train(was_training)
    fs = FeatureSet(x.numpy(), y.numpy(), VisualProvenance.SYNTHETIC, "synthetic", state.n_classes)
    return fs, latent


@torch.no_grad()
def classifier_view(state: ModelState, X, latent: LatentBatch | None = None) -> np.ndarray:
    """Map features to the representation the final classifier is trained on.

    Real features are mapped through the state's own encoders; synthetic
    features pass their :class:`LatentBatch` so the stored latents are used.
    """
    X = torch.tensor(np.asarray(X), dtype=torch.float32)
    k = state.kind
    was_training = state.training
    state.eval()
    try:
        if k == ModelKind.CADAVAE:
            return (latent.h if latent is not None else state["E_x"](X)[0]).numpy()
        if k in (ModelKind.TFVAEGAN, ModelKind.GCMCF):
            h = latent.h if latent is not None else state["Dec"].hidden(X)
            return torch.cat([X, h], dim=1).numpy()
        if k == ModelKind.FREE:
            Dec = state["Dec"]
            h = latent.h if latent is not None else Dec.hidden(X)
            a_hat = latent.a_hat if latent is not None and latent.a_hat is not None else Dec(X)
            return torch.cat([X, h, a_hat], dim=1).numpy()
        return X.numpy()
    finally:
        state.train(was_training)


@torch.no_grad()
def faithful_distances(state: ModelState, X, classes) -> np.ndarray:
    """Min over ``classes`` of ||x - G(E(x, a_c), a_c)||, one value per row."""
    X = torch.tensor(np.asarray(X), dtype=torch.float32)
    best = torch.full((X.shape[0],), float("inf"))
    for c in _check_classes(state, classes):
        a = state.A[c - 1].expand(X.shape[0], -1)
        mu, _ = state["E"](torch.cat([X, a], dim=1))
        d = torch.linalg.vector_norm(X - state["G"](mu, a), dim=1)
        best = torch.minimum(best, d)
    return best.numpy()


def calibrate_gate(state: ModelState, X_seen_train, seen_classes=None, quantile: float = 0.95) -> float:
    """Threshold = quantile of faithful distances of seen training samples."""
    classes = tuple(state.train_classes if seen_classes is None else (int(c) for c in seen_classes))
    d = faithful_distances(state, X_seen_train, classes)
    state.gate_threshold = float(np.quantile(d, quantile))
    state.gate_classes = classes
    return state.gate_threshold


def counterfactual_seen_unseen_gate(state: ModelState, X, seen_classes=None, threshold: float | None = None) -> np.ndarray:
    """Boolean array, True where a sample is routed to the seen branch."""
    thr = state.gate_threshold if threshold is None else threshold
    if thr is None:
        raise ValidationError("gate threshold is not calibrated")
    if seen_classes is None:
        seen_classes = state.gate_classes or state.train_classes
    return faithful_distances(state, X, seen_classes) <= thr


@torch.no_grad()
def real_latents(state: ModelState, X) -> LatentBatch | None:
    """Latent features of real rows in the form the classifier composition expects."""
    X = torch.tensor(np.asarray(X), dtype=torch.float32)
    was_training = state.training
    state.eval()
    try:
        if state.kind == ModelKind.CADAVAE:
            return LatentBatch(state["E_x"](X)[0], "encoder_mean")
        if state.has("Dec"):
            Dec = state["Dec"]
            a_hat = Dec(X) if state.kind == ModelKind.FREE else None
            return LatentBatch(Dec.hidden(X), "feedback", a_hat)
        return None
    finally:
        state.train(was_training)
