"""The ten generative objectives, built from shared WGAN / CVAE / VAEGAN parts.

Every objective has the signature ``(state, x, y, seed=0, epoch=None,
x_u=None, y_u=None)`` and returns a :class:`LossBreakdown`.  A few-shot
unseen batch (x_u, y_u) is simply concatenated onto the seen batch.
Randomness (noise, reparameterization, interpolation weights) comes from
torch generators derived from ``seed``, so a call is a pure function of
its arguments and the current parameters.

WGAN sign convention: the ``wgan`` term is E[D(real)] - E[D(fake)] + GP with
the penalty evaluated on detached interpolates, so minimizing the total
w.r.t. the generator is minimizing -E[D(fake)].  The critic is trained on
:func:`critic_loss` (E[D(fake)] - E[D(real)] + GP).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from gasl.errors import ClusterError, ConfigError, Unsupported, ValidationError
from gasl.generators.primitives import (
    abs_error,
    counterfactual_contrastive,
    cosine_matrix,
    gaussian_nll,
    gradient_penalty,
    kl_diag_gaussian,
    margin_center_loss,
    squared_error,
    tube_hinge,
    wasserstein2_diag,
)
from gasl.generators.state import ModelKind, ModelState
from gasl.seeding import derive_seed, rng, torch_generator

CF_POOL_CAP = 32
KMEANS_ITERS = 20


@dataclass
class LossBreakdown:
    """Named terms and their weights; ``total`` is the weighted sum.

    ``aux`` holds losses optimized alongside but outside the composition
    (e.g. the GCM-CF semantic decoder); ``extras`` carries tensors the
    training loop needs (generated class means and so on).
    """

    terms: dict[str, torch.Tensor]
    weights: dict[str, float]
    aux: dict[str, torch.Tensor] = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def total(self) -> torch.Tensor:
        out = None
        for name, w in self.weights.items():
            part = w * self.terms[name]
            out = part if out is None else out + part
        return out

    def values(self) -> dict[str, float]:
        vals = {k: float(v.detach()) for k, v in self.terms.items()}
        vals["total"] = float(self.total.detach())
        return vals


def _labels(y) -> torch.Tensor:
    if isinstance(y, torch.Tensor):
        return y.long()
    return torch.tensor(np.asarray(y), dtype=torch.long)


def _float(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x if x.is_floating_point() else x.float()
    return torch.tensor(np.asarray(x), dtype=torch.float32)


def _union(x, y, x_u, y_u):
    x = _float(x)
    y = _labels(y)
    if x_u is not None and len(x_u):
        x = torch.cat([x, _float(x_u)])
        y = torch.cat([y, _labels(y_u)])
    if x.shape[0] != y.shape[0]:
        raise ValidationError(f"{x.shape[0]} features but {y.shape[0]} labels")
    return x, y


def _noise(n, dim, gen, dtype=torch.float32):
    return torch.randn(n, dim, generator=gen).to(dtype)


def _reparam(mu, logvar, gen):
    return mu + torch.randn(mu.shape, generator=gen).to(mu.dtype) * torch.exp(0.5 * logvar)


def _class_means(x, y, classes):
    return torch.stack([x[y == c].mean(0) for c in classes])


# -- shared building blocks ------------------------------------------------
def wgan_terms(state: ModelState, x, a, seed, fake=None):
    """(wgan, fake) with wgan = E[D(x)] - E[D(fake)] + GP."""
    D = state["D"]
    if fake is None:
        z = _noise(x.shape[0], state.z_dim, torch_generator(seed, "noise"), x.dtype)
        fake = state.generate(z, a)
    gp = gradient_penalty(D, x, fake.detach(), a, state.hp.lambda_gp, torch_generator(seed, "gp"))
    return D(x, a).mean() - D(fake, a).mean() + gp, fake


def critic_loss(state: ModelState, x, y, seed: int = 0, x_u=None, y_u=None) -> torch.Tensor:
    """Critic objective to minimize: E[D(fake)] - E[D(real)] + GP."""
    x, y = _union(x, y, x_u, y_u)
    a = state.descriptions(y)
    D = state["D"]
    with torch.no_grad():
        fake = state.generate(_noise(x.shape[0], state.z_dim, torch_generator(seed, "noise"), x.dtype), a)
    gp = gradient_penalty(D, x, fake, a, state.hp.lambda_gp, torch_generator(seed, "gp"))
    return D(fake, a).mean() - D(x, a).mean() + gp


def cvae_terms(state: ModelState, x, a, seed):
    """(kl, rec, h) of the conditional VAE E(x, a) -> h -> G(h, a)."""
    mu, logvar = state["E"](torch.cat([x, a], dim=1))
    h = _reparam(mu, logvar, torch_generator(seed, "reparam"))
    recon = state["G"](h, a)
    return kl_diag_gaussian(mu, logvar), squared_error(x, recon), mu


def _require_cls(state):
    if not state.has("cls") or not state.cls_pretrained:
        raise ConfigError(f"{state.kind.value} needs a pretrained classifier head for the cls term")


def _gan_base(state, x, y, seed):
    _require_cls(state)
    a = state.descriptions(y)
    wgan, fake = wgan_terms(state, x, a, seed)
    cls = F.cross_entropy(state["cls"](fake), y - 1)
    return {"wgan": wgan, "cls": cls}, fake


# -- GAN family -------------------------------------------------------------
def wgan_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None) -> LossBreakdown:
    x, y = _union(x, y, x_u, y_u)
    wgan, _ = wgan_terms(state, x, state.descriptions(y), seed)
    return LossBreakdown({"wgan": wgan}, {"wgan": 1.0})


def fclswgan_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None) -> LossBreakdown:
    x, y = _union(x, y, x_u, y_u)
    terms, _ = _gan_base(state, x, y, seed)
    return LossBreakdown(terms, {"wgan": 1.0, "cls": state.hp.beta})


def soul_samples(features, labels, K: int, seed: int = 0) -> dict[int, np.ndarray]:
    """K k-means centroids per class (seeded init from distinct rows, fixed iterations)."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if K < 1:
        raise ClusterError("K must be >= 1")
    out = {}
    for c in np.unique(y):
        Xc = X[y == c]
        if K > len(Xc):
            raise ClusterError(f"K={K} soul samples requested but class {c} has {len(Xc)} samples")
        if K == 1:
            out[int(c)] = Xc.mean(0, keepdims=True).astype(np.float32)
            continue
        gen = rng(seed, "kmeans", int(c))
        uniq = np.unique(Xc, axis=0)
        if len(uniq) >= K:
            cent = uniq[gen.choice(len(uniq), size=K, replace=False)]
        else:
            cent = Xc[gen.choice(len(Xc), size=K, replace=False)]
        for _ in range(KMEANS_ITERS):
            d = ((Xc[:, None, :] - cent[None]) ** 2).sum(-1)
            assign = d.argmin(1)  # lowest index on ties
            new = cent.copy()
            for k in range(K):
                members = Xc[assign == k]
                if len(members):
                    new[k] = members.mean(0)
            if np.allclose(new, cent):
                cent = new
                break
            cent = new
        out[int(c)] = cent.astype(np.float32)
    return out


def lisgan_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None) -> LossBreakdown:
    x, y = _union(x, y, x_u, y_u)
    terms, fake = _gan_base(state, x, y, seed)
    if state.soul.numel() == 0:
        raise ConfigError("soul samples have not been computed; call set_soul_samples first")
    soul = state.soul[y - 1]  # (n, K, d)
    mask = state.soul_mask[y - 1]
    d = ((fake[:, None, :] - soul) ** 2).sum(-1).masked_fill(~mask, float("inf"))
    nearest = d.argmin(1)
    terms["r1"] = d.gather(1, nearest[:, None]).mean()
    # Virtual soul samples: mean of the fakes assigned to each real soul sample.
    r2 = []
    for c in torch.unique(y):
        sel = y == c
        fc, nc = fake[sel], nearest[sel]
        dists = []
        for k in torch.unique(nc):
            virtual = fc[nc == k].mean(0)
            dists.append(((virtual - state.soul[c - 1, k]) ** 2).sum())
        r2.append(torch.stack(dists).min())
    terms["r2"] = torch.stack(r2).mean()
    hp = state.hp
    return LossBreakdown(terms, {"wgan": 1.0, "cls": hp.beta, "r1": hp.delta, "r2": hp.gamma})


def _sr_term(real_means, A_rows_real, fake_means, A_rows_fake, eps):
    vis = cosine_matrix(fake_means, real_means)  # (i, j)
    sem = cosine_matrix(A_rows_fake, A_rows_real)
    return tube_hinge(vis, sem, eps).sum(1).mean()


def lsrgan_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None) -> LossBreakdown:
    x, y = _union(x, y, x_u, y_u)
    terms, fake = _gan_base(state, x, y, seed)
    hp = state.hp
    train = torch.tensor(state.train_classes)
    real_means = state.real_means[train - 1]
    A_train = state.A[train - 1]

    batch_classes = torch.unique(y)
    gen_means = _class_means(fake, y, batch_classes)
    ema = state.ema_means[batch_classes - 1]
    ready = state.ema_ready[batch_classes - 1][:, None]
    mu_tilde = torch.where(ready, 0.9 * ema + 0.1 * gen_means, gen_means)
    terms["sr1"] = _sr_term(real_means, A_train, mu_tilde, state.A[batch_classes - 1], hp.epsilon)

    novel = torch.tensor(state.novel_classes, dtype=torch.long)
    if len(novel):
        per = max(1, x.shape[0] // max(1, len(batch_classes)))
        y_n = novel.repeat_interleave(per)
        a_n = state.descriptions(y_n)
        fake_n = state.generate(_noise(len(y_n), state.z_dim, torch_generator(seed, "novel"), x.dtype), a_n)
        novel_means = _class_means(fake_n, y_n, novel)
        terms["sr2"] = _sr_term(real_means, A_train, novel_means, state.A[novel - 1], hp.epsilon)
    else:
        terms["sr2"] = torch.zeros(())
    extras = {"gen_means": (batch_classes, gen_means.detach())}
    return LossBreakdown(terms, {"wgan": 1.0, "cls": hp.beta, "sr1": hp.delta, "sr2": hp.gamma}, extras=extras)


def update_ema(state: ModelState, classes, means, decay: float = 0.9):
    with torch.no_grad():
        idx = torch.as_tensor(classes) - 1
        old = state.ema_means[idx]
        ready = state.ema_ready[idx][:, None]
        state.ema_means[idx] = torch.where(ready, decay * old + (1 - decay) * means, means)
        state.ema_ready[idx] = True


# -- VAE family -------------------------------------------------------------
def cvae_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None) -> LossBreakdown:
    x, y = _union(x, y, x_u, y_u)
    kl, rec, _ = cvae_terms(state, x, state.descriptions(y), seed)
    return LossBreakdown({"kl": kl, "rec": rec}, {"kl": 1.0, "rec": state.hp.beta})


def warmup_weight(target: float, epoch, start: float, end: float) -> float:
    """Linear ramp from 0 at ``start`` to ``target`` at ``end`` (epochs)."""
    if epoch is None:
        return target
    if epoch <= start:
        return 0.0
    if epoch >= end:
        return target
    return target * (epoch - start) / (end - start)


CADA_DELTA_WINDOW = (6, 22)
CADA_GAMMA_WINDOW = (21, 75)


def cadavae_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None) -> LossBreakdown:
    x, y = _union(x, y, x_u, y_u)
    a = state.descriptions(y)
    hp = state.hp
    mu_x, lv_x = state["E_x"](x)
    mu_a, lv_a = state["E_a"](a)
    h_x = _reparam(mu_x, lv_x, torch_generator(seed, "reparam", "x"))
    h_a = _reparam(mu_a, lv_a, torch_generator(seed, "reparam", "a"))
    terms = {
        "xvae": kl_diag_gaussian(mu_x, lv_x) + hp.beta * squared_error(x, state["G_x"](h_x)),
        "avae": kl_diag_gaussian(mu_a, lv_a) + hp.beta * squared_error(a, state["G_a"](h_a)),
        "ca": abs_error(x, state["G_x"](mu_a)) + abs_error(a, state["G_a"](mu_x)),
        "da": wasserstein2_diag(mu_a, torch.exp(lv_a), mu_x, torch.exp(lv_x)),
    }
    s = hp.warmup_scale
    weights = {
        "xvae": 1.0,
        "avae": 1.0,
        "ca": warmup_weight(hp.delta, epoch, CADA_DELTA_WINDOW[0] * s, CADA_DELTA_WINDOW[1] * s),
        "da": warmup_weight(hp.gamma, epoch, CADA_GAMMA_WINDOW[0] * s, CADA_GAMMA_WINDOW[1] * s),
    }
    return LossBreakdown(terms, weights)


def vaecflow_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None) -> LossBreakdown:
    x, y = _union(x, y, x_u, y_u)
    a = state.descriptions(y)
    mu, logvar = state["E_a"](a)
    h_sf, logdet = state["flow"](x, a)
    flow_nll = (gaussian_nll(h_sf, mu, logvar) - logdet).mean()
    h = _reparam(mu, logvar, torch_generator(seed, "reparam"))
    var = torch.exp(logvar)
    vae_flow = squared_error(a, state["G_a"](h)) + (var - logvar - 1).sum(-1).mean()
    hcls = F.cross_entropy(state["hcls"](h), y - 1)
    hp = state.hp
    return LossBreakdown(
        {"flow_nll": flow_nll, "vae_flow": vae_flow, "hcls": hcls},
        {"flow_nll": 1.0, "vae_flow": hp.delta, "hcls": hp.gamma},
    )


# -- VAEGAN family ----------------------------------------------------------
def _vaegan_base(state, x, y, seed):
    a = state.descriptions(y)
    kl, rec, mu = cvae_terms(state, x, a, seed)
    wgan, fake = wgan_terms(state, x, a, seed)
    terms = {"wgan": wgan, "cvae": kl + state.hp.beta * rec}
    return terms, {"wgan": 1.0, "cvae": state.hp.delta}, a, fake


def vaegan_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None) -> LossBreakdown:
    x, y = _union(x, y, x_u, y_u)
    terms, weights, _, _ = _vaegan_base(state, x, y, seed)
    return LossBreakdown(terms, weights)


def fvaegand2_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None, transductive=False) -> LossBreakdown:
    if transductive:
        raise Unsupported("the transductive unlabeled-unseen WGAN term is not implemented")
    return vaegan_objective(state, x, y, seed, epoch, x_u, y_u)


def _cyc(state, x, fake, a):
    Dec = state["Dec"]
    return abs_error(a, Dec(x)) + abs_error(a, Dec(fake))


def tfvaegan_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None) -> LossBreakdown:
    x, y = _union(x, y, x_u, y_u)
    terms, weights, a, fake = _vaegan_base(state, x, y, seed)
    terms["cyc"] = _cyc(state, x, fake, a)
    weights["cyc"] = state.hp.gamma
    return LossBreakdown(terms, weights)


def free_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None) -> LossBreakdown:
    x, y = _union(x, y, x_u, y_u)
    terms, weights, a, fake = _vaegan_base(state, x, y, seed)
    hp = state.hp
    terms["cyc"] = _cyc(state, x, fake, a)
    mu_s = state["samc_head"](state["Dec"].hidden(x))
    terms["samc"] = margin_center_loss(mu_s, state.centers, y - 1, hp.samc_margin, hp.eta)
    weights["cyc"] = hp.gamma
    weights["samc"] = hp.xi
    return LossBreakdown(terms, weights)


def counterfactual_pool(state: ModelState, h, y, seed, cap: int = CF_POOL_CAP):
    """Counterfactuals G(h_i, a_c) for other training classes c (seeded subsample of <= cap)."""
    n = h.shape[0]
    train = list(state.train_classes)
    gen = rng(seed, "cf-pool")
    n_others = len(train) - 1
    if n_others <= 0:
        return h.new_zeros(n, 0, state.d_x)
    size = min(cap, n_others)
    classes = np.empty((n, size), dtype=np.int64)
    for i in range(n):
        others = np.array([c for c in train if c != int(y[i])])
        pick = others if len(others) <= size else others[gen.choice(len(others), size=size, replace=False)]
        classes[i] = np.sort(pick)[:size]
    cls = torch.as_tensor(classes)
    a_cf = state.descriptions(cls.reshape(-1))
    h_rep = h.repeat_interleave(size, dim=0)
    x_cf = state["G"](h_rep, a_cf)
    return x_cf.reshape(n, size, -1)


def gcmcf_objective(state, x, y, seed=0, epoch=None, x_u=None, y_u=None) -> LossBreakdown:
    x, y = _union(x, y, x_u, y_u)
    terms, weights, a, _ = _vaegan_base(state, x, y, seed)
    mu, _ = state["E"](torch.cat([x, a], dim=1))
    faithful = state["G"](mu, a)
    pool = counterfactual_pool(state, mu, y, seed)
    terms["contrastive"] = counterfactual_contrastive(x, faithful, pool)
    weights["contrastive"] = state.hp.gamma
    aux = {"dec": abs_error(a, state["Dec"](x))}
    return LossBreakdown(terms, weights, aux=aux)


OBJECTIVES = {
    ModelKind.FCLSWGAN: fclswgan_objective,
    ModelKind.LISGAN: lisgan_objective,
    ModelKind.LSRGAN: lsrgan_objective,
    ModelKind.CVAE: cvae_objective,
    ModelKind.CADAVAE: cadavae_objective,
    ModelKind.VAECFLOW: vaecflow_objective,
    ModelKind.FVAEGAND2: fvaegand2_objective,
    ModelKind.TFVAEGAN: tfvaegan_objective,
    ModelKind.FREE: free_objective,
    ModelKind.GCMCF: gcmcf_objective,
}

# Base objective each kind reduces to when its novel weights are zero.
BASES = {
    ModelKind.FCLSWGAN: (wgan_objective, {"beta": 0.0}),
    ModelKind.LISGAN: (fclswgan_objective, {"delta": 0.0, "gamma": 0.0}),
    ModelKind.LSRGAN: (fclswgan_objective, {"delta": 0.0, "gamma": 0.0}),
    ModelKind.FVAEGAND2: (vaegan_objective, {}),
    ModelKind.TFVAEGAN: (vaegan_objective, {"gamma": 0.0}),
    ModelKind.FREE: (vaegan_objective, {"gamma": 0.0, "xi": 0.0}),
    ModelKind.GCMCF: (vaegan_objective, {"gamma": 0.0}),
}


def objective_for(kind):
    return OBJECTIVES[ModelKind(kind)]
