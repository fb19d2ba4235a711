"""Loss primitives shared by the generative objectives.

Every function is pure: outputs depend only on the arguments (and the
explicit ``torch.Generator`` where randomness is involved).
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from gasl.errors import DegenerateInput, DomainError, ShapeError


def safe_sqrt(sq: torch.Tensor) -> torch.Tensor:
    """sqrt with a zero (not NaN) gradient at exactly 0."""
    root = torch.sqrt(sq.clamp_min(1e-30))
    return torch.where(sq > 0, root, torch.zeros_like(root))


def gradient_penalty(D, x_real, x_fake, a, lambda_gp: float, generator: torch.Generator | None = None):
    """lambda * E[(||grad_xhat D(xhat, a)||_2 - 1)^2] on random interpolates."""
    if x_real.shape != x_fake.shape:
        raise ShapeError(f"real batch {tuple(x_real.shape)} vs fake batch {tuple(x_fake.shape)}")
    alpha = torch.rand(x_real.shape[0], 1, generator=generator, dtype=x_real.dtype)
    x_hat = (alpha * x_real + (1 - alpha) * x_fake).detach().requires_grad_(True)
    out = D(x_hat, a)
    if out.requires_grad:
        (grad,) = torch.autograd.grad(out.sum(), x_hat, create_graph=True, allow_unused=True)
    else:
        grad = None
    if grad is None:
        grad = torch.zeros_like(x_hat)
    norms = safe_sqrt((grad.reshape(grad.shape[0], -1) ** 2).sum(1))
    return lambda_gp * ((norms - 1) ** 2).mean()


def kl_diag_gaussian(mu, logvar):
    """KL(N(mu, diag(exp(logvar))) || N(0, I)); summed over dims, averaged over rows."""
    kl = 0.5 * (torch.exp(logvar) + mu**2 - 1 - logvar)
    if kl.dim() == 0:
        return kl
    return kl.sum(-1).mean() if kl.dim() > 1 else kl.sum()


def wasserstein2_diag(mu1, var1, mu2, var2, reduction: str = "mean"):
    """2-Wasserstein distance between diagonal Gaussians given means and variances."""
    for v in (var1, var2):
        if torch.any(torch.as_tensor(v) < 0):
            raise DomainError("variances must be non-negative")
    sq = ((mu1 - mu2) ** 2).sum(-1) + ((torch.sqrt(var1) - torch.sqrt(var2)) ** 2).sum(-1)
    dist = safe_sqrt(sq)
    if dist.dim() == 0 or reduction == "none":
        return dist
    return dist.mean()


def cosine_similarity(u, v):
    """Cosine of the angle between u and v along the last axis."""
    nu = torch.linalg.vector_norm(u, dim=-1)
    nv = torch.linalg.vector_norm(v, dim=-1)
    if torch.any(nu == 0) or torch.any(nv == 0):
        raise DegenerateInput("cosine similarity is undefined for a zero vector")
    return (u * v).sum(-1) / (nu * nv)


def cosine_matrix(U, V):
    """Pairwise cosine similarities, shape (len(U), len(V))."""
    nu = torch.linalg.vector_norm(U, dim=-1, keepdim=True)
    nv = torch.linalg.vector_norm(V, dim=-1, keepdim=True)
    if torch.any(nu == 0) or torch.any(nv == 0):
        raise DegenerateInput("cosine similarity is undefined for a zero vector")
    return (U / nu) @ (V / nv).T


def tube_hinge(visual_sim, semantic_sim, epsilon: float):
    """Squared two-sided hinge keeping visual_sim inside semantic_sim +/- epsilon."""
    upper = F.relu(visual_sim - (semantic_sim + epsilon))
    lower = F.relu((semantic_sim - epsilon) - visual_sim)
    return upper**2 + lower**2


def squared_error(target, recon):
    """Unit-variance Gaussian NLL with constants dropped: 0.5 * ||target - recon||^2 per row, averaged."""
    return 0.5 * ((target - recon) ** 2).sum(-1).mean()


def abs_error(target, recon):
    return (target - recon).abs().sum(-1).mean()


def gaussian_nll(z, mean, logvar):
    """-log N(z; mean, diag(exp(logvar))) summed over dims (constants kept)."""
    return 0.5 * (((z - mean) ** 2) * torch.exp(-logvar) + logvar + math.log(2 * math.pi)).sum(-1)


def margin_center_loss(mu, centers, labels_idx, margin: float, eta: float):
    """max(0, margin + eta*||mu - c_y||^2 - (1-eta)*||mu - c_y'||^2), y' the nearest other center."""
    d = ((mu[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    pos = d.gather(1, labels_idx[:, None]).squeeze(1)
    if centers.shape[0] < 2:
        neg = torch.zeros_like(pos)
    else:
        masked = d.scatter(1, labels_idx[:, None], float("inf"))
        neg = masked.min(1).values
    return F.relu(margin + eta * pos - (1 - eta) * neg).mean()


def counterfactual_contrastive(x, x_faithful, x_counter=None):
    """-log softmax(-dist) with the faithful reconstruction in the numerator.

    ``x_counter`` has shape (batch, pool, dim) or is None / empty for no pool.
    """
    d_f = safe_sqrt(((x - x_faithful) ** 2).sum(-1))
    if x_counter is None or x_counter.shape[1] == 0:
        logits = -d_f[:, None]
    else:
        d_cf = safe_sqrt(((x[:, None, :] - x_counter) ** 2).sum(-1))
        logits = torch.cat([-d_f[:, None], -d_cf], dim=1)
    return (torch.logsumexp(logits, dim=1) + d_f).mean()
