"""Two-layer perceptron building blocks and the conditional affine-coupling flow."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from gasl.errors import NumericalError

LEAK = 0.2


class MLP(nn.Module):
    def __init__(self, d_in, hidden, d_out):
        super().__init__()
        self.fc1 = nn.Linear(d_in, hidden)
        self.fc2 = nn.Linear(hidden, d_out)

    def forward(self, x):
        return self.fc2(F.leaky_relu(self.fc1(x), LEAK))


class Generator(nn.Module):
    """G(z, a) -> x; an optional feedback vector is added to the hidden layer."""

    def __init__(self, z_dim, d_a, hidden, d_x, feedback_dim: int | None = None):
        super().__init__()
        self.fc1 = nn.Linear(z_dim + d_a, hidden)
        self.fc2 = nn.Linear(hidden, d_x)
        self.feedback = nn.Linear(feedback_dim, hidden) if feedback_dim else None

    def forward(self, z, a, feedback=None):
        h = F.leaky_relu(self.fc1(torch.cat([z, a], dim=1)), LEAK)
        if feedback is not None and self.feedback is not None:
            h = h + F.leaky_relu(self.feedback(feedback), LEAK)
        return self.fc2(h)


class GaussianEncoder(nn.Module):
    """Maps an input to the mean and log-variance of a diagonal Gaussian."""

    def __init__(self, d_in, hidden, d_latent):
        super().__init__()
        self.net = MLP(d_in, hidden, 2 * d_latent)

    def forward(self, x):
        mu, logvar = self.net(x).chunk(2, dim=1)
        return mu, logvar


class Critic(nn.Module):
    def __init__(self, d_x, d_a, hidden):
        super().__init__()
        self.net = MLP(d_x + d_a, hidden, 1)

    def forward(self, x, a):
        return self.net(torch.cat([x, a], dim=1)).squeeze(1)


class SemanticDecoder(nn.Module):
    """Dec: x -> a, exposing its hidden layer as the latent feature h."""

    def __init__(self, d_x, d_latent, d_a):
        super().__init__()
        self.fc1 = nn.Linear(d_x, d_latent)
        self.fc2 = nn.Linear(d_latent, d_a)

    def hidden(self, x):
        return F.leaky_relu(self.fc1(x), LEAK)

    def forward(self, x):
        return self.fc2(self.hidden(x))


class AffineCoupling(nn.Module):
    """y_b = x_b * exp(s(x_a, c)) + t(x_a, c) on the unmasked coordinates."""

    def __init__(self, dim, cond_dim, hidden, mask, scale_clamp: float = 2.0):
        super().__init__()
        self.register_buffer("mask", mask)
        self.net = MLP(dim + cond_dim, hidden, 2 * dim)
        self.scale_clamp = scale_clamp
        nn.init.zeros_(self.net.fc2.weight)
        nn.init.zeros_(self.net.fc2.bias)

    def _st(self, x_masked, cond):
        inp = x_masked if cond is None else torch.cat([x_masked, cond], dim=1)
        raw_s, t = self.net(inp).chunk(2, dim=1)
        s = self.scale_clamp * torch.tanh(raw_s / self.scale_clamp)
        keep = 1 - self.mask
        return s * keep, t * keep

    def forward(self, x, cond=None):
        s, t = self._st(x * self.mask, cond)
        scale = torch.exp(s)
        if not torch.all(torch.isfinite(scale)) or torch.any(scale == 0):
            raise NumericalError("coupling scale is zero or non-finite; block is not invertible")
        return x * scale + t, s.sum(1)

    def inverse(self, y, cond=None):
        s, t = self._st(y * self.mask, cond)
        scale = torch.exp(s)
        if not torch.all(torch.isfinite(scale)) or torch.any(scale == 0):
            raise NumericalError("coupling scale is zero or non-finite; block is not invertible")
        return (y - t) / scale, -s.sum(1)


class ConditionalFlow(nn.Module):
    """Stack of affine couplings with alternating masks, conditioned on a vector."""

    def __init__(self, dim, cond_dim, hidden, n_blocks: int = 4):
        super().__init__()
        base = (torch.arange(dim) % 2).float()
        self.blocks = nn.ModuleList(
            AffineCoupling(dim, cond_dim, hidden, base if i % 2 == 0 else 1 - base) for i in range(n_blocks)
        )

    def forward(self, x, cond=None):
        logdet = torch.zeros(x.shape[0], dtype=x.dtype)
        for block in self.blocks:
            x, ld = block(x, cond)
            logdet = logdet + ld
        return x, logdet

    def inverse(self, z, cond=None):
        logdet = torch.zeros(z.shape[0], dtype=z.dtype)
        for block in reversed(self.blocks):
            z, ld = block.inverse(z, cond)
            logdet = logdet + ld
        return z, logdet
