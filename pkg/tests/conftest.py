import numpy as np
import pytest
import torch

from gasl.datamodel import HyperParams
from gasl.generators import ModelKind, ModelState, soul_samples
from gasl.harness import SyntheticDatasetSpec, make_synthetic_dataset

torch.set_num_threads(1)

TINY_HP = HyperParams(
    hidden=8, latent_dim=4, noise_dim=4, beta=0.7, delta=0.6, gamma=0.5, xi=0.4,
    lambda_gp=10.0, K=2, epsilon=0.1, epochs=2, classifier_epochs=2, batch_size=16,
    critic_iters=1, syn_per_class=5, lr=1e-3, classifier_lr=1e-2,
)


def tiny_state(kind, dtype=torch.float64, hp=TINY_HP, seed=0, C=4, d_x=6, d_a=5, n=8):
    """Small state plus a batch with all auxiliary buffers populated."""
    kind = ModelKind(kind)
    r = np.random.default_rng(seed)
    A = r.normal(size=(C, d_a))
    st = ModelState(kind, d_x, A, [1, 2, 3], hp, seed=seed).to(dtype)
    y = np.array([1, 1, 2, 2, 3, 3, 1, 2][:n])
    x = torch.tensor(r.normal(size=(len(y), d_x)), dtype=dtype)
    if st.has("cls"):
        st.cls_pretrained = True
    if kind == ModelKind.LISGAN:
        st.set_soul_samples(soul_samples(x.numpy(), y, hp.K, seed))
    if kind == ModelKind.LSRGAN:
        st.set_real_means(x.numpy(), y)
        st.real_means = st.real_means.to(dtype)
    if kind == ModelKind.FREE:
        with torch.no_grad():
            st.centers.copy_(torch.tensor(r.normal(size=tuple(st.centers.shape)), dtype=dtype))
    return st, x, y


def fd_relative_error(f, params, h=1e-6, n=30, seed=1):
    """Relative error between autograd and central differences on ``n`` sampled coordinates."""
    params = [p for p in params if p.requires_grad]
    for p in params:
        p.grad = None
    f().backward()
    r = np.random.default_rng(seed)
    an, fd = [], []
    for _ in range(n):
        p = params[r.integers(len(params))]
        i = int(r.integers(p.numel()))
        flat = p.data.view(-1)
        old = flat[i].item()
        flat[i] = old + h
        fp = f().item()
        flat[i] = old - h
        fm = f().item()
        flat[i] = old
        fd.append((fp - fm) / (2 * h))
        an.append(0.0 if p.grad is None else p.grad.view(-1)[i].item())
    an, fd = np.array(an), np.array(fd)
    scale = max(np.linalg.norm(an), np.linalg.norm(fd))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(an - fd) / scale)


@pytest.fixture(scope="session")
def toy_data():
    return make_synthetic_dataset(SyntheticDatasetSpec())


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
