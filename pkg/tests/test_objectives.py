import numpy as np
import pytest
import torch

from conftest import TINY_HP, tiny_state
from gasl.errors import ClusterError, ConfigError, MissingDescription, Unsupported, ValidationError
from gasl.generators import (
    ModelKind,
    ModelState,
    critic_loss,
    fvaegand2_objective,
    objective_for,
    soul_samples,
)
from gasl.generators.objectives import CADA_DELTA_WINDOW, counterfactual_pool, update_ema, warmup_weight
from gasl.seeding import torch_generator


def fakes(st, x, y, seed):
    z = torch.randn(len(y), st.z_dim, generator=torch_generator(seed, "noise")).to(x.dtype)
    return st.generate(z, st.descriptions(y))


@pytest.mark.parametrize("kind", list(ModelKind))
def test_every_objective_is_finite_and_weighted(kind):
    st, x, y = tiny_state(kind)
    out = objective_for(kind)(st, x, y, seed=1, epoch=100)
    assert set(out.weights) == set(out.terms)
    total = sum(w * out.terms[k] for k, w in out.weights.items())
    assert torch.isfinite(out.total) and out.total.item() == pytest.approx(total.item())
    assert np.isfinite(list(out.values().values())).all()


@pytest.mark.parametrize("kind", list(ModelKind))
def test_objectives_are_pure_functions_of_seed(kind):
    st, x, y = tiny_state(kind)
    obj = objective_for(kind)
    a = obj(st, x, y, seed=5, epoch=100).total
    b = obj(st, x, y, seed=5, epoch=100).total
    assert a.item() == b.item()


def test_lisgan_regularizers_match_bruteforce():
    st, x, y = tiny_state("lisgan")
    out = objective_for("lisgan")(st, x, y, seed=2)
    f = fakes(st, x, y, 2).detach().numpy()
    souls = soul_samples(x.numpy(), y, TINY_HP.K, 0)
    d = np.array([[np.sum((f[i] - s) ** 2) for s in souls[int(y[i])]] for i in range(len(y))])
    assert out.terms["r1"].item() == pytest.approx(d.min(1).mean(), rel=1e-9)
    near = d.argmin(1)
    per_class = []
    for c in np.unique(y):
        rows = np.where(y == c)[0]
        per_class.append(min(np.sum((f[rows[near[rows] == k]].mean(0) - souls[int(c)][k]) ** 2)
                             for k in np.unique(near[rows])))
    assert out.terms["r2"].item() == pytest.approx(np.mean(per_class), rel=1e-9)


def _cos(U, V):
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    V = V / np.linalg.norm(V, axis=1, keepdims=True)
    return U @ V.T


def _tube(v, s, eps):
    return np.maximum(v - s - eps, 0) ** 2 + np.maximum(s - eps - v, 0) ** 2


def test_lsrgan_sr1_matches_oracle_and_ema():
    st, x, y = tiny_state("lsrgan")
    out = objective_for("lsrgan")(st, x, y, seed=4)
    f = fakes(st, x, y, 4).detach().numpy()
    A = st.A.numpy()
    real = np.stack([x.numpy()[y == c].mean(0) for c in (1, 2, 3)])
    gen = np.stack([f[y == c].mean(0) for c in (1, 2, 3)])
    sr1 = _tube(_cos(gen, real), _cos(A[:3], A[:3]), TINY_HP.epsilon).sum(1).mean()
    # real means are stored in float32
    assert out.terms["sr1"].item() == pytest.approx(sr1, rel=1e-6)
    classes, means = out.extras["gen_means"]
    update_ema(st, classes, means)
    assert torch.allclose(st.ema_means[:3], torch.tensor(gen))
    update_ema(st, classes, torch.zeros_like(means))
    assert torch.allclose(st.ema_means[:3], 0.9 * torch.tensor(gen))
    assert out.terms["sr2"].item() >= 0


def test_soul_samples_kmeans():
    X = np.array([[0.0, 0], [0.1, 0], [5, 5], [5.1, 5], [9, 9], [9.1, 9]])
    y = np.array([1, 1, 1, 1, 2, 2])
    s = soul_samples(X, y, 2, seed=0)
    assert sorted(map(tuple, np.round(s[1], 2))) == [(0.05, 0.0), (5.05, 5.0)]
    assert np.allclose(soul_samples(X, y, 1)[2], [[9.05, 9.0]])
    with pytest.raises(ClusterError):
        soul_samples(X, y, 3)


def test_warmup_weight():
    assert warmup_weight(2.0, None, 6, 22) == 2.0
    assert warmup_weight(2.0, 6, 6, 22) == 0.0
    assert warmup_weight(2.0, 14, 6, 22) == pytest.approx(1.0)
    assert warmup_weight(2.0, 40, *CADA_DELTA_WINDOW) == 2.0


def test_error_paths():
    st, x, y = tiny_state("fclswgan")
    st.cls_pretrained = False
    with pytest.raises(ConfigError):
        objective_for("fclswgan")(st, x, y)
    st, x, y = tiny_state("lisgan")
    st.soul = torch.zeros(0)
    with pytest.raises(ConfigError):
        objective_for("lisgan")(st, x, y)
    st, x, y = tiny_state("fvaegand2")
    with pytest.raises(Unsupported):
        fvaegand2_objective(st, x, y, transductive=True)
    with pytest.raises(ValidationError):
        objective_for("cvae")(*tiny_state("cvae")[:2], [1, 2])
    with pytest.raises(MissingDescription):
        objective_for("cvae")(st, x, np.full(len(y), 9))
    with pytest.raises(ConfigError):
        tiny_state("cvae")[0]["D"]
    with pytest.raises(MissingDescription):
        ModelState("cvae", 4, np.eye(3), [1, 4], TINY_HP)


def test_counterfactual_pool_excludes_own_class():
    st, x, y = tiny_state("gcmcf")
    mu, _ = st["E"](torch.cat([x, st.descriptions(y)], dim=1))
    pool = counterfactual_pool(st, mu, y, seed=0)
    assert pool.shape == (len(y), 2, st.d_x)
    own = st["G"](mu, st.descriptions(y))
    assert not torch.any(torch.all(torch.isclose(pool, own[:, None]), dim=-1))


def test_few_shot_unseen_rows_are_concatenated():
    st, x, y = tiny_state("cvae")
    xu = x[:2] + 1.0
    joint = objective_for("cvae")(st, torch.cat([x, xu]), np.concatenate([y, [4, 4]]), seed=0).total
    split = objective_for("cvae")(st, x, y, seed=0, x_u=xu, y_u=[4, 4]).total
    assert joint.item() == split.item()


def test_critic_loss_is_negated_wgan_without_penalty():
    st, x, y = tiny_state("fvaegand2", hp=TINY_HP.replace(lambda_gp=0.0))
    wgan = objective_for("fvaegand2")(st, x, y, seed=3).terms["wgan"]
    assert critic_loss(st, x, y, seed=3).item() == pytest.approx(-wgan.item(), rel=1e-9)


def test_parameter_groups_exclude_frozen_head():
    st, _, _ = tiny_state("fclswgan")
    for p in st["cls"].parameters():
        p.requires_grad_(False)
    groups = st.parameter_groups()
    ids = {id(p) for p in groups["main"]}
    assert not ids & {id(p) for p in st["cls"].parameters()}
    assert not ids & {id(p) for p in groups["critic"]}
