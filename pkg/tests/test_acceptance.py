"""Acceptance criteria.  Each test records one PASS/FAIL line, printed at the end of the run."""

import json
import time

import numpy as np
import pytest
import torch

from checks import gradient_errors, lattice_errors
from gasl.classify import harmonic_mean, per_class_top1
from gasl.datasets import benchmark_layout
from gasl.errors import ShotOverflow
from gasl.generators import ModelKind
from gasl.harness import ExperimentConfig, SyntheticDatasetSpec, run_experiment, toy_hp
from gasl.splits import build_split
from test_networks import dense_logdet, random_flow

LINES = []


def record(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  [{criterion}] {detail}"
    LINES.append(line)
    print(line)


# -- 1. harmonic mean against published (U, S, H) triples -------------------
# Original-feature GZSL rows; columns FLO, CUB, SUN, AWA2, AWA.
PUBLISHED_USH = {
    "f-CLSWGAN": [(61.5, 77.2, 68.5), (43.9, 57.4, 49.8), (43.3, 35.9, 39.2), (47.6, 75.2, 58.3), (52.7, 67.7, 59.3)],
    "LisGAN": [(56.6, 83.3, 67.4), (43.9, 61.1, 51.1), (45.8, 35.5, 40.0), (55.2, 67.1, 60.6), (50.2, 77.5, 61.0)],
    "LsrGAN": [(60.1, 84.2, 70.2), (48.0, 58.3, 52.6), (44.4, 37.4, 40.6), (48.9, 80.7, 60.9), (53.6, 75.8, 62.8)],
    "CVAE": [(17.2, 63.3, 27.1), (24.6, 52.1, 33.4), (20.7, 30.4, 24.6), (37.8, 87.7, 52.8), (35.0, 85.2, 49.6)],
    "CADA-VAE": [(53.6, 78.2, 63.6), (45.2, 37.3, 40.9), (55.1, 77.0, 64.2), (58.8, 71.3, 64.5)],
    "VAE-cFlow": [(48.9, 78.3, 60.2), (47.8, 56.0, 51.6), (47.8, 38.3, 42.5), (55.1, 72.2, 62.5), (55.2, 68.1, 61.0)],
    "f-VAEGAN-D2": [(57.7, 82.9, 68.0), (46.8, 61.6, 53.2), (43.8, 34.8, 38.8), (45.4, 77.7, 57.3), (57.6, 70.6, 63.5)],
    "tf-VAEGAN": [(62.3, 83.4, 71.3), (54.4, 61.0, 57.5), (44.8, 39.8, 42.2), (54.1, 79.2, 64.3), (64.4, 67.2, 65.8)],
    "FREE": [(66.8, 84.6, 74.7), (52.8, 60.6, 56.5), (46.5, 37.3, 41.4), (61.6, 73.4, 67.0), (61.8, 69.7, 65.5)],
    "GCM-CF": [(55.7, 59.9, 57.7), (52.1, 61.0, 56.2), (44.9, 38.3, 41.3), (45.1, 87.8, 59.6), (46.2, 84.8, 59.8)],
}
# The CADA-VAE CUB row is internally inconsistent: 2*51.7*54.5/(51.7+54.5) = 53.06, printed 52.7.
INCONSISTENT_USH = (51.7, 54.5, 52.7)


def test_harmonic_mean_matches_published_triples():
    triples = [t for rows in PUBLISHED_USH.values() for t in rows]
    gaps = [abs(harmonic_mean(u, s) - h) for u, s, h in triples]
    ok = len(triples) >= 10 and max(gaps) <= 0.1 + 1e-9
    record("harmonic mean", ok, f"{len(triples)} published triples, max |H - 2US/(U+S)| = {max(gaps):.3f} (tol 0.1)")
    assert ok


def test_inconsistent_published_triple_is_flagged():
    u, s, h = INCONSISTENT_USH
    ours = harmonic_mean(u, s)
    record("harmonic mean, flagged row", True,
           f"U={u} S={s}: 2US/(U+S) = {ours:.2f}, printed H={h} (excluded as a typo in the source table)")
    assert ours == pytest.approx(53.06, abs=0.005) and abs(ours - h) > 0.1


# -- 2. split cardinalities ---------------------------------------------------
# Published per-dataset counts: (all seen, GZSL train seen, test seen, test unseen).
PUBLISHED_COUNTS = {
    "FLO": (7034, 5631, 1403, 1155),
    "CUB": (8821, 7057, 1764, 2967),
    "SUN": (12900, 10320, 2580, 1440),
    "AWA2": (29409, 23527, 5882, 7913),
    "AWA": (25517, 19832, 4958, 5685),
}
SHOTS = (1, 5, 10, 20)


def expected_cells(task, all_seen, gzsl_seen, test_seen, test_unseen, N, p, q):
    """Published counts as (train_seen, train_unseen, test_seen, test_unseen)."""
    return {
        "ZSL": (all_seen, 0, 0, test_unseen),
        "GZSL": (gzsl_seen, 0, test_seen, test_unseen),
        "UFSL": (all_seen, N * q, 0, test_unseen - N * q),
        "GUFSL": (gzsl_seen, N * q, test_seen, test_unseen - N * q),
        "SFSL": (N * p, 0, 0, test_unseen),
        "GSFSL": (N * p, 0, test_seen, test_unseen),
    }[task]


def split_cells():
    for name, counts in PUBLISHED_COUNTS.items():
        for task in ("ZSL", "GZSL", "UFSL", "GUFSL", "SFSL", "GSFSL"):
            for N in (SHOTS if "FSL" in task else (None,)):
                yield name, task, N, counts


def compare_cells():
    layouts = {name: benchmark_layout(name) for name in PUBLISHED_COUNTS}
    matched, mismatched, overflow = 0, [], []
    for name, task, N, counts in split_cells():
        meta, base = layouts[name]
        want = expected_cells(task, *counts, N or 0, meta.p, meta.q)
        try:
            split = build_split(meta, base.labels, base, task, N, seed=0)
        except ShotOverflow:
            overflow.append((name, task, N))
            continue
        got = tuple(len(getattr(split, k)) for k in ("train_seen", "train_unseen", "test_seen", "test_unseen"))
        for field, g, w in zip(("train_seen", "train_unseen", "test_seen", "test_unseen"), got, want):
            if g == w:
                matched += 1
            else:
                mismatched.append((name, task, N, field, g, w))
    return matched, mismatched, overflow


# The AWA seen-image total (25517) exceeds what its own GZSL split allows
# (19832 + 4958 = 24790 of 30475 images, 5685 unseen), so these cells cannot be met.
UNATTAINABLE = {("AWA", task, N, "train_seen") for task in ("ZSL", "UFSL") for N in ((None,) if task == "ZSL" else SHOTS)}


def test_split_cardinalities():
    t0 = time.perf_counter()
    matched, mismatched, overflow = compare_cells()
    seconds = time.perf_counter() - t0
    unexpected = [m for m in mismatched if m[:4] not in UNATTAINABLE]
    sun20 = {("SUN", t, 20) for t in ("UFSL", "GUFSL", "SFSL", "GSFSL")}
    ok = not unexpected and set(overflow) == sun20 and seconds < 1.0
    record("split cardinalities", ok,
           f"{matched} cells exact, {len(mismatched)} known-unattainable AWA cells excluded, "
           f"ShotOverflow on {sorted(t for _, t, _ in overflow)} at SUN N=20, {seconds:.2f}s")
    assert ok, unexpected


@pytest.mark.xfail(strict=True, reason="published AWA seen total is inconsistent with its own split sizes")
def test_split_cardinalities_awa_seen_total():
    _, mismatched, _ = compare_cells()
    awa = [m for m in mismatched if m[:4] in UNATTAINABLE]
    detail = ", ".join(sorted({f"{t} got {g} want {w}" for _, t, _, _, g, w in awa}))
    record("split cardinalities, AWA seen total", not awa, f"{len(awa)} cells differ: {detail}")
    assert not awa


# -- 3. reduction lattice -----------------------------------------------------
def test_reduction_lattice():
    t0 = time.perf_counter()
    errors = lattice_errors(n_batches=100)
    seconds = time.perf_counter() - t0
    worst = max(errors.values())
    ok = worst < 1e-6 and len(errors) == 7 and seconds < 60
    record("reduction lattice", ok, f"{len(errors)} composites x 100 batches, max rel err {worst:.1e}, {seconds:.1f}s")
    assert ok, errors


# -- 4. gradients -------------------------------------------------------------
def test_gradient_suite():
    t0 = time.perf_counter()
    errors = gradient_errors()
    seconds = time.perf_counter() - t0
    worst_key = max(errors, key=errors.get)
    kinds = {k[0] for k in errors}
    ok = errors[worst_key] < 1e-4 and kinds == {k.value for k in ModelKind} and seconds < 300
    record("gradient suite", ok, f"{len(errors)} (model, term, params) checks, max rel err {errors[worst_key]:.1e} "
           f"at {worst_key}, {seconds:.1f}s")
    assert ok


# -- 5. flow ------------------------------------------------------------------
def test_flow_correctness():
    t0 = time.perf_counter()
    inv_err, ld_err = 0.0, 0.0
    for dim in (2, 4, 6):
        flow = random_flow(dim, seed=dim)
        g = torch.Generator().manual_seed(100 + dim)
        x = torch.randn(16, dim, generator=g, dtype=torch.float64)
        c = torch.randn(16, 3, generator=g, dtype=torch.float64)
        z, ld = flow(x, c)
        back, _ = flow.inverse(z, c)
        dense = dense_logdet(flow, x, c)
        inv_err = max(inv_err, torch.max(torch.abs(back - x)).item())
        ld_err = max(ld_err, torch.max(torch.abs(ld - dense) / torch.clamp(torch.abs(dense), min=1.0)).item())
    seconds = time.perf_counter() - t0
    ok = inv_err < 1e-5 and ld_err < 1e-5 and seconds < 30
    record("flow", ok, f"d in (2, 4, 6): inverse err {inv_err:.1e}, log-det rel err {ld_err:.1e}, {seconds:.1f}s")
    assert ok


# -- 6 and 7. desk-scale smoke benchmark and determinism ----------------------
def smoke_config(model, task):
    return ExperimentConfig(dataset_id="synthetic", model=model, task=task, hp=toy_hp(model), seed=0,
                            synthetic=SyntheticDatasetSpec(p=8, q=4, d_x=32, d_a=16, per_class=50, noise=0.5))


def serialized_metrics(rec):
    d = json.loads(json.dumps(rec.to_dict()))
    return {k: d[k] for k in ("Z", "U", "S", "H")}


@pytest.fixture(scope="module")
def smoke():
    assert torch.get_num_threads() == 1
    t0 = time.perf_counter()
    out = {(m.value, task): run_experiment(smoke_config(m, task), persist=False)
           for m in ModelKind for task in ("ZSL", "GZSL")}
    return out, time.perf_counter() - t0


def test_desk_smoke_benchmark(smoke):
    results, seconds = smoke
    lines = []
    ok = seconds < 600
    for m in ModelKind:
        z, h = results[(m.value, "ZSL")].Z, results[(m.value, "GZSL")].H
        ok &= z >= 60 and h >= 40
        lines.append(f"{m.value}={z:.1f}/{h:.1f}")
    record("desk smoke", ok, f"Z/H per model {' '.join(lines)} (floors 60/40), {seconds:.0f}s single-threaded")
    assert ok


def test_determinism(smoke):
    results, _ = smoke
    same = []
    for model, task in (("fvaegand2", "GZSL"), ("vaecflow", "ZSL")):
        again = run_experiment(smoke_config(model, task), persist=False)
        same.append(serialized_metrics(again) == serialized_metrics(results[(model, task)]))
    ok = all(same)
    record("determinism", ok, "f-VAEGAN-D2 GZSL and VAE-cFlow ZSL re-runs reproduce Z/U/S/H bit-identically")
    assert ok


# -- 8. per-class accuracy ----------------------------------------------------
def test_per_class_accuracy_imbalance():
    labels = np.array([1] * 10 + [2] * 1000)
    preds = np.full_like(labels, 2)
    per_class = per_class_top1(preds, labels, (1, 2))
    pooled = 100.0 * np.mean(preds == labels)
    ok = per_class == 50.0 and abs(pooled - 99.0) < 0.1
    record("evaluation semantics", ok, f"10-vs-1000 case: per-class {per_class}, pooled {pooled:.2f}")
    assert ok
