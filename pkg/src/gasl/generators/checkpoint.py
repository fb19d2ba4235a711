"""Checkpoint files: manifest.json (kind, dims, hyperparameters, seed, epoch) plus params.npz."""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
import torch

from gasl.datamodel import HyperParams, _atomic_write_bytes, atomic_write_text
from gasl.errors import ValidationError
from gasl.generators.state import ModelState

CHECKPOINT_VERSION = 1
_RESIZABLE = ("soul", "soul_mask")


def save_checkpoint(state: ModelState, directory, epoch: int | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = {k: v.detach().cpu().numpy() for k, v in state.state_dict().items()}
    buf = io.BytesIO()
    np.savez(buf, **params)
    _atomic_write_bytes(directory / "params.npz", buf.getvalue())
    manifest = {
        "version": CHECKPOINT_VERSION,
        "kind": state.kind.value,
        "d_x": state.d_x,
        "d_a": state.d_a,
        "n_classes": state.n_classes,
        "train_classes": list(state.train_classes),
        "feedback": state.feedback,
        "hyperparams": state.hp.to_dict(),
        "seed": state.seed,
        "epoch": epoch,
        "cls_pretrained": state.cls_pretrained,
        "gate_threshold": state.gate_threshold,
        "gate_classes": list(state.gate_classes),
        "params": sorted(params),
    }
    atomic_write_text(directory / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def load_checkpoint(directory) -> tuple[ModelState, dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"unsupported checkpoint version {manifest.get('version')!r}")
    with np.load(directory / "params.npz") as npz:
        params = {k: torch.as_tensor(npz[k]) for k in npz.files}
    hp = HyperParams.from_dict(manifest["hyperparams"])
    state = ModelState(
        manifest["kind"],
        manifest["d_x"],
        params["A"].numpy(),
        manifest["train_classes"],
        hp,
        seed=manifest["seed"],
        feedback=manifest["feedback"],
    )
    for name in _RESIZABLE:
        setattr(state, name, params[name].clone())
    state.load_state_dict(params)
    state.cls_pretrained = manifest["cls_pretrained"]
    if state.cls_pretrained and state.has("cls"):
        for p in state["cls"].parameters():
            p.requires_grad_(False)
    state.gate_threshold = manifest["gate_threshold"]
    state.gate_classes = tuple(manifest.get("gate_classes", ()))
    for k, v in state.state_dict().items():
        if v.is_floating_point() and not torch.all(torch.isfinite(v)):
            raise ValidationError(f"checkpoint parameter {k} is not finite")
    return state, manifest
