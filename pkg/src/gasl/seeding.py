"""Seed-derivation tree: every component draws from hash(parent seed, name)."""

import hashlib

import numpy as np
import torch


def derive_seed(parent: int, *names) -> int:
    key = ":".join([str(int(parent)), *map(str, names)])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little") & (2**63 - 1)


def rng(parent: int, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(parent, *names))


def torch_generator(parent: int, *names) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(derive_seed(parent, *names))
    return g
