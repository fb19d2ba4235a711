"""Published statistics of the five benchmark datasets and label layouts realizing them.

``benchmark_layout`` builds a dense label vector plus canonical base
partition whose counts equal the published ZSL/GZSL split sizes.  Class
sizes are spread as evenly as the totals allow.  This gives the splits
module real index sets to operate on without shipping feature files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gasl.datamodel import DatasetMeta
from gasl.errors import ConfigError
from gasl.splits import BasePartition


@dataclass(frozen=True)
class BenchmarkStats:
    name: str
    d_a: int
    p: int
    q: int
    n_total: int
    n_seen: int
    n_unseen: int
    gzsl_train_seen: int
    gzsl_test_seen: int
    images_available: bool = True


# (#A, #Ys, #Yu, total, #Xs, #Xu) and the GZSL train/test-seen sizes.
# AWA: the published seen/unseen image counts (25517/4958) disagree with the
# published proposed split (19832 + 4958 seen, 5685 unseen); the layout follows
# the split, which is the only reading consistent with 30475 images in total.
BENCHMARKS: dict[str, BenchmarkStats] = {
    "FLO": BenchmarkStats("FLO", 1024, 82, 20, 8189, 7034, 1155, 5631, 1403),
    "CUB": BenchmarkStats("CUB", 312, 150, 50, 11788, 8821, 2967, 7057, 1764),
    "SUN": BenchmarkStats("SUN", 102, 645, 72, 14340, 12900, 1440, 10320, 2580),
    "AWA2": BenchmarkStats("AWA2", 85, 40, 10, 37322, 29409, 7913, 23527, 5882),
    "AWA": BenchmarkStats("AWA", 85, 40, 10, 30475, 24790, 5685, 19832, 4958, images_available=False),
}

# Per-dataset regularized-finetuning settings (alpha, Delta, lambda).
REGULARIZED_FINETUNE = {
    "FLO": (0.01, 1.0, 0.9),
    "CUB": (0.1, 0.01, 0.99),
    "SUN": (0.01, 1.0, 0.9),
    "AWA2": (0.1, 0.1, 0.9),
}

# Weight on the description-anchored direction of the imbalanced text loss.
IMBALANCED_ALPHA = {"FLO": 0.7}


def _spread(total: int, parts: int) -> np.ndarray:
    base, rem = divmod(total, parts)
    return np.array([base + (1 if i < rem else 0) for i in range(parts)], dtype=np.int64)


def benchmark_layout(name: str) -> tuple[DatasetMeta, BasePartition]:
    try:
        st = BENCHMARKS[name.upper()]
    except KeyError:
        raise ConfigError(f"unknown benchmark {name!r}; known: {sorted(BENCHMARKS)}") from None

    seen_sizes = _spread(st.n_seen, st.p)
    unseen_sizes = _spread(st.n_unseen, st.q)
    test_per_seen = _spread(st.gzsl_test_seen, st.p)
    sizes = np.concatenate([seen_sizes, unseen_sizes])
    labels = np.repeat(np.arange(1, st.p + st.q + 1), sizes)

    train_seen, test_seen = [], []
    start = 0
    for c in range(st.p):
        n_c, t_c = seen_sizes[c], test_per_seen[c]
        idx = np.arange(start, start + n_c)
        train_seen.append(idx[: n_c - t_c])
        test_seen.append(idx[n_c - t_c :])
        start += n_c
    test_unseen = np.arange(start, st.n_total)

    meta = DatasetMeta(
        dataset_id=st.name,
        p=st.p,
        q=st.q,
        d_a=st.d_a,
        n_total=st.n_total,
        n_seen=st.n_seen,
        n_unseen=st.n_unseen,
        per_class_counts={i + 1: int(s) for i, s in enumerate(sizes)},
        images_available=st.images_available,
    )
    base = BasePartition(labels, st.p, np.concatenate(train_seen), np.concatenate(test_seen), test_unseen)
    return meta, base
