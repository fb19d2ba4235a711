"""Final-stage classifiers, training-set composition and the evaluation metrics."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from gasl.datamodel import FeatureSet, Task, VisualProvenance
from gasl.errors import ConfigError, DegenerateInput, EvalError, ValidationError
from gasl.generators.state import ModelKind
from gasl.seeding import derive_seed, rng


class ClassifierKind(str, enum.Enum):
    SOFTMAX = "softmax_1layer"
    SVM = "svm"
    CASCADE = "cascade"


def classifier_kind_for(model, task) -> ClassifierKind:
    model, task = ModelKind(model), Task(task)
    if model == ModelKind.CVAE:
        return ClassifierKind.SVM
    if model == ModelKind.LISGAN and task.generalized:
        return ClassifierKind.CASCADE
    return ClassifierKind.SOFTMAX


# -- training-set composition ----------------------------------------------
_LATENT_KINDS = {ModelKind.CADAVAE, ModelKind.TFVAEGAN, ModelKind.FREE, ModelKind.GCMCF}


def _view(kind, X, latent):
    if kind == ModelKind.CADAVAE:
        return np.asarray(latent.h)
    if kind in (ModelKind.TFVAEGAN, ModelKind.GCMCF):
        return np.concatenate([X, np.asarray(latent.h)], axis=1)
    if kind == ModelKind.FREE:
        if latent.a_hat is None:
            raise ConfigError("FREE composition needs reconstructed descriptions in the latent batch")
        return np.concatenate([X, np.asarray(latent.h), np.asarray(latent.a_hat)], axis=1)
    return X


def compose_training_set(kind, real: FeatureSet, synthetic: FeatureSet, latents, task, p: int) -> FeatureSet:
    """Assemble the classifier training set of ``kind`` for ``task``.

    ``real`` holds the real training rows (seen, plus few-shot unseen rows
    for the unseen-shot tasks); ``synthetic`` holds generated rows; ``p`` is
    the number of seen classes (labels 1..p).  ``latents`` maps "real" and
    "synthetic" to the :class:`LatentBatch` aligned with each set; it is
    required by kinds whose classifier consumes latent features.

    Non-generalized tasks keep only unseen-class rows.  CVAE replaces real
    seen rows by synthetic ones.
    """
    kind, task = ModelKind(kind), Task(task)
    if kind in _LATENT_KINDS:
        if not latents or latents.get("real") is None or latents.get("synthetic") is None:
            raise ConfigError(f"{kind.value} classifier needs latent features for real and synthetic rows")
        if len(latents["real"].h) != len(real) or len(latents["synthetic"].h) != len(synthetic):
            raise ValidationError("latent batches are not aligned with their feature sets")
        Xr = _view(kind, real.X, latents["real"])
        Xs = _view(kind, synthetic.X, latents["synthetic"])
    else:
        Xr, Xs = real.X, synthetic.X

    keep_real = real.y > p if not task.generalized or kind == ModelKind.CVAE else np.ones(len(real), bool)
    keep_syn = synthetic.y > p if not task.generalized else np.ones(len(synthetic), bool)
    X = np.concatenate([Xr[keep_real], Xs[keep_syn]])
    y = np.concatenate([real.y[keep_real], synthetic.y[keep_syn]])
    if len(y) == 0:
        raise ValidationError("classifier training set is empty")
    return FeatureSet(X, y, VisualProvenance.SYNTHETIC, real.dataset_id, real.n_classes)


# -- classifiers ---------------------------------------------------------------
@dataclass
class ClassifierBundle:
    kind: ClassifierKind
    scope: tuple[int, ...]
    model: object
    extra: dict = field(default_factory=dict)

    def scores(self, X) -> np.ndarray:
        """(n, len(scope)) decision scores; higher is better."""
        X = np.array(X, dtype=np.float32)
        if self.kind == ClassifierKind.SVM:
            s = self.model.decision_function(X)
            if s.ndim == 1:
                s = np.stack([-s, s], axis=1)
            return s
        if self.kind == ClassifierKind.CASCADE:
            return self._cascade_scores(X)
        with torch.no_grad():
            return self.model(torch.as_tensor(X)).numpy()

    def _cascade_scores(self, X):
        router, branches = self.model
        n = len(X)
        out = np.full((n, len(self.scope)), -np.inf, dtype=np.float64)
        with torch.no_grad():
            to_seen = router(torch.as_tensor(X)).argmax(1).numpy() == 0
        for flag, (classes, head) in zip((True, False), branches):
            if head is None:
                continue
            rows = np.where(to_seen == flag)[0] if branches[0][1] is not None and branches[1][1] is not None else np.arange(n)
            if len(rows) == 0:
                continue
            cols = [self.scope.index(c) for c in classes]
            with torch.no_grad():
                out[np.ix_(rows, cols)] = F.log_softmax(head(torch.as_tensor(X[rows])), dim=1).numpy()
        return out

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.scope)[self.scores(X).argmax(1)]

    def predict_within(self, X, classes) -> np.ndarray:
        """Argmax restricted to ``classes`` (lowest index wins on ties)."""
        cols = [self.scope.index(int(c)) for c in classes]
        s = self.scores(X)[:, cols]
        return np.asarray(classes)[s.argmax(1)]


def _fit_softmax(X, y_idx, n_out, epochs, lr, seed, batch_size=256, callback=None):
    torch.manual_seed(derive_seed(seed, "softmax-init"))
    model = nn.Linear(X.shape[1], n_out)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    X = torch.tensor(np.asarray(X), dtype=torch.float32)
    y_idx = torch.tensor(np.asarray(y_idx), dtype=torch.long)
    gen = rng(seed, "softmax-batches")
    for epoch in range(epochs):
        order = torch.as_tensor(gen.permutation(len(y_idx)))
        for i in range(0, len(y_idx), batch_size):
            idx = order[i : i + batch_size]
            opt.zero_grad()
            F.cross_entropy(model(X[idx]), y_idx[idx]).backward()
            opt.step()
        if callback is not None:
            callback(epoch, model)
    return model


def train_classifier(kind, train: FeatureSet, scope, epochs: int = 25, lr: float = 1e-3, seed: int = 0,
                     p: int | None = None, callback=None) -> ClassifierBundle:
    """Train a final classifier over ``scope``.

    ``callback(epoch, bundle)`` fires after each softmax epoch (once for the
    other kinds) so callers can track the best evaluation epoch.  The cascade
    kind needs ``p`` to tell seen from unseen classes.
    """
    kind = ClassifierKind(kind)
    scope = tuple(sorted(int(c) for c in scope))
    if len(train) == 0:
        raise ValidationError("empty classifier training set")
    if not np.isin(train.y, scope).all():
        raise ValidationError("training labels fall outside the class scope")
    index = {c: i for i, c in enumerate(scope)}
    y_idx = np.array([index[int(c)] for c in train.y])

    if kind == ClassifierKind.SVM:
        from sklearn.svm import LinearSVC

        if len(np.unique(train.y)) < 2:
            raise DegenerateInput("an SVM needs at least two classes")
        if len(np.unique(train.y)) != len(scope):
            raise ValidationError("every scope class needs SVM training rows")
        svm = LinearSVC(C=1.0, random_state=derive_seed(seed, "svm") % (2**31), max_iter=5000)
        svm.fit(train.X, train.y)
        bundle = ClassifierBundle(kind, scope, svm)
        if list(svm.classes_) != list(scope):
            raise ValidationError("SVM classes do not match the scope")
        if callback is not None:
            callback(0, bundle)
        return bundle

    if kind == ClassifierKind.SOFTMAX:
        bundle = ClassifierBundle(kind, scope, None)

        def on_epoch(epoch, model):
            bundle.model = model
            if callback is not None:
                callback(epoch, bundle)

        bundle.model = _fit_softmax(train.X, y_idx, len(scope), epochs, lr, seed, callback=on_epoch)
        return bundle

    # Cascade: a seen/unseen router, then a softmax within the routed branch.
    if p is None:
        raise ConfigError("cascade classifier needs the number of seen classes")
    seen = tuple(c for c in scope if c <= p)
    unseen = tuple(c for c in scope if c > p)
    branches = []
    for i, classes in enumerate((seen, unseen)):
        if not classes:
            branches.append((classes, None))
            continue
        sel = np.isin(train.y, classes)
        local = {c: j for j, c in enumerate(classes)}
        head = _fit_softmax(train.X[sel], [local[int(c)] for c in train.y[sel]], len(classes), epochs, lr,
                            derive_seed(seed, "branch", i))
        branches.append((classes, head))
    router = _fit_softmax(train.X, (train.y > p).astype(np.int64), 2, epochs, lr, derive_seed(seed, "router"))
    bundle = ClassifierBundle(kind, scope, (router, branches))
    if callback is not None:
        callback(epochs - 1, bundle)
    return bundle


# -- metrics -----------------------------------------------------------------
def per_class_top1(preds, labels, scope) -> float:
    """Mean over scope classes of the within-class accuracy, in percent."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    scope = [int(c) for c in scope]
    if not scope:
        raise EvalError("empty class scope")
    accs = []
    for c in scope:
        sel = labels == c
        if not sel.any():
            raise EvalError(f"scope class {c} has no test samples")
        accs.append(np.mean(preds[sel] == c))
    return float(100.0 * np.mean(accs))


def per_class_table(preds, labels, scope) -> dict[int, float]:
    preds, labels = np.asarray(preds), np.asarray(labels)
    return {int(c): float(100.0 * np.mean(preds[labels == c] == c)) for c in scope if np.any(labels == c)}


def harmonic_mean(U: float, S: float) -> float:
    if U + S == 0:
        return 0.0
    return 2.0 * S * U / (S + U)


def timed(fn, *args, **kwargs):
    """Run ``fn`` and return (result, wall-clock hours)."""
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, (time.perf_counter() - t0) / 3600.0


def evaluate(predict, test_seen: FeatureSet | None, test_unseen: FeatureSet, task, p: int, q: int) -> dict:
    """Z for conventional tasks, (U, S, H) for generalized ones.

    ``predict(X)`` returns labels; it must already restrict itself to the
    scope of the task.
    """
    task = Task(task)
    unseen_scope = range(p + 1, p + q + 1)
    if not task.generalized:
        return {"Z": per_class_top1(predict(test_unseen.X), test_unseen.y, unseen_scope)}
    if test_seen is None or len(test_seen) == 0:
        raise EvalError(f"{task.value} evaluation needs a non-empty seen test set")
    U = per_class_top1(predict(test_unseen.X), test_unseen.y, unseen_scope)
    S = per_class_top1(predict(test_seen.X), test_seen.y, range(1, p + 1))
    return {"U": U, "S": S, "H": harmonic_mean(U, S)}
