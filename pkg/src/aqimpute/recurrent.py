"""Recurrent classifiers over per-cell hourly windows.

Three models share one network shape (two recurrent layers, batch norm,
dropout, dense head) and differ in sizes and inputs:

* ``lstm``: the feature-view rows of the ``L`` hours ending at the target.
* ``lstm_serial`` / ``gru_serial``: the cell's own label history. Each step
  holds ``(label / 3, known, sin/cos hour, sin/cos weekday)``; only known
  (labelled) history steps are valid, and the target step is valid with its
  label hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical.base import Standardizer
from .core import MISSING, N_CLASSES
from .errors import AllMasked, EmptyTrain, NotFitted
from .features import FeatureTable, feature_view
from .numcore import (
    GRU,
    LSTM,
    BatchNorm,
    Dense,
    Dropout,
    Module,
    ReLU,
    fit_loop,
    l2_penalty,
    softmax,
    softmax_xent,
)
from .numcore.checkpoint import load_checkpoint, save_checkpoint
from .numcore.rng import make_rng

WINDOW = 24
MIN_VALID_STEPS = 4
SERIAL_FEATURES = 6


@dataclass
class WindowSource:
    """Per-row step vectors from which windows ending at any row are cut.

    Rows are in (cell, hour) order with ``n_hours`` rows per cell, as in a
    :class:`FeatureTable`. ``target_steps`` (optional) replaces the step
    vector at the window's last position, e.g. to hide the target label.
    """

    steps: np.ndarray             # (n_rows, F)
    valid: np.ndarray             # (n_rows,) float 0/1
    n_hours: int
    target_steps: np.ndarray | None = None
    length: int = WINDOW

    @property
    def n_features(self) -> int:
        return self.steps.shape[1]

    def build(self, targets):
        """Windows ``(N, L, F)`` and masks ``(N, L)`` ending at ``targets``."""
        targets = np.asarray(targets, dtype=np.int64)
        L = self.length
        offs = np.arange(-L + 1, 1)
        hour = targets % self.n_hours
        inside = (hour[:, None] + offs[None, :]) >= 0
        idx = np.where(inside, targets[:, None] + offs[None, :], 0)
        X = self.steps[idx] * inside[..., None]
        mask = self.valid[idx] * inside
        if self.target_steps is not None:
            X[:, -1] = self.target_steps[targets]
        mask[:, -1] = 1.0
        return X, mask


def classifier_source(table: FeatureTable, mode: str, scaler: Standardizer,
                      length: int = WINDOW) -> WindowSource:
    """Standardized feature-view rows; every step is valid."""
    V = scaler.transform(feature_view(table, mode))
    return WindowSource(V, np.ones(len(V)), table.spec.n_hours, None, length)


def serial_source(table: FeatureTable, known_labels: np.ndarray, length: int = WINDOW) -> WindowSource:
    """Label-history steps from ``known_labels`` (``MISSING`` where unknown)."""
    known_labels = np.asarray(known_labels)
    known = (known_labels != MISSING).astype(float)
    lab = np.where(known > 0, known_labels, 0) / (N_CLASSES - 1)
    ang_h = 2 * np.pi * table.h / 24.0
    ang_d = 2 * np.pi * table.wkd / 7.0
    steps = np.stack([lab, known, np.sin(ang_h), np.cos(ang_h), np.sin(ang_d), np.cos(ang_d)], axis=1)
    hidden = steps.copy()
    hidden[:, :2] = 0.0
    return WindowSource(steps, known, table.spec.n_hours, hidden, length)


ARCHITECTURES = {
    "lstm": dict(cell="lstm", units=(128, 64), dropout=0.3, dense=(64, 32), lr=1e-4, l2=1e-4),
    "lstm_serial": dict(cell="lstm", units=(64, 16), dropout=0.6, dense=(32,), lr=1e-3, l2=0.0),
    "gru_serial": dict(cell="gru", units=(64, 32), dropout=0.6, dense=(32,), lr=1e-3, l2=0.0),
}


class RecurrentNet(Module):
    """rnn -> rnn -> batch norm -> dropout -> ReLU dense layers -> logits."""

    def __init__(self, n_in, cell, units, dropout, dense, rng, n_out=N_CLASSES):
        super().__init__()
        rnn = LSTM if cell == "lstm" else GRU
        self.rnn1 = rnn(n_in, units[0], rng, return_sequences=True)
        self.rnn2 = rnn(units[0], units[1], rng)
        self.bn = BatchNorm(units[1])
        self.drop = Dropout(dropout, rng)
        head = []
        d = units[1]
        for k in dense:
            head += [Dense(d, k, rng), ReLU()]
            d = k
        head.append(Dense(d, n_out, rng))
        self.head = head

    def forward(self, x, mask=None):
        self._mask = mask
        z = self.rnn1(x, mask)
        z = self.rnn2(z, mask)
        z = self.drop(self.bn(z))
        for layer in self.head:
            z = layer(z)
        return z

    def backward(self, grad):
        for layer in reversed(self.head):
            grad = layer.backward(grad)
        grad = self.bn.backward(self.drop.backward(grad))
        grad = self.rnn2.backward(grad)
        return self.rnn1.backward(grad)

    def recurrent_weights(self) -> list[str]:
        return [k for k in self.parameters() if k.startswith(("rnn1.", "rnn2.")) and k[-1] in "WU"]


class RecurrentClassifier:
    """Fit/predict wrapper around :class:`RecurrentNet` working on windows.

    Parameters
    ----------
    kind : {"lstm", "lstm_serial", "gru_serial"}
    max_epochs, patience, batch_size : int
        Epoch cap, early-stopping patience on a 10 % validation split, batch size.
    """

    n_classes = N_CLASSES
    scaler_ = None  # set by callers that feed standardized views

    def __init__(self, kind="lstm", max_epochs=100, patience=20, batch_size=128,
                 val_fraction=0.1, seed=0, **overrides):
        if kind not in ARCHITECTURES:
            raise ValueError(f"unknown recurrent model {kind!r}")
        self.kind = kind
        self.arch = {**ARCHITECTURES[kind], **overrides}
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.val_fraction = val_fraction
        self.seed = seed

    def _net(self, n_in, rng):
        a = self.arch
        return RecurrentNet(n_in, a["cell"], tuple(a["units"]), a["dropout"], tuple(a["dense"]), rng)

    def fit(self, X, mask, y):
        """Train on windows ``X (N, L, F)`` with step masks and target labels."""
        X = np.asarray(X, dtype=float)
        mask = np.asarray(mask, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        keep = mask.sum(axis=1) >= MIN_VALID_STEPS
        X, mask, y = X[keep], mask[keep], y[keep]
        if len(X) == 0:
            raise EmptyTrain(f"{self.kind}: no training window has {MIN_VALID_STEPS} valid steps")
        rng = make_rng(self.seed, self.kind)
        self.net_ = self._net(X.shape[2], rng)
        perm = rng.permutation(len(X))
        n_val = int(round(self.val_fraction * len(X))) if len(X) >= 10 else 0
        val, tr = perm[:n_val], np.sort(perm[n_val:])
        lam = self.arch["l2"]
        names = self.net_.recurrent_weights()

        def batch_loss(idx):
            b = tr[idx]
            loss, g = softmax_xent(self.net_(X[b], mask[b]), y[b])
            self.net_.backward(g)
            return loss

        def val_loss():
            return softmax_xent(self._logits(X[val], mask[val]), y[val])[0]

        self.history_ = fit_loop(
            self.net_, batch_loss, len(tr), rng, lr=self.arch["lr"], batch_size=self.batch_size,
            max_epochs=self.max_epochs, val_loss=val_loss if n_val else None,
            patience=self.patience, plateau=False,
            extra_grads=(lambda p: l2_penalty(p, lam, names)) if lam > 0 else None,
        )
        self.n_in_ = X.shape[2]
        self.fitted_ = True
        return self

    def _logits(self, X, mask, chunk=4096):
        out = []
        for s in range(0, len(X), chunk):
            out.append(self.net_(X[s:s + chunk], mask[s:s + chunk]))
        return np.concatenate(out) if out else np.zeros((0, self.n_classes))

    def predict_proba(self, X, mask):
        if not getattr(self, "fitted_", False):
            raise NotFitted(f"{self.kind}: call fit before predict")
        mask = np.asarray(mask, dtype=float)
        if np.any(mask.sum(axis=1) == 0):
            raise AllMasked("a window has no valid step")
        self.net_.eval()
        return softmax(self._logits(np.asarray(X, dtype=float), mask))

    def predict(self, X, mask):
        return np.argmax(self.predict_proba(X, mask), axis=1)

    def predict_source(self, source: WindowSource, targets, chunk=4096):
        """Probabilities for windows cut from ``source`` in chunks."""
        targets = np.asarray(targets)
        parts = [self.predict_proba(*source.build(targets[s:s + chunk]))
                 for s in range(0, len(targets), chunk)]
        return np.concatenate(parts) if parts else np.zeros((0, self.n_classes))

    def save(self, path):
        tensors = dict(self.net_.state())
        if getattr(self, "scaler_", None) is not None:
            tensors.update(self.scaler_.state())
        meta = {"kind": self.kind, "arch": self.arch, "n_in": self.n_in_, "seed": self.seed}
        save_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path) -> RecurrentClassifier:
        t, meta = load_checkpoint(path)
        m = cls(meta["kind"], seed=meta["seed"], **meta["arch"])
        m.net_ = m._net(meta["n_in"], np.random.default_rng(0))
        m.net_.load_state({k: v for k, v in t.items() if not k.startswith("std.")})
        m.net_.eval()
        m.n_in_ = meta["n_in"]
        m.scaler_ = Standardizer.from_state(t) if "std.mean" in t else None
        m.fitted_ = True
        return m
