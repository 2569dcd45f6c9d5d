"""Two-hidden-layer tanh perceptron with softmax output."""

from __future__ import annotations

import numpy as np

from ..numcore import Dense, Module, Sequential, Tanh, fit_loop, l2_penalty, softmax, softmax_xent
from ..numcore.checkpoint import load_checkpoint, save_checkpoint
from ..numcore.rng import make_rng
from .base import Classifier, Standardizer


class _Net(Module):
    def __init__(self, d, hidden, n_out, rng):
        super().__init__()
        layers = []
        for h in hidden:
            layers += [Dense(d, h, rng), Tanh()]
            d = h
        layers.append(Dense(d, n_out, rng))
        self.body = Sequential(*layers)

    def forward(self, x):
        return self.body(x)

    def backward(self, grad):
        return self.body.backward(grad)


class MLP(Classifier):
    """Mini-batch Adam on cross-entropy with validation early stopping.

    Parameters
    ----------
    hidden : tuple of int
    lr : float
        Initial Adam step; halved after 5 epochs without training-loss gain.
    batch_size, max_epochs, patience : int
    val_fraction : float
        Share of training rows held out for early stopping.
    l2 : float
        Weight decay on dense kernels.
    """

    kind = "mlp"

    def __init__(self, hidden=(82, 83), lr=1e-3, batch_size=128, max_epochs=200, patience=20,
                 val_fraction=0.1, l2=1e-4, seed=0):
        self.hidden = tuple(hidden)
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.l2 = l2
        self.seed = seed

    def fit(self, X, y):
        X, y = self._check_train(X, y)
        self.scaler_ = Standardizer().fit(X)
        Z = self.scaler_.transform(X)
        rng = make_rng(self.seed, "mlp")
        self.net_ = _Net(X.shape[1], self.hidden, self.n_classes, rng)
        perm = rng.permutation(len(Z))
        n_val = int(round(self.val_fraction * len(Z))) if len(Z) >= 10 else 0
        val, tr = perm[:n_val], np.sort(perm[n_val:])
        Zt, yt = Z[tr], y[tr]

        def batch_loss(idx):
            logits = self.net_(Zt[idx])
            loss, g = softmax_xent(logits, yt[idx])
            self.net_.backward(g)
            return loss

        def val_loss():
            return softmax_xent(self.net_(Z[val]), y[val])[0]

        self.history_ = fit_loop(
            self.net_, batch_loss, len(tr), rng, lr=self.lr, batch_size=self.batch_size,
            max_epochs=self.max_epochs, val_loss=val_loss if n_val else None,
            patience=self.patience, extra_grads=lambda p: l2_penalty(p, self.l2),
        )
        self.fitted_ = True
        return self

    def predict_proba(self, X):
        self._check_fitted()
        return softmax(self.net_(self.scaler_.transform(np.asarray(X, dtype=float))))

    def save(self, path):
        self._check_fitted()
        tensors = {**self.net_.state(), **self.scaler_.state()}
        save_checkpoint(path, tensors, {"kind": self.kind, "hidden": list(self.hidden),
                                        "n_in": int(self.scaler_.mean_.shape[0])})

    @classmethod
    def load(cls, path) -> MLP:
        t, meta = load_checkpoint(path)
        m = cls(hidden=tuple(meta["hidden"]))
        m.net_ = _Net(meta["n_in"], m.hidden, m.n_classes, np.random.default_rng(0))
        m.net_.load_state(t)
        m.net_.eval()
        m.scaler_ = Standardizer.from_state(t)
        m.fitted_ = True
        return m
