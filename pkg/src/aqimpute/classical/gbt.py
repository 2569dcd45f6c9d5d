"""Multiclass gradient-boosted trees with a softmax objective."""

from __future__ import annotations

import numpy as np

from ..numcore.layers import softmax
from .base import Classifier
from .trees import apply_bins, bin_edges, grow_boosting_tree, load_trees, save_trees


class GradientBoosting(Classifier):
    """One second-order regression tree per class per round.

    Scores start at zero, so zero rounds give uniform probabilities. Each
    round uses gradients ``p - y`` and hessians ``p (1 - p)`` of the current
    softmax, fits one tree per class on quantile-binned features and adds
    ``learning_rate`` times its leaf weights. The mean training log-loss
    after every round is kept in ``train_loss_``.
    """

    kind = "gbt"

    def __init__(self, rounds=100, learning_rate=0.3, max_depth=6, reg_lambda=1.0,
                 min_child_weight=1.0, max_bins=256, seed=0):
        self.rounds = rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.min_child_weight = min_child_weight
        self.max_bins = max_bins
        self.seed = seed  # no randomness; kept for a uniform handle

    def fit(self, X, y):
        X, y = self._check_train(X, y)
        n, K = len(X), self.n_classes
        edges = bin_edges(X, self.max_bins)
        B = apply_bins(X, edges)
        Y = np.zeros((n, K))
        Y[np.arange(n), y] = 1.0
        F = np.zeros((n, K))
        self.trees_ = []
        self.train_loss_ = []
        for _ in range(self.rounds):
            P = softmax(F)
            G = P - Y
            H = np.maximum(P * (1.0 - P), 1e-16)
            for k in range(K):
                tree, w = grow_boosting_tree(B, edges, G[:, k], H[:, k], self.max_depth,
                                             self.reg_lambda, self.min_child_weight)
                tree.value *= self.learning_rate
                F[:, k] += self.learning_rate * w
                self.trees_.append(tree)
            self.train_loss_.append(_logloss(F, y))
        self.fitted_ = True
        return self

    def decision_function(self, X):
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        F = np.zeros((len(X), self.n_classes))
        for i, t in enumerate(self.trees_):
            F[:, i % self.n_classes] += t.predict_value(X)[:, 0]
        return F

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def save(self, path):
        self._check_fitted()
        meta = {"kind": self.kind, "n_classes": self.n_classes, "rounds": self.rounds,
                "learning_rate": self.learning_rate, "max_depth": self.max_depth,
                "reg_lambda": self.reg_lambda}
        save_trees(path, self.trees_, meta)

    @classmethod
    def load(cls, path) -> GradientBoosting:
        trees, meta = load_trees(path)
        m = cls(rounds=meta["rounds"], learning_rate=meta["learning_rate"],
                max_depth=meta["max_depth"], reg_lambda=meta["reg_lambda"])
        m.trees_ = trees
        m.fitted_ = True
        return m


def _logloss(F, y):
    z = F - F.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())
