"""Bagged CART forest."""

from __future__ import annotations

import math

import numpy as np

from ..numcore.rng import make_rng
from .base import Classifier
from .trees import Tree, grow_cart, load_trees, save_trees


class RandomForest(Classifier):
    """Majority vote over bootstrap-trained Gini trees.

    Parameters
    ----------
    n_trees : int
        Number of trees.
    min_samples_leaf : int
        Smallest leaf a split may create.
    max_features : int or None
        Candidate features per split; ``None`` means ``floor(sqrt(d))``.
    seed : int
        Root seed; tree ``i`` draws from a stream derived from ``(seed, i)``
        so trees can be grown in any order with identical results.
    """

    kind = "rf"

    def __init__(self, n_trees=10, min_samples_leaf=2, max_features=None, max_depth=None, seed=0):
        self.n_trees = n_trees
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.max_depth = max_depth
        self.seed = seed

    def fit_tree(self, X, y, i) -> Tree:
        rng = make_rng(self.seed, "rf", i)
        n, d = X.shape
        boot = rng.integers(0, n, size=n)
        mtry = self.max_features or max(1, int(math.isqrt(d)))
        return grow_cart(X[boot], y[boot], self.n_classes, rng, max_features=mtry,
                         min_samples_leaf=self.min_samples_leaf, max_depth=self.max_depth)

    def fit(self, X, y):
        X, y = self._check_train(X, y)
        self.trees_ = [self.fit_tree(X, y, i) for i in range(self.n_trees)]
        self.fitted_ = True
        return self

    def predict_proba(self, X):
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        votes = np.zeros((len(X), self.n_classes))
        for t in self.trees_:
            counts = t.predict_value(X)
            # each tree votes for its leaf majority (lowest class on ties)
            votes[np.arange(len(X)), np.argmax(counts, axis=1)] += 1.0
        return votes / len(self.trees_)

    def save(self, path):
        self._check_fitted()
        meta = {"kind": self.kind, "n_classes": self.n_classes, "seed": self.seed,
                "n_trees": self.n_trees, "min_samples_leaf": self.min_samples_leaf}
        save_trees(path, self.trees_, meta)

    @classmethod
    def load(cls, path) -> RandomForest:
        trees, meta = load_trees(path)
        m = cls(n_trees=meta["n_trees"], min_samples_leaf=meta["min_samples_leaf"], seed=meta["seed"])
        m.trees_ = trees
        m.fitted_ = True
        return m
