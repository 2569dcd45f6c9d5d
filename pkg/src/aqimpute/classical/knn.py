"""Brute-force k-nearest-neighbour vote on standardized features."""

from __future__ import annotations

import numpy as np

from ..numcore.checkpoint import load_checkpoint, save_checkpoint
from .base import Classifier, Standardizer


def nearest(train: np.ndarray, queries: np.ndarray, k: int, chunk: int = 2048) -> np.ndarray:
    """Indices of the ``k`` nearest training rows per query, nearest first.

    Equal distances are ordered by training index. Candidates are screened
    with the ``|a|^2 - 2ab + |b|^2`` expansion and then ranked by the exact
    squared distance, widening the candidate set whenever rounding could
    have hidden a tie at the k-th place.
    """
    n = len(train)
    k = min(k, n)
    sq_t = np.einsum("ij,ij->i", train, train)
    out = np.empty((len(queries), k), dtype=np.int64)
    m = min(n, k + 60)
    for s in range(0, len(queries), chunk):
        Q = queries[s:s + chunk]
        # |q|^2 is constant per row and does not change the ranking
        D = Q @ train.T
        D *= -2.0
        D += sq_t
        if m < n:
            cand = np.argpartition(D, m - 1, axis=1)[:, :m]
        else:
            cand = np.tile(np.arange(n), (len(Q), 1))
        exact = ((Q[:, None, :] - train[cand]) ** 2).sum(axis=2)
        order = np.lexsort((cand, exact), axis=1)
        out[s:s + len(Q)] = np.take_along_axis(cand, order, axis=1)[:, :k]
        if m < n:
            # rows outside the candidates are at least the m-th screened distance away
            sq_q = np.einsum("ij,ij->i", Q, Q)
            tol = 1e-9 * (1.0 + sq_q + sq_t.max())
            dmth = np.take_along_axis(D, cand, axis=1).max(axis=1) + sq_q
            kth = np.take_along_axis(exact, order, axis=1)[:, k - 1]
            for i in np.flatnonzero(dmth - tol <= kth + tol):
                d = ((train - Q[i]) ** 2).sum(axis=1)
                out[s + i] = np.lexsort((np.arange(n), d))[:k]
    return out


class KNN(Classifier):
    """Majority vote of the ``k`` nearest Euclidean neighbours.

    ``predict_proba`` returns the neighbours' class frequencies, so
    ``predict`` resolves vote ties to the lowest class index.
    """

    kind = "knn"

    def __init__(self, k=4, standardize=True, seed=0):
        self.k = k
        self.standardize = standardize
        self.seed = seed

    def fit(self, X, y):
        X, y = self._check_train(X, y)
        self.scaler_ = Standardizer().fit(X) if self.standardize else None
        self.X_ = self._scale(X)
        self.y_ = y
        self.fitted_ = True
        return self

    def _scale(self, X):
        return self.scaler_.transform(X) if self.scaler_ is not None else X

    def kneighbors(self, X) -> np.ndarray:
        self._check_fitted()
        return nearest(self.X_, self._scale(np.asarray(X, dtype=float)), self.k)

    def predict_proba(self, X):
        idx = self.kneighbors(X)
        labels = self.y_[idx]
        P = np.zeros((len(idx), self.n_classes))
        for c in range(self.n_classes):
            P[:, c] = (labels == c).mean(axis=1)
        return P

    def save(self, path):
        self._check_fitted()
        tensors = {"X": self.X_, "y": self.y_.astype(float)}
        if self.scaler_ is not None:
            tensors.update(self.scaler_.state())
        save_checkpoint(path, tensors, {"kind": self.kind, "k": self.k,
                                        "standardize": self.standardize})

    @classmethod
    def load(cls, path) -> KNN:
        t, meta = load_checkpoint(path)
        m = cls(k=meta["k"], standardize=meta["standardize"])
        m.scaler_ = Standardizer.from_state(t) if meta["standardize"] else None
        m.X_ = t["X"]
        m.y_ = t["y"].astype(np.int64)
        m.fitted_ = True
        return m
