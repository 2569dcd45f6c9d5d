from __future__ import annotations

import numpy as np

from ..core import N_CLASSES
from ..errors import EmptyTrain, NotFitted


class Standardizer:
    """Column z-scoring with statistics from the training matrix."""

    def fit(self, X: np.ndarray) -> Standardizer:
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean_) / self.scale_

    def state(self) -> dict[str, np.ndarray]:
        return {"std.mean": self.mean_, "std.scale": self.scale_}

    @classmethod
    def from_state(cls, state) -> Standardizer:
        s = cls()
        s.mean_ = state["std.mean"]
        s.scale_ = state["std.scale"]
        return s


class Classifier:
    """Shared contract: ``fit`` then ``predict_proba`` / ``predict`` over ``N_CLASSES`` labels."""

    kind = "base"
    n_classes = N_CLASSES

    def fit(self, X, y):
        raise NotImplementedError

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        # argmax takes the first maximum, so ties go to the lowest class
        return np.argmax(self.predict_proba(X), axis=1)

    def _check_train(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        if len(X) == 0:
            raise EmptyTrain(f"{self.kind}: empty training set")
        if len(X) != len(y):
            raise ValueError("X and y lengths differ")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        return X, y

    def _check_fitted(self):
        if not getattr(self, "fitted_", False):
            raise NotFitted(f"{self.kind}: call fit before predict")
