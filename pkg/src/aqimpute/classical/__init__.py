"""Conventional classifiers sharing one fit/predict contract."""

from .base import Classifier, Standardizer
from .forest import RandomForest
from .gbt import GradientBoosting
from .knn import KNN, nearest
from .mlp import MLP

REGISTRY = {"knn": KNN, "rf": RandomForest, "gbt": GradientBoosting, "mlp": MLP}


def make_classifier(kind: str, seed: int = 0, **params) -> Classifier:
    """Instantiate a classical model by short name (``knn``, ``rf``, ``gbt``, ``mlp``)."""
    try:
        cls = REGISTRY[kind]
    except KeyError:
        raise ValueError(f"unknown classical model {kind!r}") from None
    return cls(seed=seed, **params)


__all__ = ["Classifier", "Standardizer", "RandomForest", "GradientBoosting", "KNN", "MLP",
           "nearest", "REGISTRY", "make_classifier"]
