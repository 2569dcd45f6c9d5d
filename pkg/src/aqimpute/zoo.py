"""One fit/predict/save/load surface over every model family.

Feature-row models (``knn``, ``rf``, ``gbt``, ``mlp``, ``ddpm``, ``ldm``)
read a ``nf``/``wf`` view and may be trained on a SMOTE-balanced copy of
the training rows. ``lstm`` reads windows of the view; the serial models
read label histories built from the training labels only and are never
SMOTE-balanced.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .balance import SmoteConfig, smote
from .classical import REGISTRY as CLASSICAL
from .classical.base import Standardizer
from .core import MISSING
from .diffusion import DDPM, LDM
from .features import FeatureTable, feature_view, onehot_groups
from .numcore.rng import derive_seed
from .recurrent import RecurrentClassifier, classifier_source, serial_source

ROW_MODELS = {**CLASSICAL, "ddpm": DDPM, "ldm": LDM}
WINDOW_MODELS = ("lstm",)
SERIAL_MODELS = ("lstm_serial", "gru_serial")
KINDS = tuple(ROW_MODELS) + WINDOW_MODELS + SERIAL_MODELS
NEURAL = ("mlp", "ddpm", "ldm", "lstm", "lstm_serial", "gru_serial")
TREE_MODELS = ("rf", "gbt")

DISPLAY = {"knn": "KNN", "rf": "RF", "gbt": "XGB", "mlp": "MLP", "ddpm": "DDPM", "ldm": "LDM",
           "lstm": "LSTM", "lstm_serial": "LSTM", "gru_serial": "GRU"}


def check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise ValueError(f"unknown model {kind!r}; choose from {', '.join(KINDS)}")
    return kind


def effective_mode(kind: str, mode: str) -> str:
    """Serial models ignore the feature view and are tagged ``s``."""
    return "s" if kind in SERIAL_MODELS else mode


def run_name(kind: str, mode: str) -> str:
    return f"{kind}_{effective_mode(kind, mode)}"


def display_name(kind: str, mode: str) -> tuple[str, str | None]:
    m = effective_mode(kind, mode)
    if kind in ("ddpm", "ldm"):
        return DISPLAY[kind], None if m == "wf" else m
    if kind == "gru_serial":
        return DISPLAY[kind], None
    if kind == "lstm":
        return DISPLAY[kind], "c" if m == "wf" else f"c, {m}"
    return DISPLAY[kind], m


def model_file(outdir, kind: str, mode: str) -> Path:
    ext = ".trees.csv" if kind in TREE_MODELS else ".ck"
    return Path(outdir) / (run_name(kind, mode) + ext)


def known_labels(table: FeatureTable, train_idx) -> np.ndarray:
    """Labels visible to serial models: the training rows only."""
    out = np.full(len(table), MISSING, dtype=np.int64)
    out[train_idx] = table.label[train_idx]
    return out


def build(kind: str, seed: int, mode: str = "wf", epochs: int | None = None):
    check_kind(kind)
    s = derive_seed(seed, "model", kind, effective_mode(kind, mode))
    kw = {} if epochs is None or kind not in NEURAL else {"max_epochs": int(epochs)}
    if kind in ROW_MODELS:
        return ROW_MODELS[kind](seed=s, **kw)
    return RecurrentClassifier(kind, seed=s, **kw)


def fit(kind: str, table: FeatureTable, mode: str, train_idx, seed: int, use_smote=True,
        epochs=None):
    """Train one model on the rows ``train_idx`` of ``table``."""
    model = build(kind, seed, mode, epochs)
    train_idx = np.asarray(train_idx)
    y = table.label[train_idx]
    if kind in ROW_MODELS:
        X = feature_view(table, mode, train_idx)
        if use_smote:
            X, y = smote(X, y, SmoteConfig(seed=derive_seed(seed, "smote", mode)),
                         onehot_groups(table.spec))
        return model.fit(X, y)
    if kind in WINDOW_MODELS:
        scaler = Standardizer().fit(feature_view(table, mode, train_idx))
        X, m = classifier_source(table, mode, scaler).build(train_idx)
        model.fit(X, m, y)
        model.scaler_ = scaler
        return model
    X, m = serial_source(table, known_labels(table, train_idx)).build(train_idx)
    return model.fit(X, m, y)


def predict_proba(kind: str, model, table: FeatureTable, mode: str, idx, history=None):
    """Class probabilities for rows ``idx``.

    ``history`` holds the labels serial models may look back on
    (``MISSING`` elsewhere); it defaults to the table's labels.
    """
    idx = np.asarray(idx)
    if kind in ROW_MODELS:
        out = []
        for s in range(0, len(idx), 8192):
            out.append(model.predict_proba(feature_view(table, mode, idx[s:s + 8192])))
        return np.concatenate(out) if out else np.zeros((0, model.n_classes))
    if kind in WINDOW_MODELS:
        return model.predict_source(classifier_source(table, mode, model.scaler_), idx)
    hist = table.label if history is None else history
    return model.predict_source(serial_source(table, hist), idx)


def save(kind: str, model, path) -> None:
    model.save(path)


def load(kind: str, path):
    check_kind(kind)
    if kind in ROW_MODELS:
        return ROW_MODELS[kind].load(path)
    return RecurrentClassifier.load(path)
