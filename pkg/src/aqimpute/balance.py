"""SMOTE oversampling for the training split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyClass


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbours: int = 5
    target_count: int | None = None  # None -> majority class size
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.k_neighbours < 1:
            raise ValueError("k_neighbours must be >= 1")


def _knn_within(X: np.ndarray, k: int, chunk: int = 2048) -> np.ndarray:
    """k nearest other rows of every row (Euclidean), ties broken by index."""
    n = len(X)
    out = np.empty((n, k), dtype=np.int64)
    sq = np.einsum("ij,ij->i", X, X)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d = sq[start:stop, None] - 2.0 * X[start:stop] @ X.T + sq[None, :]
        np.maximum(d, 0.0, out=d)
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        out[start:stop] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def _project_onehot(X: np.ndarray, groups) -> None:
    for g in groups:
        g = list(g)
        block = X[:, g]
        hot = np.argmax(block, axis=1)
        X[:, g] = 0.0
        X[np.arange(len(X)), np.asarray(g)[hot]] = 1.0


def smote(X, y, config: SmoteConfig = SmoteConfig(), onehot_groups=(), classes=None):
    """Oversample minority classes up to ``target_count`` rows each.

    Each synthetic row is ``x_i + u * (x_nn - x_i)`` with ``u ~ U(0, 1)`` and
    ``x_nn`` one of the ``k`` nearest same-class rows of parent ``x_i``.
    Neighbour search uses z-scored columns when ``config.standardize`` is set;
    interpolation happens in the original units. One-hot blocks of synthetic
    rows are snapped back to a single flag (argmax). Originals come first and
    are returned unchanged; synthetics follow in (class, parent, replicate)
    order. A class with a single row is duplicated.

    Parameters
    ----------
    classes : iterable of int, optional
        Classes that must be present; missing ones raise :class:`EmptyClass`.
        Defaults to the labels found in ``y``.

    Returns
    -------
    X_out, y_out : ndarray
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    present, counts = np.unique(y, return_counts=True)
    if classes is not None:
        absent = sorted(set(int(c) for c in classes) - set(present.tolist()))
        if absent:
            raise EmptyClass(f"no training rows for class(es) {absent}")
    if len(present) == 0:
        raise EmptyClass("empty training set")
    target = int(counts.max()) if config.target_count is None else int(config.target_count)

    scale = np.ones(X.shape[1])
    if config.standardize and len(X) > 1:
        sd = X.std(axis=0)
        scale = np.where(sd > 0, sd, 1.0)
    Z = X / scale

    rng = np.random.default_rng(config.seed)
    new_X = [X]
    new_y = [y]
    for cls, n_c in zip(present, counts):
        need = target - int(n_c)
        if need <= 0:
            continue
        members = np.flatnonzero(y == cls)
        base, extra = divmod(need, n_c)
        reps = np.full(n_c, base)
        reps[np.sort(rng.choice(n_c, size=extra, replace=False))] += 1
        k = min(config.k_neighbours, n_c - 1)
        nbrs = _knn_within(Z[members], k) if k > 0 else None
        parents = np.repeat(np.arange(n_c), reps)
        if k > 0:
            pick = nbrs[parents, rng.integers(0, k, size=need)]
            u = rng.random(need)[:, None]
        else:
            pick = parents
            u = np.zeros((need, 1))
        xp = X[members[parents]]
        xn = X[members[pick]]
        synth = xp + u * (xn - xp)
        _project_onehot(synth, onehot_groups)
        new_X.append(synth)
        new_y.append(np.full(need, cls, dtype=y.dtype))
    return np.vstack(new_X), np.concatenate(new_y)
