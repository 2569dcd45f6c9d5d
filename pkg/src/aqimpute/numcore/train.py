"""Mini-batch training loop with plateau halving and early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import Adam, PlateauHalver


@dataclass
class History:
    train_loss: list = field(default_factory=list)  # including any penalty
    data_loss: list = field(default_factory=list)   # without the penalty
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = -1


def fit_loop(model, batch_loss, n, rng, *, lr=1e-3, batch_size=128, max_epochs=100,
             val_loss=None, patience=20, plateau=True, extra_grads=None) -> History:
    """Train ``model`` in place.

    Parameters
    ----------
    model : Module
        Holder of every trainable parameter.
    batch_loss : callable
        ``batch_loss(idx) -> float``; runs forward and backward on the rows
        ``idx`` so that gradients sit in ``model``.
    n : int
        Number of training rows.
    rng : numpy.random.Generator
        Shuffles the row order each epoch.
    val_loss : callable, optional
        ``val_loss() -> float`` evaluated after each epoch in eval mode.
        With it, training stops after ``patience`` epochs without improvement
        and the best weights are restored.
    extra_grads : callable, optional
        ``extra_grads(params) -> (loss, grads)`` added to every step,
        e.g. an L2 penalty.
    """
    params = model.parameters()
    opt = Adam(params, lr=lr)
    sched = PlateauHalver(opt) if plateau else None
    hist = History()
    best, best_state, wait = np.inf, None, 0
    for epoch in range(max_epochs):
        model.train()
        order = rng.permutation(n)
        total, raw, seen = 0.0, 0.0, 0
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            model.zero_grad()
            loss = batch_loss(idx)
            raw += loss * len(idx)
            grads = model.gradients()
            if extra_grads is not None:
                pen, pgrads = extra_grads(params)
                loss += pen
                for k, g in pgrads.items():
                    grads[k] = grads[k] + g
            opt.step(grads)
            total += loss * len(idx)
            seen += len(idx)
        epoch_loss = total / max(seen, 1)
        hist.train_loss.append(epoch_loss)
        hist.data_loss.append(raw / max(seen, 1))
        hist.lr.append(opt.lr)
        if sched is not None:
            sched.update(epoch_loss)
        if val_loss is not None:
            model.eval()
            v = float(val_loss())
            hist.val_loss.append(v)
            if v < best:
                best, wait = v, 0
                best_state = {k: a.copy() for k, a in model.state().items()}
                hist.best_epoch = epoch
            else:
                wait += 1
                if wait >= patience:
                    break
    if best_state is not None:
        model.load_state(best_state)
    model.eval()
    return hist
