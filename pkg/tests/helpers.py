"""Shared test utilities."""

import numpy as np

from aqimpute.numcore import numerical_grad, rel_error


def check_layer_grads(layer, x, forward=None, seed_reset=None, tol=1e-4, h=1e-5):
    """Compare analytic input/parameter gradients of ``sum(layer(x) * r)`` with finite differences.

    Returns the worst relative error.
    """
    forward = forward or (lambda inp: layer(inp))
    if seed_reset:
        seed_reset()
    out = forward(x)
    r = np.random.default_rng(99).standard_normal(out.shape)

    def loss():
        if seed_reset:
            seed_reset()
        return float(np.sum(forward(x) * r))

    layer.zero_grad()
    if seed_reset:
        seed_reset()
    forward(x)
    gx = layer.backward(r)
    analytic = {name: g.copy() for name, g in layer.named_grads()}
    worst = rel_error(gx, numerical_grad(loss, x, h))
    assert worst < tol, f"input grad rel err {worst}"
    for name, p in layer.named_parameters():
        err = rel_error(analytic[name], numerical_grad(loss, p, h))
        assert err < tol, f"{name} rel err {err}"
        worst = max(worst, err)
    return worst
