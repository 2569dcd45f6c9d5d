"""Layers with hand-written forward and backward passes.

Every layer works on float64 ``ndarray`` values. ``forward`` caches what
``backward`` needs; ``backward`` takes the gradient of the loss w.r.t. the
output, accumulates parameter gradients into ``self.grads`` and returns the
gradient w.r.t. the input. Call :meth:`Module.zero_grad` between steps.

Shapes: dense layers take ``(N, F)``; convolutions take ``(N, C, L)``;
recurrent layers take ``(N, L, F)`` plus an optional ``(N, L)`` step mask.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values produced by {where}")
    return x


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is overflow-free and avoids masked indexing
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Module:
    """Base class: parameters, gradients, train/eval mode and child traversal."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.training = True

    def __call__(self, x, *args, **kwargs):
        return check_finite(self.forward(x, *args, **kwargs), type(self).__name__)

    def forward(self, x, *args, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        yield f"{name}.{i}", v

    def named_parameters(self, prefix: str = ""):
        for k, v in self.params.items():
            yield prefix + k, v
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_grads(self, prefix: str = ""):
        for k in self.params:
            yield prefix + k, self.grads.get(k, np.zeros_like(self.params[k]))
        for name, child in self.children():
            yield from child.named_grads(f"{prefix}{name}.")

    def parameters(self) -> dict[str, np.ndarray]:
        return dict(self.named_parameters())

    def gradients(self) -> dict[str, np.ndarray]:
        return dict(self.named_grads())

    def named_buffers(self, prefix: str = ""):
        for k, v in getattr(self, "buffers", {}).items():
            yield prefix + k, v
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def state(self) -> dict[str, np.ndarray]:
        """Parameters plus non-trainable buffers (e.g. running statistics)."""
        return {**dict(self.named_parameters()), **dict(self.named_buffers())}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        targets = {**dict(self.named_parameters()), **dict(self.named_buffers())}
        for name, arr in targets.items():
            if name not in state:
                raise KeyError(f"checkpoint lacks {name}")
            if state[name].shape != arr.shape:
                raise ShapeMismatch(f"{name}: {state[name].shape} vs {arr.shape}")
            arr[...] = state[name]

    def zero_grad(self) -> None:
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        for _, child in self.children():
            child.zero_grad()

    def _acc(self, name: str, g: np.ndarray) -> None:
        if name in self.grads:
            self.grads[name] += g
        else:
            self.grads[name] = g.copy()

    def train(self, mode: bool = True):
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


class Dense(Module):
    """``y = x @ W + b`` over the last axis."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.params["W"] = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.params["b"] = np.zeros(n_out)

    def forward(self, x):
        W = self.params["W"]
        if x.shape[-1] != W.shape[0]:
            raise ShapeMismatch(f"Dense expects {W.shape[0]} inputs, got {x.shape[-1]}")
        self._x = x
        return x @ W + self.params["b"]

    def backward(self, grad):
        x2 = self._x.reshape(-1, self._x.shape[-1])
        g2 = grad.reshape(-1, grad.shape[-1])
        self._acc("W", x2.T @ g2)
        self._acc("b", g2.sum(axis=0))
        return grad @ self.params["W"].T


class ReLU(Module):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return grad * self._mask


class Tanh(Module):
    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, grad):
        return grad * (1.0 - self._y ** 2)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class Softmax(Module):
    def forward(self, x):
        self._y = softmax(x)
        return self._y

    def backward(self, grad):
        y = self._y
        return y * (grad - (grad * y).sum(axis=-1, keepdims=True))


class Dropout(Module):
    """Inverted dropout; identity in eval mode."""

    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def forward(self, x):
        if not self.training or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self.rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask


class BatchNorm(Module):
    """Batch normalisation over the batch axis (and length axis for ``(N, C, L)``)."""

    def __init__(self, n_features: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.params["gamma"] = np.ones(n_features)
        self.params["beta"] = np.zeros(n_features)
        self.buffers = {"running_mean": np.zeros(n_features), "running_var": np.ones(n_features)}
        self.momentum = momentum
        self.eps = eps

    def _axes(self, x):
        if x.ndim == 2:
            return (0,), (1, -1)
        if x.ndim == 3:
            return (0, 2), (1, -1, 1)
        raise ShapeMismatch(f"BatchNorm expects 2-D or 3-D input, got {x.ndim}-D")

    def forward(self, x):
        axes, bshape = self._axes(x)
        gamma = self.params["gamma"].reshape(bshape)
        beta = self.params["beta"].reshape(bshape)
        if self.training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            n = x.size // mean.size
            self.buffers["running_mean"] *= 1 - m
            self.buffers["running_mean"] += m * mean
            self.buffers["running_var"] *= 1 - m
            self.buffers["running_var"] += m * var * n / max(n - 1, 1)
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(bshape)) * inv.reshape(bshape)
        self._cache = (xhat, inv, axes, bshape, self.training)
        return gamma * xhat + beta

    def backward(self, grad):
        xhat, inv, axes, bshape, training = self._cache
        self._acc("gamma", (grad * xhat).sum(axis=axes))
        self._acc("beta", grad.sum(axis=axes))
        gxhat = grad * self.params["gamma"].reshape(bshape)
        if not training:
            return gxhat * inv.reshape(bshape)
        m = grad.size // inv.size
        return (inv.reshape(bshape) / m) * (
            m * gxhat
            - gxhat.sum(axis=axes, keepdims=True)
            - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
        )


class Conv1d(Module):
    """1-D cross-correlation, ``(N, C_in, L) -> (N, C_out, L_out)``."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0):
        super().__init__()
        self.params["W"] = glorot_uniform(rng, (c_out, c_in, kernel), c_in * kernel, c_out * kernel)
        self.params["b"] = np.zeros(c_out)
        self.stride = stride
        self.padding = padding
        self.kernel = kernel

    def forward(self, x):
        W = self.params["W"]
        c_out, c_in, k = W.shape
        if x.ndim != 3 or x.shape[1] != c_in:
            raise ShapeMismatch(f"Conv1d expects (N, {c_in}, L), got {x.shape}")
        p, s = self.padding, self.stride
        xp = np.pad(x, ((0, 0), (0, 0), (p, p))) if p else x
        if xp.shape[2] < k:
            raise ShapeMismatch("input shorter than kernel")
        win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)[:, :, ::s, :]
        n, _, lo, _ = win.shape
        cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(n * lo, c_in * k)
        y = cols @ W.reshape(c_out, -1).T + self.params["b"]
        self._cache = (cols, xp.shape, lo)
        return y.reshape(n, lo, c_out).transpose(0, 2, 1)

    def backward(self, grad):
        cols, xp_shape, lo = self._cache
        W = self.params["W"]
        c_out, c_in, k = W.shape
        n = grad.shape[0]
        g2 = grad.transpose(0, 2, 1).reshape(n * lo, c_out)
        self._acc("W", (g2.T @ cols).reshape(W.shape))
        self._acc("b", g2.sum(axis=0))
        gcols = (g2 @ W.reshape(c_out, -1)).reshape(n, lo, c_in, k)
        gxp = np.zeros(xp_shape)
        s = self.stride
        for j in range(k):
            gxp[:, :, j:j + s * (lo - 1) + 1:s] += gcols[:, :, :, j].transpose(0, 2, 1)
        p = self.padding
        return gxp[:, :, p:xp_shape[2] - p] if p else gxp


class ConvTranspose1d(Module):
    """Transposed 1-D convolution, ``L_out = (L - 1) * stride - 2 * padding + kernel``."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0):
        super().__init__()
        self.params["W"] = glorot_uniform(rng, (c_in, c_out, kernel), c_in * kernel, c_out * kernel)
        self.params["b"] = np.zeros(c_out)
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        W = self.params["W"]
        c_in, c_out, k = W.shape
        if x.ndim != 3 or x.shape[1] != c_in:
            raise ShapeMismatch(f"ConvTranspose1d expects (N, {c_in}, L), got {x.shape}")
        n, _, length = x.shape
        s, p = self.stride, self.padding
        full = np.zeros((n, c_out, (length - 1) * s + k))
        xt = x.transpose(0, 2, 1)  # (N, L, C_in)
        for j in range(k):
            full[:, :, j:j + s * (length - 1) + 1:s] += (xt @ W[:, :, j]).transpose(0, 2, 1)
        self._x = x
        out = full[:, :, p:full.shape[2] - p] if p else full
        return out + self.params["b"][None, :, None]

    def backward(self, grad):
        x = self._x
        W = self.params["W"]
        c_in, c_out, k = W.shape
        n, _, length = x.shape
        s, p = self.stride, self.padding
        full = np.pad(grad, ((0, 0), (0, 0), (p, p))) if p else grad
        self._acc("b", grad.sum(axis=(0, 2)))
        gx = np.zeros_like(x)
        gW = np.zeros_like(W)
        for j in range(k):
            gs = full[:, :, j:j + s * (length - 1) + 1:s]  # (N, C_out, L)
            gW[:, :, j] = np.einsum("nil,nol->io", x, gs)
            gx += np.einsum("nol,io->nil", gs, W[:, :, j])
        self._acc("W", gW)
        return gx


class GlobalAvgPool1d(Module):
    """``(N, C, L) -> (N, C)`` mean over the length axis."""

    def forward(self, x):
        self._len = x.shape[2]
        return x.mean(axis=2)

    def backward(self, grad):
        return np.repeat(grad[:, :, None], self._len, axis=2) / self._len


class Flatten(Module):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


def _step_mask(x, mask):
    n, length = x.shape[:2]
    if mask is None:
        return np.ones((n, length))
    mask = np.asarray(mask, dtype=float)
    if mask.shape != (n, length):
        raise ShapeMismatch(f"mask shape {mask.shape} does not match input {x.shape[:2]}")
    return mask


class LSTM(Module):
    """LSTM over ``(N, L, F)``; masked steps carry ``(h, c)`` through unchanged.

    Gate order in the fused weights is input, forget, cell, output.
    """

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator,
                 return_sequences: bool = False):
        super().__init__()
        H = hidden
        self.hidden = H
        self.return_sequences = return_sequences
        self.params["W"] = glorot_uniform(rng, (n_in, 4 * H), n_in, 4 * H)
        self.params["U"] = glorot_uniform(rng, (H, 4 * H), H, 4 * H)
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        self.params["b"] = b

    def forward(self, x, mask=None):
        n, length, f = x.shape
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        if f != W.shape[0]:
            raise ShapeMismatch(f"LSTM expects {W.shape[0]} features, got {f}")
        H = self.hidden
        m = _step_mask(x, mask)
        h = np.zeros((n, H))
        c = np.zeros((n, H))
        xw = x @ W + b
        hs = np.zeros((n, length, H))
        cache = []
        for t in range(length):
            z = xw[:, t] + h @ U
            s = sigmoid(z)
            i, fg, o = s[:, :H], s[:, H:2 * H], s[:, 3 * H:]
            g = np.tanh(z[:, 2 * H:3 * H])
            c_new = fg * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            mt = m[:, t:t + 1]
            cache.append((h, c, i, fg, g, o, tc, mt))
            h = mt * h_new + (1.0 - mt) * h
            c = mt * c_new + (1.0 - mt) * c
            hs[:, t] = h
        self._cache = (x, cache)
        return hs if self.return_sequences else h

    def backward(self, grad):
        x, cache = self._cache
        n, length, _ = x.shape
        H = self.hidden
        W, U = self.params["W"], self.params["U"]
        if self.return_sequences:
            gseq = grad
        else:
            gseq = np.zeros((n, length, H))
            gseq[:, -1] = grad
        dz_all = np.zeros((n, length, 4 * H))
        dU = np.zeros_like(U)
        dh_next = np.zeros((n, H))
        dc_next = np.zeros((n, H))
        for t in reversed(range(length)):
            h_prev, c_prev, i, fg, g, o, tc, mt = cache[t]
            dh = dh_next + gseq[:, t]
            dh_new = mt * dh
            dc_new = mt * dc_next + dh_new * o * (1.0 - tc ** 2)
            do = dh_new * tc
            di = dc_new * g
            dg = dc_new * i
            df = dc_new * c_prev
            dz = np.concatenate(
                [di * i * (1 - i), df * fg * (1 - fg), dg * (1 - g ** 2), do * o * (1 - o)], axis=1
            )
            dz_all[:, t] = dz
            dU += h_prev.T @ dz
            dh_next = dz @ U.T + (1.0 - mt) * dh
            dc_next = dc_new * fg + (1.0 - mt) * dc_next
        self._acc("W", x.reshape(-1, x.shape[2]).T @ dz_all.reshape(-1, 4 * H))
        self._acc("U", dU)
        self._acc("b", dz_all.sum(axis=(0, 1)))
        return dz_all @ W.T


class GRU(Module):
    """GRU over ``(N, L, F)``; masked steps carry ``h`` through unchanged.

    ``h' = (1 - z) * n + z * h`` with ``n = tanh(x Wn + (r * h) Un + bn)``.
    Gate order in the fused weights is update, reset, candidate.
    """

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator,
                 return_sequences: bool = False):
        super().__init__()
        H = hidden
        self.hidden = H
        self.return_sequences = return_sequences
        self.params["W"] = glorot_uniform(rng, (n_in, 3 * H), n_in, 3 * H)
        self.params["U"] = glorot_uniform(rng, (H, 3 * H), H, 3 * H)
        self.params["b"] = np.zeros(3 * H)

    def forward(self, x, mask=None):
        n, length, f = x.shape
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        if f != W.shape[0]:
            raise ShapeMismatch(f"GRU expects {W.shape[0]} features, got {f}")
        H = self.hidden
        m = _step_mask(x, mask)
        xw = x @ W + b
        h = np.zeros((n, H))
        hs = np.zeros((n, length, H))
        cache = []
        for t in range(length):
            hu = h @ U[:, :2 * H]
            z = sigmoid(xw[:, t, :H] + hu[:, :H])
            r = sigmoid(xw[:, t, H:2 * H] + hu[:, H:])
            cand = np.tanh(xw[:, t, 2 * H:] + (r * h) @ U[:, 2 * H:])
            h_new = (1.0 - z) * cand + z * h
            mt = m[:, t:t + 1]
            cache.append((h, z, r, cand, mt))
            h = mt * h_new + (1.0 - mt) * h
            hs[:, t] = h
        self._cache = (x, cache)
        return hs if self.return_sequences else h

    def backward(self, grad):
        x, cache = self._cache
        n, length, _ = x.shape
        H = self.hidden
        W, U = self.params["W"], self.params["U"]
        if self.return_sequences:
            gseq = grad
        else:
            gseq = np.zeros((n, length, H))
            gseq[:, -1] = grad
        dpre_all = np.zeros((n, length, 3 * H))
        dU = np.zeros_like(U)
        dh_next = np.zeros((n, H))
        Uz, Ur, Un = U[:, :H], U[:, H:2 * H], U[:, 2 * H:]
        for t in reversed(range(length)):
            h_prev, z, r, cand, mt = cache[t]
            dh = dh_next + gseq[:, t]
            dh_new = mt * dh
            dcand = dh_new * (1.0 - z)
            dzg = dh_new * (h_prev - cand)
            dh_prev = dh_new * z + (1.0 - mt) * dh
            dn_pre = dcand * (1.0 - cand ** 2)
            drh = dn_pre @ Un.T
            dr = drh * h_prev
            dh_prev += drh * r
            dz_pre = dzg * z * (1.0 - z)
            dr_pre = dr * r * (1.0 - r)
            dh_prev += dz_pre @ Uz.T + dr_pre @ Ur.T
            dU[:, :H] += h_prev.T @ dz_pre
            dU[:, H:2 * H] += h_prev.T @ dr_pre
            dU[:, 2 * H:] += (r * h_prev).T @ dn_pre
            dpre_all[:, t] = np.concatenate([dz_pre, dr_pre, dn_pre], axis=1)
            dh_next = dh_prev
        self._acc("W", x.reshape(-1, x.shape[2]).T @ dpre_all.reshape(-1, 3 * H))
        self._acc("U", dU)
        self._acc("b", dpre_all.sum(axis=(0, 1)))
        return dpre_all @ W.T


def lstm_cell(x, h, c, W, U, b):
    """Single LSTM step, ``(h', c')``; same gate layout as :class:`LSTM`."""
    H = h.shape[1]
    z = x @ W + h @ U + b
    i, f, g, o = sigmoid(z[:, :H]), sigmoid(z[:, H:2 * H]), np.tanh(z[:, 2 * H:3 * H]), sigmoid(z[:, 3 * H:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def gru_cell(x, h, W, U, b):
    """Single GRU step; same gate layout as :class:`GRU`."""
    H = h.shape[1]
    xw = x @ W + b
    z = sigmoid(xw[:, :H] + h @ U[:, :H])
    r = sigmoid(xw[:, H:2 * H] + h @ U[:, H:2 * H])
    n = np.tanh(xw[:, 2 * H:] + (r * h) @ U[:, 2 * H:])
    return (1.0 - z) * n + z * h
