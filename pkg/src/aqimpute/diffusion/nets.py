"""Denoising networks over single-channel feature sequences ``(N, 1, L)``.

Each network returns ``(noise_prediction, class_logits)`` and takes the
matching pair of output gradients in ``backward``.
"""

from __future__ import annotations

import numpy as np

from ..core import N_CLASSES
from ..errors import ShapeMismatch
from ..numcore import ConvTranspose1d, Conv1d, Dense, Dropout, Flatten, Module, ReLU
from ..numcore.layers import check_finite


def timestep_embedding(t, dim=32) -> np.ndarray:
    """Sinusoidal embedding ``[sin(t w_k), cos(t w_k)]`` with geometric frequencies."""
    t = np.asarray(t, dtype=float).reshape(-1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class _TwoHeaded(Module):
    def __call__(self, x, t):
        eps, logits = self.forward(x, t)
        name = type(self).__name__
        return check_finite(eps, name), check_finite(logits, name)


class _TimeMLP(Module):
    def __init__(self, dim, rng):
        super().__init__()
        self.dim = dim
        self.dense = Dense(dim, dim, rng)
        self.act = ReLU()

    def forward(self, t):
        return self.act(self.dense(timestep_embedding(t, self.dim)))

    def backward(self, grad):
        self.dense.backward(self.act.backward(grad))


class _Block(Module):
    """conv -> add projected time embedding per channel -> ReLU."""

    def __init__(self, conv, emb_dim, rng):
        super().__init__()
        self.conv = conv
        self.proj = Dense(emb_dim, conv.params["b"].shape[0], rng)
        self.act = ReLU()

    def forward(self, x, emb):
        return self.act(self.conv(x) + self.proj(emb)[:, :, None])

    def backward(self, grad):
        g = self.act.backward(grad)
        g_emb = self.proj.backward(g.sum(axis=2))
        return self.conv.backward(g), g_emb


class UNet1d(_TwoHeaded):
    """Three-level U-Net (widths ``w, 2w, 4w``) with a classifier on the bottleneck.

    Parameters
    ----------
    length : int
        Sequence length, a multiple of 4.
    width : int
        Channels of the first level.
    """

    def __init__(self, length, rng, width=32, emb_dim=32, dropout=0.1, n_classes=N_CLASSES):
        super().__init__()
        if length % 4:
            raise ShapeMismatch(f"sequence length {length} is not a multiple of 4")
        w1, w2, w3 = width, 2 * width, 4 * width
        self.length = length
        self.temb = _TimeMLP(emb_dim, rng)
        self.enc1 = _Block(Conv1d(1, w1, 3, rng, padding=1), emb_dim, rng)
        self.enc2 = _Block(Conv1d(w1, w2, 3, rng, stride=2, padding=1), emb_dim, rng)
        self.enc3 = _Block(Conv1d(w2, w3, 3, rng, stride=2, padding=1), emb_dim, rng)
        self.up2 = ConvTranspose1d(w3, w2, 2, rng, stride=2)
        self.up2_act = ReLU()
        self.dec2 = _Block(Conv1d(2 * w2, w2, 3, rng, padding=1), emb_dim, rng)
        self.up1 = ConvTranspose1d(w2, w1, 2, rng, stride=2)
        self.up1_act = ReLU()
        self.dec1 = _Block(Conv1d(2 * w1, w1, 3, rng, padding=1), emb_dim, rng)
        self.out = Conv1d(w1, 1, 1, rng)
        self.flat = Flatten()
        self.drop = Dropout(dropout, rng)
        self.head = Dense(w3 * length // 4, n_classes, rng)
        self._w = (w1, w2)

    def forward(self, x, t):
        if x.ndim != 3 or x.shape[1:] != (1, self.length):
            raise ShapeMismatch(f"UNet1d expects (N, 1, {self.length}), got {x.shape}")
        emb = self.temb(np.broadcast_to(t, (len(x),)))
        h1 = self.enc1(x, emb)
        h2 = self.enc2(h1, emb)
        b = self.enc3(h2, emb)
        d2 = self.dec2(np.concatenate([self.up2_act(self.up2(b)), h2], axis=1), emb)
        d1 = self.dec1(np.concatenate([self.up1_act(self.up1(d2)), h1], axis=1), emb)
        eps = self.out(d1)
        logits = self.head(self.drop(self.flat(b)))
        return eps, logits

    def backward(self, grads):
        g_eps, g_logits = grads
        w1, w2 = self._w
        g_d1 = self.out.backward(g_eps)
        g_cat1, g_emb = self.dec1.backward(g_d1)
        g_d2 = self.up1.backward(self.up1_act.backward(g_cat1[:, :w1]))
        g_h1 = g_cat1[:, w1:]
        g_cat2, ge = self.dec2.backward(g_d2)
        g_emb = g_emb + ge
        g_b = self.up2.backward(self.up2_act.backward(g_cat2[:, :w2]))
        g_h2 = g_cat2[:, w2:]
        g_b = g_b + self.flat.backward(self.drop.backward(self.head.backward(g_logits)))
        gx, ge = self.enc3.backward(g_b)
        g_h2 = g_h2 + gx
        g_emb = g_emb + ge
        gx, ge = self.enc2.backward(g_h2)
        g_h1 = g_h1 + gx
        g_emb = g_emb + ge
        gx, ge = self.enc1.backward(g_h1)
        self.temb.backward(g_emb + ge)
        return gx


class Encoder(Module):
    """Two stride-2 convolutions: ``(N, 1, L) -> (N, latent, L / 4)``."""

    def __init__(self, rng, width=32, latent=16):
        super().__init__()
        self.c1 = Conv1d(1, width, 3, rng, stride=2, padding=1)
        self.a1 = ReLU()
        self.c2 = Conv1d(width, latent, 3, rng, stride=2, padding=1)

    def forward(self, x):
        return self.c2(self.a1(self.c1(x)))

    def backward(self, grad):
        return self.c1.backward(self.a1.backward(self.c2.backward(grad)))


class Decoder(Module):
    """Mirror of :class:`Encoder` with transposed convolutions."""

    def __init__(self, rng, width=32, latent=16):
        super().__init__()
        self.t1 = ConvTranspose1d(latent, width, 2, rng, stride=2)
        self.a1 = ReLU()
        self.t2 = ConvTranspose1d(width, 1, 2, rng, stride=2)

    def forward(self, z):
        return self.t2(self.a1(self.t1(z)))

    def backward(self, grad):
        return self.t1.backward(self.a1.backward(self.t2.backward(grad)))


class LatentDenoiser(_TwoHeaded):
    """Conv stack predicting latent noise; the classifier reads the (clean) latent."""

    def __init__(self, latent_len, rng, latent=16, width=32, emb_dim=32, dropout=0.1,
                 n_classes=N_CLASSES):
        super().__init__()
        self.temb = _TimeMLP(emb_dim, rng)
        self.b1 = _Block(Conv1d(latent, width, 3, rng, padding=1), emb_dim, rng)
        self.b2 = _Block(Conv1d(width, width, 3, rng, padding=1), emb_dim, rng)
        self.out = Conv1d(width, latent, 3, rng, padding=1)
        self.flat = Flatten()
        self.drop = Dropout(dropout, rng)
        self.head = Dense(latent * latent_len, n_classes, rng)

    def denoise(self, z_t, t):
        emb = self.temb(np.broadcast_to(t, (len(z_t),)))
        return self.out(self.b2(self.b1(z_t, emb), emb))

    def denoise_backward(self, grad):
        g, ge2 = self.b2.backward(self.out.backward(grad))
        gz, ge1 = self.b1.backward(g)
        self.temb.backward(ge1 + ge2)
        return gz

    def classify(self, z):
        return self.head(self.drop(self.flat(z)))

    def classify_backward(self, grad):
        return self.flat.backward(self.drop.backward(self.head.backward(grad)))

    def forward(self, z_t, t):
        return self.denoise(z_t, t), self.classify(z_t)

    def backward(self, grads):
        g_eps, g_logits = grads
        return self.denoise_backward(g_eps) + self.classify_backward(g_logits)


class LatentDiffusionNet(Module):
    """Encoder, decoder and latent denoiser held together for optimisation."""

    def __init__(self, length, rng, width=32, latent=16, emb_dim=32, dropout=0.1,
                 n_classes=N_CLASSES):
        super().__init__()
        if length % 4:
            raise ShapeMismatch(f"sequence length {length} is not a multiple of 4")
        self.length = length
        self.encoder = Encoder(rng, width, latent)
        self.decoder = Decoder(rng, width, latent)
        self.denoiser = LatentDenoiser(length // 4, rng, latent, width, emb_dim, dropout, n_classes)
