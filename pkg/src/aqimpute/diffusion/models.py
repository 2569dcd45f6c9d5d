"""Diffusion-trained classifiers over standardized feature vectors.

Rows are z-scored, zero-padded to a multiple of 4 and read as
single-channel sequences. The denoising objective regularises a shared
representation that a softmax head reads; inference runs the head on the
clean input (``t = 1``).
"""

from __future__ import annotations

import numpy as np

from ..classical.base import Classifier, Standardizer
from ..numcore import fit_loop, l2_penalty, mse, softmax, softmax_xent
from ..numcore.checkpoint import load_checkpoint, save_checkpoint
from ..numcore.rng import make_rng
from .nets import LatentDiffusionNet, UNet1d
from .schedule import NoiseSchedule, q_sample


def _padded_length(d: int) -> int:
    return max(4, -(-d // 4) * 4)


class DiffusionClassifier(Classifier):
    """Shared training harness for :class:`DDPM` and :class:`LDM`.

    Parameters
    ----------
    T : int
        Diffusion steps of the linear schedule.
    lam_cls : float
        Weight of the cross-entropy term.
    lr, batch_size, max_epochs, patience : optimisation settings.
    l2 : float
        Weight decay on conv and dense kernels.
    dropout : float
        Dropout before the class head.
    width : int
        Base channel count.
    """

    kind = "diffusion"

    def __init__(self, T=100, lam_cls=1.0, lr=1e-3, batch_size=128, max_epochs=50, patience=10,
                 val_fraction=0.1, l2=1e-4, dropout=0.1, width=32, seed=0):
        self.T = T
        self.lam_cls = lam_cls
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.val_fraction = val_fraction
        self.l2 = l2
        self.dropout = dropout
        self.width = width
        self.seed = seed

    def _sequences(self, X):
        Z = self.scaler_.transform(np.asarray(X, dtype=float))
        out = np.zeros((len(Z), 1, self.length_))
        out[:, 0, :Z.shape[1]] = Z
        return out

    def _build(self, rng):
        raise NotImplementedError

    def _batch_loss(self, x, y, t, rng):
        raise NotImplementedError

    def _logits(self, x):
        raise NotImplementedError

    def fit(self, X, y):
        X, y = self._check_train(X, y)
        self.scaler_ = Standardizer().fit(X)
        self.length_ = _padded_length(X.shape[1])
        self.schedule_ = NoiseSchedule(self.T)
        S = self._sequences(X)
        rng = make_rng(self.seed, self.kind)
        noise_rng = make_rng(self.seed, self.kind, "noise")
        self.net_ = self._build(rng)
        perm = rng.permutation(len(S))
        n_val = int(round(self.val_fraction * len(S))) if len(S) >= 10 else 0
        val, tr = perm[:n_val], np.sort(perm[n_val:])
        losses = []

        def batch_loss(idx):
            b = tr[idx]
            t = noise_rng.integers(1, self.T + 1, len(b))
            loss, parts = self._batch_loss(S[b], y[b], t, noise_rng)
            losses.append(parts)
            return loss

        def val_loss():
            return sum(softmax_xent(self._logits(S[val[s:s + 4096]]), y[val[s:s + 4096]])[0]
                       * len(val[s:s + 4096]) for s in range(0, n_val, 4096)) / n_val

        self.history_ = fit_loop(
            self.net_, batch_loss, len(tr), rng, lr=self.lr, batch_size=self.batch_size,
            max_epochs=self.max_epochs, val_loss=val_loss if n_val else None,
            patience=self.patience, plateau=False,
            extra_grads=(lambda p: l2_penalty(p, self.l2, [k for k in p if k.endswith("W")]))
            if self.l2 > 0 else None,
        )
        self.component_losses_ = np.array(losses)
        self.fitted_ = True
        return self

    def predict_proba(self, X, chunk=4096):
        self._check_fitted()
        self.net_.eval()
        S = self._sequences(X)
        parts = [softmax(self._logits(S[s:s + chunk])) for s in range(0, len(S), chunk)]
        return np.concatenate(parts) if parts else np.zeros((0, self.n_classes))

    def save(self, path):
        self._check_fitted()
        tensors = {**self.net_.state(), **self.scaler_.state()}
        meta = {"kind": self.kind, "T": self.T, "width": self.width, "dropout": self.dropout,
                "n_in": int(self.scaler_.mean_.shape[0])}
        save_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path):
        t, meta = load_checkpoint(path)
        m = cls(T=meta["T"], width=meta["width"], dropout=meta["dropout"])
        m.scaler_ = Standardizer.from_state(t)
        m.length_ = _padded_length(meta["n_in"])
        m.schedule_ = NoiseSchedule(m.T)
        m.net_ = m._build(np.random.default_rng(0))
        m.net_.load_state(t)
        m.net_.eval()
        m.fitted_ = True
        return m


class DDPM(DiffusionClassifier):
    """U-Net noise predictor; the class head reads the bottleneck of ``x_t``.

    Loss: ``MSE(eps, eps_theta(x_t, t)) + lam_cls * CE(head, label)``.
    """

    kind = "ddpm"

    def _build(self, rng):
        return UNet1d(self.length_, rng, width=self.width, dropout=self.dropout)

    def _batch_loss(self, x, y, t, rng):
        eps = rng.standard_normal(x.shape)
        x_t = q_sample(x, t, eps, self.schedule_)
        eps_hat, logits = self.net_(x_t, t)
        l_mse, g_eps = mse(eps_hat, eps)
        l_ce, g_log = softmax_xent(logits, y)
        self.net_.backward((g_eps, self.lam_cls * g_log))
        return l_mse + self.lam_cls * l_ce, (l_mse, l_ce)

    def _logits(self, x):
        return self.net_(x, 1)[1]


class LDM(DiffusionClassifier):
    """Diffusion in the latent space of a conv autoencoder.

    Loss: ``MSE(dec(enc(x)), x) + MSE(eps, eps_theta(z_t, t)) + lam_cls * CE(head(enc(x)), label)``.
    The latent diffusion term does not back-propagate into the encoder.
    """

    kind = "ldm"

    def _build(self, rng):
        return LatentDiffusionNet(self.length_, rng, width=self.width, dropout=self.dropout)

    def _batch_loss(self, x, y, t, rng):
        net = self.net_
        z = net.encoder(x)
        x_rec = net.decoder(z)
        l_rec, g_rec = mse(x_rec, x)
        eps = rng.standard_normal(z.shape)
        z_t = q_sample(z, t, eps, self.schedule_)
        eps_hat = net.denoiser.denoise(z_t, t)
        l_dif, g_dif = mse(eps_hat, eps)
        net.denoiser.denoise_backward(g_dif)
        logits = net.denoiser.classify(z)
        l_ce, g_log = softmax_xent(logits, y)
        g_z = net.decoder.backward(g_rec) + net.denoiser.classify_backward(self.lam_cls * g_log)
        net.encoder.backward(g_z)
        return l_rec + l_dif + self.lam_cls * l_ce, (l_rec, l_dif, l_ce)

    def _logits(self, x):
        z = self.net_.encoder(x)
        return self.net_.denoiser.classify(z)
