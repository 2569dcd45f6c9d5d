import numpy as np
import pytest

from aqimpute.diffusion import (
    DDPM,
    LDM,
    Decoder,
    Encoder,
    LatentDenoiser,
    NoiseSchedule,
    UNet1d,
    forward_diffuse,
    q_sample,
    recursion_moments,
    reverse_chain,
    reverse_step,
)
from aqimpute.errors import EmptyTrain, StepOutOfRange
from aqimpute.numcore import Module
from helpers import check_layer_grads


class _Joined(Module):
    """Flattens a two-output network into one array for gradient checking."""

    def __init__(self, net, t):
        super().__init__()
        self.net, self.t = net, t

    def forward(self, x):
        eps, logits = self.net(x, self.t)
        self._shapes = eps.shape
        return np.concatenate([eps.reshape(len(x), -1), logits], axis=1)

    def backward(self, grad):
        k = int(np.prod(self._shapes[1:]))
        return self.net.backward((grad[:, :k].reshape(self._shapes), grad[:, k:]))


def test_schedule_invariants(tmp_path):
    s = NoiseSchedule()
    assert s.T == 100 and s.alpha_bar[0] == 1.0
    assert np.all(np.diff(s.alpha_bar) < 0) and s.alpha_bar[-1] > 0
    np.testing.assert_allclose(s.alpha_bar[1:], s.alpha_bar[:-1] * s.alpha[1:], rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        NoiseSchedule(betas=[0.1, 1.0])
    s.to_csv(tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "t,beta,alpha,alpha_bar" and len(rows) == 102


def test_step_zero_and_zero_beta(rng):
    s = NoiseSchedule(T=10)
    x0 = rng.standard_normal(5)
    np.testing.assert_array_equal(forward_diffuse(x0, 0, np.zeros((0, 5)), s), x0)
    z = NoiseSchedule(betas=np.zeros(10), strict=False)
    noise = rng.standard_normal((10, 5))
    for t in range(11):
        np.testing.assert_array_equal(forward_diffuse(x0, t, noise, z), x0)
    np.testing.assert_array_equal(reverse_step(x0, 5, lambda x, t: x * 0 + 7.0, z, noise[0]), x0)


def test_step_out_of_range():
    s = NoiseSchedule(T=10)
    with pytest.raises(StepOutOfRange):
        forward_diffuse(np.zeros(2), 11, np.zeros((11, 2)), s)
    with pytest.raises(StepOutOfRange):
        reverse_step(np.zeros(2), 0, lambda x, t: x, s, np.zeros(2))


def test_recursion_matches_closed_form_moments():
    s = NoiseSchedule()
    for t in [1, 2, 17, 50, 100]:
        coef, var = recursion_moments(t, s)
        assert abs(coef - np.sqrt(s.alpha_bar[t])) < 1e-12
        assert abs(var - (1 - s.alpha_bar[t])) < 1e-12


def test_recursion_marginal_statistics():
    s = NoiseSchedule()
    n, x0 = 10_000, 0.7
    noise = np.random.default_rng(11).standard_normal((s.T, n))
    xT = forward_diffuse(np.full(n, x0), s.T, noise, s)
    mean, var = np.sqrt(s.alpha_bar[-1]) * x0, 1 - s.alpha_bar[-1]
    assert abs(xT.mean() - mean) < 3 * np.sqrt(var / n)
    assert abs(xT.var(ddof=1) - var) < 3 * var * np.sqrt(2 / (n - 1))


def test_oracle_single_step_inverts():
    s = NoiseSchedule()
    rng = np.random.default_rng(2)
    x0, eps = rng.standard_normal(50), rng.standard_normal(50)
    x1 = q_sample(x0, 1, eps, s)
    x0_hat = reverse_step(x1, 1, lambda x, t: eps, s, rng.standard_normal(50))
    assert np.max(np.abs(x0_hat - x0)) < 1e-9


def test_oracle_chain_reconstructs():
    s = NoiseSchedule()
    rng = np.random.default_rng(3)
    x0 = rng.standard_normal(20_000)

    def oracle(x, t):
        return (x - np.sqrt(s.alpha_bar[t]) * x0) / np.sqrt(1 - s.alpha_bar[t])

    states = reverse_chain(q_sample(x0, s.T, rng.standard_normal(x0.shape), s), oracle, s, rng)
    err = np.array([np.mean((states[t] - x0) ** 2) for t in range(0, s.T + 1, 5)])
    assert np.all(np.diff(err) > 0)
    assert err[0] < 1e-20


def test_tiny_unet_gradients(rng):
    net = UNet1d(8, np.random.default_rng(0), width=8, emb_dim=8, dropout=0.2)
    t = np.array([1, 4, 2])

    def reset():
        net.drop.rng = np.random.default_rng(5)

    assert check_layer_grads(_Joined(net, t), rng.standard_normal((3, 1, 8)), seed_reset=reset) < 1e-4


def test_latent_parts_gradients(rng):
    r0 = np.random.default_rng(0)
    assert check_layer_grads(Encoder(r0, 4, 3), rng.standard_normal((2, 1, 8))) < 1e-4
    assert check_layer_grads(Decoder(r0, 4, 3), rng.standard_normal((2, 3, 2))) < 1e-4
    den = LatentDenoiser(2, r0, latent=3, width=4, emb_dim=8, dropout=0.0)
    assert check_layer_grads(_Joined(den, np.array([1, 3])), rng.standard_normal((2, 3, 2))) < 1e-4


def test_shapes():
    rng = np.random.default_rng(0)
    unet = UNet1d(32, rng, width=8)
    eps, logits = unet(np.zeros((2, 1, 32)), 5)
    assert eps.shape == (2, 1, 32) and logits.shape == (2, 4)
    enc, dec = Encoder(rng), Decoder(rng)
    x = np.zeros((2, 1, 32))
    assert dec(enc(x)).shape == x.shape


def _blobs(n=600, d=20, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n) * 3
    X = rng.standard_normal((n, d)) + np.where(y[:, None] > 0, 2.0, -2.0) * (np.arange(d) < 5)
    return X, y


@pytest.mark.parametrize("cls", [DDPM, LDM])
def test_two_blob_task_and_simplex(cls):
    X, y = _blobs()
    m = cls(max_epochs=10, seed=0, width=16).fit(X[:450], y[:450])
    p = m.predict_proba(X[450:])
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.mean(m.predict(X[450:]) == y[450:]) > 0.95
    losses = m.history_.data_loss
    assert losses[-1] < losses[0]


@pytest.mark.parametrize("cls", [DDPM, LDM])
def test_determinism_roundtrip_and_errors(cls, tmp_path):
    X, y = _blobs(n=120)
    a = cls(max_epochs=2, seed=4, width=8).fit(X, y)
    b = cls(max_epochs=2, seed=4, width=8).fit(X, y)
    np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))
    a.save(tmp_path / "m.ck")
    np.testing.assert_array_equal(cls.load(tmp_path / "m.ck").predict_proba(X), a.predict_proba(X))
    with pytest.raises(EmptyTrain):
        cls().fit(np.zeros((0, 3)), np.zeros(0, int))
