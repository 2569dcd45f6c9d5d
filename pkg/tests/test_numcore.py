import math

import numpy as np
import pytest

from aqimpute.errors import ShapeMismatch
from aqimpute.numcore import (
    GRU,
    LSTM,
    Adam,
    AdamState,
    BatchNorm,
    Conv1d,
    ConvTranspose1d,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool1d,
    ReLU,
    Softmax,
    Tanh,
    adam_step,
    gru_cell,
    l2_penalty,
    load_checkpoint,
    lstm_cell,
    mse,
    numerical_grad,
    rel_error,
    save_checkpoint,
    softmax_xent,
)
from aqimpute.numcore.optim import PlateauHalver
from helpers import check_layer_grads


def test_dense_identity(rng):
    d = Dense(3, 3, rng)
    d.params["W"][...] = np.eye(3)
    x = rng.standard_normal((5, 3))
    np.testing.assert_array_equal(d(x), x)


def test_dense_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        Dense(3, 2, rng)(np.zeros((2, 4)))


def test_dropout_rates(rng):
    x = rng.standard_normal((4, 6))
    np.testing.assert_array_equal(Dropout(0.0, rng)(x), x)
    with pytest.raises(ValueError):
        Dropout(1.0, rng)
    d = Dropout(0.5, rng).eval()
    np.testing.assert_array_equal(d(x), x)


@pytest.mark.parametrize(
    "make, shape",
    [
        (lambda r: Dense(4, 3, r), (5, 4)),
        (lambda r: Tanh(), (3, 4)),
        (lambda r: Softmax(), (3, 5)),
        (lambda r: BatchNorm(4), (6, 4)),
        (lambda r: BatchNorm(3), (4, 3, 5)),
        (lambda r: Conv1d(2, 3, 3, r), (2, 2, 7)),
        (lambda r: Conv1d(2, 3, 3, r, stride=2, padding=1), (2, 2, 8)),
        (lambda r: ConvTranspose1d(3, 2, 2, r, stride=2), (2, 3, 4)),
        (lambda r: ConvTranspose1d(3, 2, 3, r, stride=2, padding=1), (2, 3, 4)),
        (lambda r: GlobalAvgPool1d(), (2, 3, 4)),
        (lambda r: Flatten(), (2, 3, 4)),
        (lambda r: LSTM(3, 4, r, return_sequences=True), (2, 3, 3)),
        (lambda r: LSTM(3, 4, r), (2, 3, 3)),
        (lambda r: GRU(3, 4, r, return_sequences=True), (2, 3, 3)),
        (lambda r: GRU(3, 4, r), (2, 3, 3)),
    ],
)
def test_layer_gradients_match_finite_differences(make, shape, rng):
    layer = make(rng)
    x = rng.standard_normal(shape)
    assert check_layer_grads(layer, x) < 1e-4


def test_relu_gradient_away_from_kink(rng):
    x = rng.standard_normal((4, 5))
    x[np.abs(x) < 0.1] = 0.5
    assert check_layer_grads(ReLU(), x) < 1e-4


def test_batchnorm_eval_gradient(rng):
    bn = BatchNorm(4)
    bn(rng.standard_normal((10, 4)) * 3 + 1)
    bn.eval()
    assert check_layer_grads(bn, rng.standard_normal((5, 4))) < 1e-4


def test_dropout_gradient_with_fixed_mask(rng):
    d = Dropout(0.3, np.random.default_rng(0))

    def reset():
        d.rng = np.random.default_rng(0)

    assert check_layer_grads(d, rng.standard_normal((4, 6)), seed_reset=reset) < 1e-4


@pytest.mark.parametrize("cls", [LSTM, GRU])
def test_recurrent_gradients_with_mask(cls, rng):
    layer = cls(3, 4, rng, return_sequences=True)
    mask = np.array([[1, 0, 1, 1], [0, 1, 1, 0]], float)
    x = rng.standard_normal((2, 4, 3))
    assert check_layer_grads(layer, x, forward=lambda inp: layer(inp, mask)) < 1e-4


@pytest.mark.parametrize("cls", [LSTM, GRU])
def test_masked_steps_carry_state(cls, rng):
    layer = cls(3, 5, rng)
    x = rng.standard_normal((2, 4, 3))
    base = layer(x)
    padded = np.concatenate([x[:, :2], rng.standard_normal((2, 3, 3)), x[:, 2:]], axis=1)
    mask = np.array([[1, 1, 0, 0, 0, 1, 1]] * 2, float)
    np.testing.assert_array_equal(layer(padded, mask), base)


def test_cells_match_sequence_layers(rng):
    x = rng.standard_normal((3, 1, 4))
    lstm = LSTM(4, 5, rng)
    h, _ = lstm_cell(x[:, 0], np.zeros((3, 5)), np.zeros((3, 5)), **lstm.params)
    np.testing.assert_allclose(lstm(x), h, atol=1e-15)
    gru = GRU(4, 5, rng)
    np.testing.assert_allclose(gru(x), gru_cell(x[:, 0], np.zeros((3, 5)), **gru.params), atol=1e-15)


def test_conv_transpose_is_adjoint_of_conv(rng):
    conv = Conv1d(2, 3, 3, rng, stride=2, padding=1)
    tconv = ConvTranspose1d(3, 2, 3, rng, stride=2, padding=1)
    tconv.params["W"][...] = conv.params["W"]
    x = rng.standard_normal((1, 2, 9))
    y = rng.standard_normal((1, 3, 5))
    # <conv(x), y> == <x, conv^T(y)> without biases
    lhs = np.sum(conv(x) * y)
    rhs = np.sum(x * tconv(y))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_softmax_xent_uniform_and_limit():
    loss, _ = softmax_xent(np.zeros((3, 4)), np.array([0, 1, 2]))
    assert loss == pytest.approx(math.log(4), abs=1e-15)
    loss, _ = softmax_xent(np.array([[60.0, 0, 0, 0]]), np.array([0]))
    assert 0 <= loss < 1e-20


def test_softmax_rows_sum_to_one(rng):
    p = Softmax()(rng.standard_normal((20, 4)) * 30)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_loss_gradients(rng):
    logits = rng.standard_normal((5, 4))
    labels = np.array([0, 3, 1, 1, 2])
    _, g = softmax_xent(logits, labels)
    num = numerical_grad(lambda: softmax_xent(logits, labels)[0], logits)
    assert rel_error(g, num) < 1e-4
    pred = rng.standard_normal((3, 2))
    tgt = rng.standard_normal((3, 2))
    _, g = mse(pred, tgt)
    assert rel_error(g, numerical_grad(lambda: mse(pred, tgt)[0], pred)) < 1e-4
    with pytest.raises(ShapeMismatch):
        mse(pred, tgt[:2])


def test_l2_penalty_gradient(rng):
    params = {"W": rng.standard_normal((3, 2)), "b": rng.standard_normal(2)}
    loss, grads = l2_penalty(params, 0.1)
    assert loss == pytest.approx(0.05 * np.sum(params["W"] ** 2))
    np.testing.assert_allclose(grads["W"], 0.1 * params["W"])
    assert "b" not in grads


def test_adam_zero_gradient_keeps_params():
    p = {"x": np.array([1.0, -2.0])}
    adam_step(p, {"x": np.zeros(2)}, AdamState())
    np.testing.assert_array_equal(p["x"], [1.0, -2.0])


def test_adam_first_step_moves_by_lr_sign():
    p = {"x": np.array([1.0, -2.0, 3.0])}
    g = {"x": np.array([0.5, -7.0, 1e-3])}
    adam_step(p, g, AdamState(lr=0.01))
    np.testing.assert_allclose(p["x"] - [1.0, -2.0, 3.0], -0.01 * np.sign(g["x"]), rtol=1e-4)


def test_adam_converges_on_quadratic():
    p = {"x": np.array([1.0])}
    opt = Adam(p, lr=1e-2)
    for step in range(5000):
        opt.step({"x": 2.0 * p["x"]})
        if abs(p["x"][0]) < 1e-6:
            break
    assert abs(p["x"][0]) < 1e-6


def test_plateau_halver():
    opt = Adam({"x": np.zeros(1)}, lr=1.0)
    sched = PlateauHalver(opt, patience=5, min_delta=1e-4)
    sched.update(1.0)
    for _ in range(5):
        sched.update(1.0)
    assert opt.lr == 0.5


def test_checkpoint_roundtrip(tmp_path, rng):
    tensors = {"a.W": rng.standard_normal((3, 4)), "b": np.array(2.5), "c": np.zeros((0, 2))}
    save_checkpoint(tmp_path / "m.ck", tensors, {"kind": "test"})
    back, meta = load_checkpoint(tmp_path / "m.ck")
    assert meta == {"kind": "test"}
    for k, v in tensors.items():
        np.testing.assert_array_equal(back[k], v)
    save_checkpoint(tmp_path / "m2.ck", tensors, {"kind": "test"})
    assert (tmp_path / "m.ck").read_bytes() == (tmp_path / "m2.ck").read_bytes()


def test_non_finite_output_trapped(rng):
    d = Dense(2, 2, rng)
    d.params["W"][0, 0] = np.inf
    with pytest.raises(FloatingPointError):
        d(np.ones((1, 2)))
