"""Small float64 neural-network toolkit with explicit backward passes."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import numerical_grad, rel_error
from .layers import (
    GRU,
    LSTM,
    BatchNorm,
    Conv1d,
    ConvTranspose1d,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool1d,
    Module,
    ReLU,
    Sequential,
    Softmax,
    Tanh,
    gru_cell,
    lstm_cell,
    softmax,
)
from .losses import l2_penalty, mse, softmax_xent
from .optim import Adam, AdamState, PlateauHalver, adam_step
from .rng import derive_seed, make_rng
from .train import History, fit_loop

__all__ = [
    "GRU", "LSTM", "BatchNorm", "Conv1d", "ConvTranspose1d", "Dense", "Dropout", "Flatten",
    "GlobalAvgPool1d", "Module", "ReLU", "Sequential", "Softmax", "Tanh", "gru_cell",
    "lstm_cell", "softmax", "l2_penalty", "mse", "softmax_xent", "Adam", "AdamState",
    "PlateauHalver", "adam_step", "derive_seed", "make_rng", "load_checkpoint",
    "save_checkpoint", "numerical_grad", "rel_error", "History", "fit_loop",
]
