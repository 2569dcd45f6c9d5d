"""Variance schedule and the forward/reverse Gaussian transitions.

Arrays are indexed by step ``t = 0..T`` with the convention ``beta[0] = 0``
and ``alpha_bar[0] = 1``, so step 0 is the clean sample.
"""

from __future__ import annotations

import csv

import numpy as np

from ..errors import StepOutOfRange


class NoiseSchedule:
    """Per-step noise intensities ``beta_t`` with derived ``alpha_t`` and ``alpha_bar_t``.

    Parameters
    ----------
    T : int
        Number of diffusion steps.
    beta_start, beta_end : float
        End points of the linear schedule.
    betas : array_like, optional
        Explicit ``beta_1..beta_T``; overrides the linear schedule.
    strict : bool
        Enforce ``0 < beta < 1``. Turn off only for degenerate test schedules.
    """

    def __init__(self, T=100, beta_start=1e-4, beta_end=0.02, betas=None, strict=True):
        b = np.linspace(beta_start, beta_end, T) if betas is None else np.asarray(betas, dtype=float)
        if b.ndim != 1 or len(b) == 0:
            raise ValueError("betas must be a non-empty 1-D sequence")
        if strict and not np.all((b > 0) & (b < 1)):
            raise ValueError("every beta must lie in (0, 1)")
        if not np.all((b >= 0) & (b < 1)):
            raise ValueError("every beta must lie in [0, 1)")
        self.T = len(b)
        self.beta = np.concatenate([[0.0], b])
        self.alpha = 1.0 - self.beta
        self.alpha_bar = np.cumprod(self.alpha)

    def check(self, t, low=0):
        t_arr = np.asarray(t)
        if np.any(t_arr < low) or np.any(t_arr > self.T):
            raise StepOutOfRange(f"step {t} outside [{low}, {self.T}]")
        return t_arr

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "beta", "alpha", "alpha_bar"])
            for t in range(self.T + 1):
                w.writerow([t, repr(float(self.beta[t])), repr(float(self.alpha[t])),
                            repr(float(self.alpha_bar[t]))])


def forward_diffuse(x0, t, noise, schedule: NoiseSchedule):
    """Run the one-step recursion ``t`` times.

    ``noise`` holds one standard-normal draw per step, shape ``(t, *x0.shape)``.
    """
    t = int(schedule.check(t))
    x = np.asarray(x0, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if t and noise.shape[0] < t:
        raise ValueError(f"need {t} noise draws, got {noise.shape[0]}")
    for s in range(1, t + 1):
        x = np.sqrt(1.0 - schedule.beta[s]) * x + np.sqrt(schedule.beta[s]) * noise[s - 1]
    return x


def q_sample(x0, t, eps, schedule: NoiseSchedule):
    """Closed-form marginal ``sqrt(ab_t) x0 + sqrt(1 - ab_t) eps``; ``t`` may be per-row."""
    t = schedule.check(t)
    ab = schedule.alpha_bar[t]
    x0 = np.asarray(x0, dtype=float)
    if ab.ndim:
        ab = ab.reshape((-1,) + (1,) * (x0.ndim - 1))
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def recursion_moments(t, schedule: NoiseSchedule):
    """Mean coefficient and variance of ``x_t | x0`` obtained by iterating the recursion."""
    t = int(schedule.check(t))
    coef, var = 1.0, 0.0
    for s in range(1, t + 1):
        coef *= np.sqrt(1.0 - schedule.beta[s])
        var = (1.0 - schedule.beta[s]) * var + schedule.beta[s]
    return coef, var


def reverse_step(x_t, t, denoiser, schedule: NoiseSchedule, noise):
    """One ancestral step ``x_t -> x_{t-1}`` with fixed variance ``beta_t``.

    ``denoiser(x_t, t)`` predicts the noise. No noise is added at ``t = 1``.
    """
    t = int(schedule.check(t, low=1))
    x_t = np.asarray(x_t, dtype=float)
    b, a, ab = schedule.beta[t], schedule.alpha[t], schedule.alpha_bar[t]
    if b == 0.0:
        return x_t.copy()
    eps = denoiser(x_t, t)
    mean = (x_t - b / np.sqrt(1.0 - ab) * eps) / np.sqrt(a)
    return mean if t == 1 else mean + np.sqrt(b) * noise


def reverse_chain(x_T, denoiser, schedule: NoiseSchedule, rng):
    """Every state of the chain from ``x_T`` down to ``x_0`` (index ``t`` holds ``x_t``)."""
    states = [None] * (schedule.T + 1)
    x = np.asarray(x_T, dtype=float)
    states[schedule.T] = x
    for t in range(schedule.T, 0, -1):
        x = reverse_step(x, t, denoiser, schedule, rng.standard_normal(x.shape))
        states[t - 1] = x
    return states
