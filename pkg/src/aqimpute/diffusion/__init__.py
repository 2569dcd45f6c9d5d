"""Noise schedule, denoising networks and diffusion-trained classifiers."""

from .models import DDPM, LDM, DiffusionClassifier
from .nets import Decoder, Encoder, LatentDenoiser, LatentDiffusionNet, UNet1d, timestep_embedding
from .schedule import (
    NoiseSchedule,
    forward_diffuse,
    q_sample,
    recursion_moments,
    reverse_chain,
    reverse_step,
)

__all__ = [
    "DDPM", "LDM", "DiffusionClassifier", "Decoder", "Encoder", "LatentDenoiser",
    "LatentDiffusionNet", "UNet1d", "timestep_embedding", "NoiseSchedule", "forward_diffuse",
    "q_sample", "recursion_moments", "reverse_chain", "reverse_step",
]
