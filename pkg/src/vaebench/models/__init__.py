"""Model zoo: the conv beta-VAE (optionally with a GRF prior) and the ViT-VAE."""

from __future__ import annotations

import torch

from ..config import ModelConfig
from ..grf import GrfPrior, build_grf_prior
from .conv import ConvVae
from .vit import VitVae, patchify, unpatchify

__all__ = ["ConvVae", "VitVae", "patchify", "unpatchify", "build_model", "build_prior"]


def build_prior(config: ModelConfig) -> GrfPrior | None:
    """GRF prior over the latent lattice, or None for the standard normal."""
    if config.architecture != "vae_grf":
        return None
    p = config.prior
    lattice = (config.latent_spatial, config.latent_spatial)
    return build_grf_prior(p.kind, p.range, p.variance, lattice, p.smoothness)


def build_model(config: ModelConfig, seed: int | None = None):
    """Construct a model for ``config``; seeding makes the init reproducible."""
    config.validate()
    if seed is not None:
        torch.manual_seed(seed)
    if config.architecture == "vit_vae":
        return VitVae(config)
    return ConvVae(config, prior=build_prior(config))
