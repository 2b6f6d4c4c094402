"""Convolutional beta-VAE with a residual (resnet18-style) encoder.

The encoder ends in two 1x1 heads emitting the posterior mean and log-variance
on a z_channels x latent_spatial x latent_spatial lattice; the decoder mirrors
the downsampling with transposed convolutions and squashes to [0, 1].
GroupNorm keeps every op batch-independent, so a batch of one encodes exactly
like the matching slice of a larger batch.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from ..config import ModelConfig
from ..errors import ShapeError
from ..grf import GrfPrior
from ..losses import LatentField

LOGVAR_CLAMP = 10.0  # keeps exp(logvar) finite without touching trained regimes


def group_norm(channels: int) -> nn.GroupNorm:
    groups = 8
    while channels % groups:
        groups //= 2
    return nn.GroupNorm(groups, channels)


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.norm1 = group_norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.norm2 = group_norm(out_ch)
        self.act = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.skip = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False), group_norm(out_ch)
            )
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        out = self.act(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return self.act(out + self.skip(x))


class ConvVae(nn.Module):
    def __init__(self, config: ModelConfig, prior: GrfPrior | None = None):
        super().__init__()
        config.validate()
        self.config = config
        self.prior = prior

        factor = config.input_size // config.latent_spatial
        n_down = int(math.log2(factor))
        if n_down > 5:
            raise ShapeError(f"downsampling factor {factor} exceeds the supported 32x")

        base = config.base_channels
        remaining = n_down
        stem_stride = 2 if remaining else 1
        remaining -= stem_stride == 2
        self.stem = nn.Sequential(
            nn.Conv2d(3, base, 3, stride=stem_stride, padding=1, bias=False),
            group_norm(base),
            nn.ReLU(inplace=True),
        )

        stages = []
        ch = base
        for i in range(4):  # resnet18 profile: four stages of two blocks
            out_ch = base * min(2**i, 8)
            stride = 2 if remaining else 1
            remaining -= stride == 2
            stages.append(ResidualBlock(ch, out_ch, stride=stride))
            stages.append(ResidualBlock(out_ch, out_ch))
            ch = out_ch
        self.stages = nn.Sequential(*stages)

        self.head_mean = nn.Conv2d(ch, config.z_channels, 1)
        self.head_logvar = nn.Conv2d(ch, config.z_channels, 1)

        up = []
        dec_ch = ch
        up.append(nn.Conv2d(config.z_channels, dec_ch, 3, padding=1, bias=False))
        up.append(group_norm(dec_ch))
        up.append(nn.ReLU(inplace=True))
        for _ in range(n_down):
            out_ch = max(dec_ch // 2, base)
            up.append(nn.ConvTranspose2d(dec_ch, out_ch, 4, stride=2, padding=1, bias=False))
            up.append(group_norm(out_ch))
            up.append(nn.ReLU(inplace=True))
            dec_ch = out_ch
        up.append(nn.Conv2d(dec_ch, 3, 3, padding=1))
        self.decoder = nn.Sequential(*up)

    def encode(self, pixels: torch.Tensor) -> LatentField:
        size = self.config.input_size
        if pixels.ndim != 4 or pixels.shape[1:] != (3, size, size):
            raise ShapeError(
                f"expected pixels (B, 3, {size}, {size}), got {tuple(pixels.shape)}"
            )
        features = self.stages(self.stem(pixels))
        mean = self.head_mean(features)
        logvar = self.head_logvar(features).clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
        return LatentField(mean, logvar)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        s = self.config.latent_spatial
        if z.ndim != 4 or z.shape[1:] != (self.config.z_channels, s, s):
            raise ShapeError(
                f"expected z (B, {self.config.z_channels}, {s}, {s}), got {tuple(z.shape)}"
            )
        return torch.sigmoid(self.decoder(z))

    def forward(self, pixels: torch.Tensor, noise: torch.Tensor | None = None):
        from ..losses import reparameterize

        latent = self.encode(pixels)
        z = latent.mean if noise is None else reparameterize(latent, noise)
        return self.decode(z), latent
