"""ViT-VAE: patch tokens through a transformer encoder, conv reconstruction.

The encoder embeds fixed-size non-overlapping patches, adds learned positional
embeddings, runs pre-norm transformer blocks and emits per-token Gaussian
latents. No class token: the image feature tokens themselves are the latent.
The decoder reshapes the token grid to a feature map and upsamples back to the
image with stride-2 transposed convolutions (one stage per factor of two in
the patch size).
"""

from __future__ import annotations

import math

import torch
from torch import nn

from ..config import ModelConfig
from ..errors import ShapeError
from ..losses import TokenLatent
from .conv import LOGVAR_CLAMP, group_norm


def patchify(images: torch.Tensor, patch_size: int) -> torch.Tensor:
    """Split into row-major non-overlapping patches.

    (C, H, W) -> (T, C * p^2) or batched (B, C, H, W) -> (B, T, C * p^2),
    with T = (H / p) * (W / p). Exact inverse of :func:`unpatchify`.
    """
    squeeze = images.ndim == 3
    x = images.unsqueeze(0) if squeeze else images
    if x.ndim != 4:
        raise ShapeError(f"expected (C, H, W) or (B, C, H, W), got {tuple(images.shape)}")
    b, c, h, w = x.shape
    p = patch_size
    if h % p or w % p:
        raise ShapeError(f"image dims ({h}, {w}) not divisible by patch size {p}")
    gh, gw = h // p, w // p
    tokens = (
        x.reshape(b, c, gh, p, gw, p)
        .permute(0, 2, 4, 1, 3, 5)
        .reshape(b, gh * gw, c * p * p)
    )
    return tokens.squeeze(0) if squeeze else tokens


def unpatchify(tokens: torch.Tensor, patch_size: int, channels: int = 3) -> torch.Tensor:
    """Inverse of :func:`patchify` for square token grids."""
    squeeze = tokens.ndim == 2
    t = tokens.unsqueeze(0) if squeeze else tokens
    b, n, d = t.shape
    p = patch_size
    g = math.isqrt(n)
    if g * g != n:
        raise ShapeError(f"token count {n} is not a square grid")
    if d != channels * p * p:
        raise ShapeError(f"token length {d} != channels * patch^2 = {channels * p * p}")
    images = (
        t.reshape(b, g, g, channels, p, p)
        .permute(0, 3, 1, 4, 2, 5)
        .reshape(b, channels, g * p, g * p)
    )
    return images.squeeze(0) if squeeze else images


class Attention(nn.Module):
    """Multi-head self-attention with softmax over keys (row-stochastic weights)."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads:
            raise ShapeError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, need_weights: bool = False):
        b, t, d = x.shape
        qkv = self.qkv(x).reshape(b, t, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv.unbind(0)
        attn = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, t, d)
        out = self.proj(out)
        return (out, attn) if need_weights else out


class TransformerBlock(nn.Module):
    """Pre-norm encoder layer: x + MHSA(norm(x)), then x + MLP(norm(x))."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class VitVae(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.prior = None  # per-token standard normal
        vit = config.vit
        p, d = vit.patch_size, vit.embed_dim
        grid = config.token_grid
        self.grid = (grid, grid)

        self.patch_embed = nn.Linear(3 * p * p, d)
        self.pos_embed = nn.Parameter(torch.zeros(1, grid * grid, d))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            TransformerBlock(d, vit.heads, vit.mlp_ratio) for _ in range(vit.depth)
        )
        self.encoder_norm = nn.LayerNorm(d)
        self.head_mean = nn.Linear(d, d)
        self.head_logvar = nn.Linear(d, d)

        up = []
        ch = d
        for _ in range(int(math.log2(p))):  # grid * patch = image, so one x2 per factor
            out_ch = max(ch // 2, 32)
            up.append(nn.ConvTranspose2d(ch, out_ch, 4, stride=2, padding=1, bias=False))
            up.append(group_norm(out_ch))
            up.append(nn.ReLU(inplace=True))
            ch = out_ch
        up.append(nn.Conv2d(ch, 3, 3, padding=1))
        self.decoder = nn.Sequential(*up)

    def encoder_modules(self) -> list[nn.Module]:
        return [self.patch_embed, self.blocks, self.encoder_norm, self.head_mean, self.head_logvar]

    def encode(self, pixels: torch.Tensor) -> TokenLatent:
        size = self.config.input_size
        if pixels.ndim != 4 or pixels.shape[1:] != (3, size, size):
            raise ShapeError(f"expected pixels (B, 3, {size}, {size}), got {tuple(pixels.shape)}")
        tokens = self.patch_embed(patchify(pixels, self.config.vit.patch_size))
        tokens = tokens + self.pos_embed
        for block in self.blocks:
            tokens = block(tokens)
        tokens = self.encoder_norm(tokens)
        mean = self.head_mean(tokens)
        logvar = self.head_logvar(tokens).clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)
        return TokenLatent(mean, logvar, grid=self.grid)

    def decode(self, z_tokens: torch.Tensor) -> torch.Tensor:
        gh, gw = self.grid
        d = self.config.vit.embed_dim
        if z_tokens.ndim != 3 or z_tokens.shape[1:] != (gh * gw, d):
            raise ShapeError(
                f"expected tokens (B, {gh * gw}, {d}), got {tuple(z_tokens.shape)}"
            )
        feature_map = z_tokens.transpose(1, 2).reshape(z_tokens.shape[0], d, gh, gw)
        return torch.sigmoid(self.decoder(feature_map))

    def forward(self, pixels: torch.Tensor, noise: torch.Tensor | None = None):
        from ..losses import reparameterize

        latent = self.encode(pixels)
        z = latent.mean if noise is None else reparameterize(latent, noise)
        return self.decode(z), latent
