"""Shared VAE machinery: latent containers, reparameterization, ELBO terms.

Latent containers carry an explicit batch axis; single samples travel as
batches of one. KL and reconstruction terms are summed per sample and averaged
over the batch, so scales are independent of batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import NumericError, PriorMismatch, ShapeError
from .grf import GrfPrior, kl_grf


@dataclass
class LatentField:
    """Per-location Gaussian posterior over a conv latent lattice.

    mean, logvar: (B, C, h, w). The posterior is factorized per location with
    std = exp(logvar / 2), which is positive for every finite logvar.
    """

    mean: torch.Tensor
    logvar: torch.Tensor

    def __post_init__(self):
        if self.mean.ndim != 4:
            raise ShapeError(f"LatentField expects (B, C, h, w) tensors, got {tuple(self.mean.shape)}")
        if self.mean.shape != self.logvar.shape:
            raise ShapeError(
                f"mean/logvar shapes differ: {tuple(self.mean.shape)} vs {tuple(self.logvar.shape)}"
            )

    @property
    def batch_size(self) -> int:
        return self.mean.shape[0]

    def __getitem__(self, i) -> "LatentField":
        return LatentField(self.mean[i : i + 1], self.logvar[i : i + 1])


@dataclass
class TokenLatent:
    """Per-token Gaussian posterior over a ViT token grid.

    mean, logvar: (B, T, d) with T = grid[0] * grid[1]. ``as_field`` reshapes
    to a LatentField with d channels on the token grid, so every lattice
    operation (KL, anomaly maps) applies unchanged.
    """

    mean: torch.Tensor
    logvar: torch.Tensor
    grid: tuple[int, int]

    def __post_init__(self):
        if self.mean.ndim != 3:
            raise ShapeError(f"TokenLatent expects (B, T, d) tensors, got {tuple(self.mean.shape)}")
        if self.mean.shape != self.logvar.shape:
            raise ShapeError(
                f"mean/logvar shapes differ: {tuple(self.mean.shape)} vs {tuple(self.logvar.shape)}"
            )
        gh, gw = self.grid
        if self.mean.shape[1] != gh * gw:
            raise ShapeError(f"token count {self.mean.shape[1]} != grid {self.grid}")

    def as_field(self) -> LatentField:
        b, t, d = self.mean.shape
        gh, gw = self.grid
        to_grid = lambda x: x.transpose(1, 2).reshape(b, d, gh, gw)
        return LatentField(to_grid(self.mean), to_grid(self.logvar))


@dataclass
class LossBreakdown:
    """ELBO terms for one step or one epoch; total = reconstruction + beta * kl.

    Fields are floats in reports and 0-dim tensors while a graph is attached.
    """

    reconstruction: float | torch.Tensor
    kl: float | torch.Tensor
    beta: float
    total: float | torch.Tensor

    def detached(self) -> "LossBreakdown":
        as_float = lambda v: float(v.detach()) if torch.is_tensor(v) else float(v)
        return LossBreakdown(
            reconstruction=as_float(self.reconstruction),
            kl=as_float(self.kl),
            beta=self.beta,
            total=as_float(self.total),
        )


def reparameterize(latent, noise: torch.Tensor) -> torch.Tensor:
    """z = mean + exp(logvar / 2) * noise, elementwise."""
    if noise.shape != latent.mean.shape:
        raise ShapeError(f"noise shape {tuple(noise.shape)} != mean shape {tuple(latent.mean.shape)}")
    return latent.mean + torch.exp(0.5 * latent.logvar) * noise


def kl_standard_normal(latent) -> torch.Tensor:
    """KL( N(mu, diag(sigma^2)) || N(0, I) ) summed per sample, batch-averaged.

    Per entry: (mu^2 + sigma^2 - 1 - log sigma^2) / 2, which is zero exactly
    when mu = 0 and logvar = 0, and positive otherwise.
    """
    mean, logvar = latent.mean, latent.logvar
    if not (torch.isfinite(mean).all() and torch.isfinite(logvar).all()):
        raise NumericError("latent contains non-finite entries")
    per_entry = 0.5 * (mean**2 + torch.exp(logvar) - 1.0 - logvar)
    return per_entry.flatten(1).sum(dim=1).mean(dim=0)


def reconstruction_loss(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Sum of squared pixel differences per sample, averaged over the batch.

    This is the unit-variance Gaussian negative log-likelihood up to its
    additive constant.
    """
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    diff = (x - x_hat) ** 2
    return diff.flatten(1).sum(dim=1).mean(dim=0)


def elbo_loss(
    x: torch.Tensor,
    x_hat: torch.Tensor,
    latent,
    beta: float,
    prior: GrfPrior | None = None,
) -> LossBreakdown:
    """beta-weighted ELBO: reconstruction plus beta times the prior KL.

    ``prior=None`` selects the factorized standard normal (the ViT variant's
    per-token prior included); a GrfPrior dispatches to the spectral KL.
    """
    rec = reconstruction_loss(x, x_hat)
    if prior is None:
        kl = kl_standard_normal(latent)
    elif isinstance(prior, GrfPrior):
        field = latent.as_field() if isinstance(latent, TokenLatent) else latent
        kl = kl_grf(field, prior)
    else:
        raise PriorMismatch(f"unsupported prior descriptor: {type(prior).__name__}")
    return LossBreakdown(reconstruction=rec, kl=kl, beta=beta, total=rec + beta * kl)
