"""Stationary toroidal Gaussian random field prior over a 2-D latent lattice.

The covariance of a zero-mean stationary field on the torus is block-circulant
with circulant blocks, hence diagonalized by the 2-D DFT. Everything here runs
off that fact: the correlation kernel (first row of the covariance) is built in
the spatial domain, its DFT gives the eigenvalue spectrum, and KL divergence /
sampling are O(N log N) spectral computations.

DFT convention: unnormalized forward transform, 1/N inverse (torch's default
"backward" normalization). All formulas below assume it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import torch

from .errors import NumericError, OracleTooLarge, ParameterError, PriorMismatch, SymmetryError

SPECTRUM_FLOOR = 1e-8
SYMMETRY_TOL = 1e-6
DENSE_ORACLE_MAX = 4096  # N = h*w guard for the dense covariance oracle

KERNEL_KINDS = ("identity", "exponential", "matern")


def _toroidal_distance(lattice: tuple[int, int]) -> torch.Tensor:
    """Wrap-around Euclidean distance from lag (0, 0), shape (h, w)."""
    h, w = lattice
    du = torch.minimum(torch.arange(h), h - torch.arange(h)).double()
    dv = torch.minimum(torch.arange(w), w - torch.arange(w)).double()
    return torch.sqrt(du[:, None] ** 2 + dv[None, :] ** 2)


def _matern_correlation(d_over_range: torch.Tensor, smoothness: float) -> torch.Tensor:
    """Matern correlation rho(d); exponential correlation is the nu=1/2 member.

    Uses the sqrt(2*nu) length-scale convention so all orders share the same
    ``range`` parameter. Closed forms for nu in {0.5, 1.5, 2.5}; any other
    order goes through the modified Bessel function.
    """
    t = math.sqrt(2.0 * smoothness) * d_over_range
    if smoothness == 0.5:
        return torch.exp(-t)
    if smoothness == 1.5:
        return (1.0 + t) * torch.exp(-t)
    if smoothness == 2.5:
        return (1.0 + t + t**2 / 3.0) * torch.exp(-t)

    from scipy.special import kv  # general order needs a Bessel routine

    rho = torch.ones_like(t)
    positive = t > 0
    tp = t[positive].numpy()
    coeff = 2.0 ** (1.0 - smoothness) / math.gamma(smoothness)
    rho[positive] = torch.from_numpy(coeff * tp**smoothness * kv(smoothness, tp))
    return rho


def correlation_kernel(
    kind: str,
    range: float,
    variance: float,
    lattice: tuple[int, int],
    smoothness: float = 1.5,
) -> torch.Tensor:
    """Covariance kernel k[u, v] = variance * rho(toroidal distance to lag 0).

    Returned as an (h, w) float64 tensor with k[0, 0] = variance. The identity
    kind is the degenerate white-noise member (rho = 1 at lag 0, else 0).
    """
    if range <= 0 or variance <= 0:
        raise ParameterError(f"range and variance must be positive, got ({range}, {variance})")
    if kind not in KERNEL_KINDS:
        raise ParameterError(f"unknown correlation kind {kind!r}; expected one of {KERNEL_KINDS}")

    d = _toroidal_distance(lattice)
    if kind == "identity":
        rho = (d == 0).double()
    elif kind == "exponential":
        rho = torch.exp(-d / range)
    else:
        if smoothness <= 0:
            raise ParameterError(f"matern smoothness must be positive, got {smoothness}")
        rho = _matern_correlation(d / range, smoothness)
    return variance * rho


class SpectralDensity(NamedTuple):
    spectrum: torch.Tensor  # (h, w) float64, entries >= SPECTRUM_FLOOR
    clamped: int            # number of bins raised to the floor


def spectral_density(kernel: torch.Tensor) -> SpectralDensity:
    """Eigenvalues of the circulant covariance: the real 2-D DFT of the kernel.

    The kernel of a toroidally symmetric covariance has a real DFT; a residual
    imaginary part above SYMMETRY_TOL means the input was not a valid kernel.
    Discretization of long-range kernels can produce tiny negative bins, which
    are clamped to SPECTRUM_FLOOR and counted.
    """
    sk = torch.fft.fft2(kernel.double())
    residue = sk.imag.abs().max().item()
    if residue > SYMMETRY_TOL:
        raise SymmetryError(f"kernel is not toroidally symmetric (imaginary residue {residue:.3e})")
    spectrum = sk.real
    clamped = int((spectrum < SPECTRUM_FLOOR).sum().item())
    if clamped:
        spectrum = spectrum.clamp_min(SPECTRUM_FLOOR)
    return SpectralDensity(spectrum, clamped)


@dataclass(frozen=True)
class GrfPrior:
    """Immutable prior descriptor with the spectrum cached at build time."""

    kind: str
    range: float
    variance: float
    smoothness: float
    lattice: tuple[int, int]
    spectrum: torch.Tensor = field(repr=False)
    clamped_bins: int = 0

    @property
    def n_sites(self) -> int:
        return self.lattice[0] * self.lattice[1]

    def describe(self) -> dict:
        """Serializable parameter record (checkpoint / manifest payload)."""
        return {
            "kind": self.kind,
            "range": self.range,
            "variance": self.variance,
            "smoothness": self.smoothness,
            "lattice": list(self.lattice),
        }


def build_grf_prior(
    kind: str,
    range: float,
    variance: float,
    lattice: tuple[int, int],
    smoothness: float = 1.5,
) -> GrfPrior:
    kernel = correlation_kernel(kind, range, variance, lattice, smoothness)
    spectrum, clamped = spectral_density(kernel)
    return GrfPrior(
        kind=kind,
        range=float(range),
        variance=float(variance),
        smoothness=float(smoothness),
        lattice=(int(lattice[0]), int(lattice[1])),
        spectrum=spectrum,
        clamped_bins=clamped,
    )


def _check_lattice(latent_mean: torch.Tensor, prior: GrfPrior) -> None:
    h, w = prior.lattice
    if latent_mean.shape[-2:] != (h, w):
        raise PriorMismatch(
            f"latent lattice {tuple(latent_mean.shape[-2:])} does not match prior lattice {(h, w)}"
        )


def kl_grf(latent, prior: GrfPrior) -> torch.Tensor:
    """KL( N(mu, diag(sigma^2)) || N(0, Sigma) ) with circulant Sigma, per channel.

    With s_k the covariance eigenvalues (DFT of the kernel), N = h*w sites,
    mu_hat the unnormalized 2-D DFT of mu, and (1/N) sum_k 1/s_k the constant
    diagonal of Sigma^{-1} (stationarity):

        KL = 1/2 [ sbar_inv * sum_i sigma_i^2 + (1/N) sum_k |mu_hat_k|^2 / s_k
                   - N - sum_i log sigma_i^2 + sum_k log s_k ]

    summed over channels and averaged over a leading batch dimension. Runs in
    O(N log N); differentiable in mu and logvar.
    """
    mean, logvar = latent.mean, latent.logvar
    _check_lattice(mean, prior)
    if not (torch.isfinite(mean).all() and torch.isfinite(logvar).all()):
        raise NumericError("latent field contains non-finite entries")

    s = prior.spectrum.to(mean.dtype)
    n = prior.n_sites
    sbar_inv = (1.0 / s).sum() / n
    log_det_prior = torch.log(s).sum()

    sigma2_sum = torch.exp(logvar).sum(dim=(-2, -1))
    logvar_sum = logvar.sum(dim=(-2, -1))
    mu_hat = torch.fft.fft2(mean)
    mahalanobis = (mu_hat.abs() ** 2 / s).sum(dim=(-2, -1)) / n

    per_channel = 0.5 * (sbar_inv * sigma2_sum + mahalanobis - n - logvar_sum + log_det_prior)
    return per_channel.sum(dim=1).mean(dim=0)  # sum channels, average the batch


def _hermitian_symmetrize(noise: torch.Tensor) -> torch.Tensor:
    """Project complex lattice noise onto the Hermitian-symmetric subspace.

    xi_H[k] = (xi[k] + conj(xi[-k])) / 2, where -k is the negated lattice
    frequency mod (h, w). The inverse DFT of a Hermitian array is real.
    """
    reflected = torch.roll(torch.flip(noise, dims=(-2, -1)), shifts=(1, 1), dims=(-2, -1))
    return 0.5 * (noise + reflected.conj())


def sample_grf(
    prior: GrfPrior,
    n_samples: int = 1,
    generator: torch.Generator | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """Draw zero-mean fields with covariance Sigma by spectral coloring.

    field = sqrt(N) * IDFT( sqrt(s) . xi_H ) with xi complex white noise and
    xi_H its Hermitian symmetrization, so the output is exactly real (the
    imaginary residue is flushed after an assertion-level check). Supplying
    ``noise`` (complex, shape (n, h, w)) makes the draw deterministic.
    """
    h, w = prior.lattice
    if noise is None:
        re = torch.randn(n_samples, h, w, generator=generator, dtype=torch.float64)
        im = torch.randn(n_samples, h, w, generator=generator, dtype=torch.float64)
        noise = torch.complex(re, im)
    elif not noise.is_complex():
        raise ParameterError("sample_grf noise must be a complex tensor")

    xi = _hermitian_symmetrize(noise)
    scaled = torch.sqrt(prior.spectrum.to(xi.real.dtype)) * xi
    field = torch.fft.ifft2(scaled) * math.sqrt(prior.n_sites)
    if field.imag.abs().max().item() > 1e-9:
        raise NumericError("spectral sample has a non-negligible imaginary part")
    return field.real


def dense_covariance(prior: GrfPrior) -> torch.Tensor:
    """Explicit N x N covariance matrix (test oracle; small lattices only).

    Sigma[(u, v), (u', v')] = kernel[(u - u') mod h, (v - v') mod w], so the
    matrix is symmetric, block-circulant with circulant blocks, and has the
    kernel's DFT as its eigenvalues.
    """
    h, w = prior.lattice
    if prior.n_sites > DENSE_ORACLE_MAX:
        raise OracleTooLarge(f"dense oracle limited to {DENSE_ORACLE_MAX} sites, got {prior.n_sites}")
    kernel = correlation_kernel(prior.kind, prior.range, prior.variance, prior.lattice, prior.smoothness)
    u = torch.arange(h)
    v = torch.arange(w)
    du = (u[:, None] - u[None, :]) % h          # (h, h)
    dv = (v[:, None] - v[None, :]) % w          # (w, w)
    sigma = kernel[du[:, None, :, None], dv[None, :, None, :]]  # (h, w, h, w)
    return sigma.reshape(prior.n_sites, prior.n_sites)
