"""Configuration dataclasses and defaults for models, priors and training."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ParameterError

ARCHITECTURES = ("vae", "vae_grf", "vit_vae")
PRIOR_KINDS = ("standard", "identity", "exponential", "matern")


@dataclass
class PriorConfig:
    """Latent prior descriptor.

    ``standard`` is the factorized unit normal. The remaining kinds describe a
    stationary toroidal Gaussian random field over the latent lattice, fully
    specified by a correlation family plus two scalars (range and variance).
    """

    kind: str = "standard"
    range: float = 1.0
    variance: float = 1.0
    smoothness: float = 1.5  # Matern order; only used for kind="matern"

    def validate(self) -> None:
        if self.kind not in PRIOR_KINDS:
            raise ParameterError(f"unknown prior kind {self.kind!r}; expected one of {PRIOR_KINDS}")
        if self.range <= 0:
            raise ParameterError(f"prior range must be positive, got {self.range}")
        if self.variance <= 0:
            raise ParameterError(f"prior variance must be positive, got {self.variance}")
        if self.smoothness <= 0:
            raise ParameterError(f"matern smoothness must be positive, got {self.smoothness}")


@dataclass
class VitParams:
    """Transformer-specific knobs; the token grid is ``input_size / patch_size``."""

    patch_size: int = 16
    embed_dim: int = 384
    depth: int = 6
    heads: int = 6
    mlp_ratio: float = 4.0


@dataclass
class ModelConfig:
    architecture: str = "vae"
    input_size: int = 256
    z_channels: int = 256
    latent_spatial: int = 32
    beta: float = 1.0
    backbone: str = "resnet18_style"
    base_channels: int = 64
    prior: PriorConfig = field(default_factory=PriorConfig)
    vit: VitParams = field(default_factory=VitParams)

    def __post_init__(self):
        if isinstance(self.prior, dict):
            self.prior = PriorConfig(**self.prior)
        if isinstance(self.vit, dict):
            self.vit = VitParams(**self.vit)

    @property
    def token_grid(self) -> int:
        return self.input_size // self.vit.patch_size

    def validate(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ParameterError(
                f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURES}"
            )
        if self.z_channels < 1 or self.latent_spatial < 1:
            raise ParameterError("z_channels and latent_spatial must be >= 1")
        if self.beta < 0:
            raise ParameterError(f"beta must be nonnegative, got {self.beta}")
        self.prior.validate()
        if self.architecture == "vit_vae":
            if self.input_size % self.vit.patch_size != 0:
                raise ParameterError(
                    f"input_size {self.input_size} not divisible by patch_size {self.vit.patch_size}"
                )
            if self.vit.embed_dim % self.vit.heads != 0:
                raise ParameterError(
                    f"embed_dim {self.vit.embed_dim} not divisible by heads {self.vit.heads}"
                )
            if self.vit.patch_size & (self.vit.patch_size - 1):
                raise ParameterError(
                    f"patch_size must be a power of two for the conv decoder, got {self.vit.patch_size}"
                )
        else:
            factor, rem = divmod(self.input_size, self.latent_spatial)
            if rem or factor < 1 or (factor & (factor - 1)):
                raise ParameterError(
                    f"input_size / latent_spatial must be a power of two, got "
                    f"{self.input_size}/{self.latent_spatial}"
                )
            if self.architecture == "vae_grf" and self.prior.kind == "standard":
                raise ParameterError("vae_grf requires a GRF prior kind (identity/exponential/matern)")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 1e-4
    seed: int = 0


def default_model_config(architecture: str) -> ModelConfig:
    """Benchmark defaults per architecture.

    Conv variants: 256px input, 256 latent channels on a 32x32 lattice, beta 1.
    The GRF variant defaults to the identity correlation. The ViT variant uses
    224px input, patch 16 (14x14 tokens) and a 384-dim per-token latent.
    """
    if architecture in ("vae", "vae_grf"):
        prior = PriorConfig(kind="identity") if architecture == "vae_grf" else PriorConfig()
        return ModelConfig(architecture=architecture, prior=prior)
    if architecture == "vit_vae":
        return ModelConfig(architecture="vit_vae", input_size=224)
    raise ParameterError(f"unknown architecture {architecture!r}; expected one of {ARCHITECTURES}")


def config_to_dict(config) -> dict:
    return asdict(config)


def model_config_from_dict(data: dict) -> ModelConfig:
    known = {f.name for f in fields(ModelConfig)}
    unknown = set(data) - known
    if unknown:
        raise ParameterError(f"unknown model config keys: {sorted(unknown)}")
    return ModelConfig(**data)


def config_hash(data: dict) -> str:
    """Content hash of a config snapshot (stable across key order)."""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
