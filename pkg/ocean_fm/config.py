"""Model profiles for the ocean-colour ViT encoder and its decoders."""

from __future__ import annotations

from dataclasses import dataclass, replace

from ocean_fm.constants import CROP_SIZE, TOKEN_PATCH
from ocean_fm.errors import ConfigurationError


@dataclass(frozen=True)
class ModelProfile:
    """Architecture hyper-parameters shared by pre-training and fine-tuning."""
    name: str
    input_size: int = CROP_SIZE
    patch_size: int = TOKEN_PATCH
    in_channels: int = 16
    embed_dim: int = 128
    depth: int = 6
    num_heads: int = 8
    decoder_embed_dim: int = 64
    decoder_depth: int = 2
    decoder_num_heads: int = 4
    mlp_ratio: float = 4.0
    # Channels of the upsampling regression decoder.
    head_channels: int = 32

    def __post_init__(self) -> None:
        if self.input_size % self.patch_size:
            raise ConfigurationError(
                f"input size {self.input_size} not divisible by patch size {self.patch_size}",
                details={"profile": self.name},
            )
        if self.embed_dim % self.num_heads:
            raise ConfigurationError(
                f"embed dim {self.embed_dim} not divisible by {self.num_heads} heads",
                details={"profile": self.name},
            )
        if self.decoder_embed_dim % self.decoder_num_heads:
            raise ConfigurationError(
                f"decoder embed dim {self.decoder_embed_dim} not divisible by "
                f"{self.decoder_num_heads} heads",
                details={"profile": self.name},
            )
        if self.embed_dim % 4 or self.decoder_embed_dim % 4:
            raise ConfigurationError(
                "embed dims must be divisible by 4 for 2D sin/cos embeddings",
                details={"profile": self.name},
            )
        if self.in_channels < 1 or self.depth < 1:
            raise ConfigurationError(
                "profile needs at least one channel and one block",
                details={"profile": self.name},
            )

    @property
    def grid_size(self) -> int:
        return self.input_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid_size * self.grid_size

    @property
    def patch_dim(self) -> int:
        return self.in_channels * self.patch_size * self.patch_size

    def with_channels(self, in_channels: int) -> ModelProfile:
        return replace(self, in_channels=in_channels)


PROFILES: dict[str, ModelProfile] = {
    "tiny": ModelProfile(
        name="tiny", input_size=8, in_channels=2, embed_dim=16, depth=1, num_heads=2,
        decoder_embed_dim=16, decoder_depth=1, decoder_num_heads=2, head_channels=8,
    ),
    "small": ModelProfile(
        name="small", embed_dim=32, depth=2, num_heads=4,
        decoder_embed_dim=32, decoder_depth=1, decoder_num_heads=4, head_channels=16,
    ),
    "desk": ModelProfile(name="desk"),
    "full": ModelProfile(
        name="full", embed_dim=512, depth=12, num_heads=8, head_channels=64,
    ),
}


def get_profile(name: str, in_channels: int | None = None) -> ModelProfile:
    """Look up a named profile, optionally binding the input channel count."""
    try:
        profile = PROFILES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown model profile '{name}'",
            details={"known": sorted(PROFILES)},
        ) from None
    if in_channels is not None:
        profile = profile.with_channels(in_channels)
    return profile
