"""Masked autoencoder: encoder over visible tokens, light decoder over the full grid."""

from __future__ import annotations

from collections.abc import Sequence

import torch
from torch import nn

from ocean_fm.config import ModelProfile
from ocean_fm.constants import TOKEN_PATCH
from ocean_fm.errors import DimensionError, EmptyLossError
from ocean_fm.models.encoder import (
    Encoder,
    MaskPlan,
    patchify,
    pos_embed_2d,
    unpatchify,
    visible_index,
)
from ocean_fm.nn.core import LAYER_NORM_EPS, Dense, TransformerBlock

MASK_TOKEN_STD = 0.02


class MaskedAutoencoder(nn.Module):
    def __init__(self, profile: ModelProfile) -> None:
        super().__init__()
        self.profile = profile
        self.encoder = Encoder(profile)
        dim = profile.decoder_embed_dim
        self.decoder_embed = Dense(profile.embed_dim, dim)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, dim))
        nn.init.normal_(self.mask_token, std=MASK_TOKEN_STD)
        self.register_buffer(
            "decoder_pos_embed",
            pos_embed_2d(profile.grid_size, profile.grid_size, dim),
            persistent=False,
        )
        self.decoder_blocks = nn.ModuleList(
            TransformerBlock(dim, profile.decoder_num_heads, profile.mlp_ratio)
            for _ in range(profile.decoder_depth)
        )
        self.decoder_norm = nn.LayerNorm(dim, eps=LAYER_NORM_EPS)
        self.decoder_pred = Dense(dim, profile.patch_dim)

    def forward(self, images: torch.Tensor, plans: Sequence[MaskPlan]) -> torch.Tensor:
        """Reconstruct ``B x C x H x W`` images; one plan per example."""
        profile = self.profile
        if len(plans) != images.shape[0]:
            raise DimensionError(f"{len(plans)} mask plans for a batch of {images.shape[0]}")
        patches = patchify(images, profile.patch_size)
        batch, tokens, _ = patches.shape
        visible = visible_index(plans, tokens)
        latent, _ = self.encoder(patches, visible if plans[0].masked else None)

        y = self.decoder_embed(latent)
        dim = y.shape[-1]
        if plans[0].masked:
            full = self.mask_token.expand(batch, tokens, dim).clone()
            y = full.scatter(1, visible.unsqueeze(-1).expand(-1, -1, dim), y)
        y = y + self.decoder_pos_embed.to(y.dtype)
        for block in self.decoder_blocks:
            y = block(y)
        pred = self.decoder_pred(self.decoder_norm(y))
        grid = (profile.grid_size, profile.grid_size)
        return unpatchify(pred, profile.patch_size, profile.in_channels, grid)


def mae_forward(model: MaskedAutoencoder, image: torch.Tensor, plan: MaskPlan) -> torch.Tensor:
    """Single-example reconstruction of a normalized, zero-filled ``C x H x W`` image."""
    return model(image.unsqueeze(0), [plan])[0]


def masked_squared_error(
    recon: torch.Tensor,
    target: torch.Tensor,
    plans: MaskPlan | Sequence[MaskPlan],
    validity: torch.Tensor,
    *,
    patch: int = TOKEN_PATCH,
) -> tuple[torch.Tensor, int]:
    """Float64 sum of squared errors over masked, valid pixels, and their count."""
    if recon.shape != target.shape or validity.shape != recon.shape:
        raise DimensionError(
            "recon, target and validity must share a shape",
            details={
                "recon": tuple(recon.shape),
                "target": tuple(target.shape),
                "validity": tuple(validity.shape),
            },
        )
    if isinstance(plans, MaskPlan):
        plans = [plans]
    if recon.dim() == 3:
        recon, target, validity = recon[None], target[None], validity[None]
    height, width = recon.shape[-2:]
    grid = (height // patch, width // patch)
    pixels = torch.stack([plan.pixel_mask(grid, patch) for plan in plans])
    mask = pixels[:, None] & validity.bool()
    diff = torch.where(mask, recon - target, torch.zeros((), dtype=recon.dtype))
    diff = diff.to(torch.float64)
    return (diff * diff).sum(), int(mask.sum())


def masked_rmse_loss(
    recon: torch.Tensor,
    target: torch.Tensor,
    plans: MaskPlan | Sequence[MaskPlan],
    validity: torch.Tensor,
    *,
    patch: int = TOKEN_PATCH,
) -> torch.Tensor:
    """RMSE over pixels that are both inside masked patches and valid."""
    total, count = masked_squared_error(recon, target, plans, validity, patch=patch)
    if count == 0:
        raise EmptyLossError("no valid pixels inside masked patches")
    return torch.sqrt(total / count).to(recon.dtype)
