"""ViT encoder shared by masked-autoencoder pre-training and regression fine-tuning."""

from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass

import torch
from torch import nn

from ocean_fm.config import ModelProfile
from ocean_fm.errors import ConfigurationError, GeometryError
from ocean_fm.nn.core import LAYER_NORM_EPS, Dense, TransformerBlock

POS_EMBED_BASE = 10000.0


@contextmanager
def seeded_init(seed: int) -> Iterator[None]:
    """Seed parameter initialization without disturbing the global torch RNG."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


# ── Patch geometry ─────────────────────────────────────────────────


def patchify(images: torch.Tensor, patch: int) -> torch.Tensor:
    """``(..., C, H, W)`` -> ``(..., T, C*p*p)``.

    Patches are ordered row-major; inside a patch values run channel-major,
    then row-major over pixels.
    """
    *lead, c, h, w = images.shape
    if h % patch or w % patch:
        raise GeometryError(f"image {h}x{w} not divisible by patch size {patch}")
    gh, gw = h // patch, w // patch
    x = images.reshape(*lead, c, gh, patch, gw, patch)
    n = len(lead)
    # (..., gh, gw, C, p, p)
    x = x.permute(*range(n), n + 1, n + 3, n, n + 2, n + 4)
    return x.reshape(*lead, gh * gw, c * patch * patch)


def unpatchify(
    tokens: torch.Tensor, patch: int, channels: int, grid: tuple[int, int]
) -> torch.Tensor:
    """Inverse of :func:`patchify`."""
    *lead, t, dim = tokens.shape
    gh, gw = grid
    if t != gh * gw or dim != channels * patch * patch:
        raise GeometryError(
            f"{t} tokens of width {dim} do not fit a {gh}x{gw} grid of "
            f"{channels}-channel {patch}x{patch} patches"
        )
    n = len(lead)
    x = tokens.reshape(*lead, gh, gw, channels, patch, patch)
    # (..., C, gh, p, gw, p)
    x = x.permute(*range(n), n + 2, n, n + 3, n + 1, n + 4)
    return x.reshape(*lead, channels, gh * patch, gw * patch)


def _sincos_1d(positions: torch.Tensor, dim: int) -> torch.Tensor:
    """Interleaved sin/cos: channel ``2i`` is sin, ``2i+1`` is cos of ``pos * base^(-2i/dim)``."""
    freqs = POS_EMBED_BASE ** (-torch.arange(0, dim, 2, dtype=torch.float64) / dim)
    angles = positions.to(torch.float64)[:, None] * freqs[None, :]
    out = torch.empty(positions.numel(), dim, dtype=torch.float64)
    out[:, 0::2] = torch.sin(angles)
    out[:, 1::2] = torch.cos(angles)
    return out


def pos_embed_2d(grid_h: int, grid_w: int, dim: int) -> torch.Tensor:
    """Fixed ``T x D`` embedding; first half encodes the row, second half the column."""
    if dim <= 0 or dim % 4:
        raise ConfigurationError(f"embedding dim {dim} must be a positive multiple of 4")
    rows = torch.arange(grid_h).repeat_interleave(grid_w)
    cols = torch.arange(grid_w).repeat(grid_h)
    half = dim // 2
    emb = torch.cat([_sincos_1d(rows, half), _sincos_1d(cols, half)], dim=1)
    return emb.to(torch.float32)


# ── Masking ────────────────────────────────────────────────────────


@dataclass(frozen=True)
class MaskPlan:
    """Which tokens of one example are hidden from the encoder."""
    num_tokens: int
    masked: tuple[int, ...]  # sorted, unique
    ratio: float

    @classmethod
    def full_view(cls, num_tokens: int) -> MaskPlan:
        return cls(num_tokens, (), 0.0)

    @property
    def visible(self) -> tuple[int, ...]:
        hidden = set(self.masked)
        return tuple(i for i in range(self.num_tokens) if i not in hidden)

    def token_mask(self) -> torch.Tensor:
        mask = torch.zeros(self.num_tokens, dtype=torch.bool)
        if self.masked:
            mask[list(self.masked)] = True
        return mask

    def pixel_mask(self, grid: tuple[int, int], patch: int) -> torch.Tensor:
        """``H x W`` boolean map of pixels inside masked patches."""
        gh, gw = grid
        if gh * gw != self.num_tokens:
            raise GeometryError(f"plan for {self.num_tokens} tokens used on a {gh}x{gw} grid")
        tokens = self.token_mask().reshape(gh, gw)
        return tokens.repeat_interleave(patch, dim=0).repeat_interleave(patch, dim=1)


def random_mask(num_tokens: int, ratio: float, seed: int) -> MaskPlan:
    """Uniformly mask ``floor(ratio * T)`` tokens without replacement."""
    if not 0.0 < ratio < 1.0:
        raise ConfigurationError(f"mask ratio {ratio} outside (0, 1)")
    count = math.floor(ratio * num_tokens)
    gen = torch.Generator().manual_seed(seed)
    order = torch.randperm(num_tokens, generator=gen)
    return MaskPlan(num_tokens, tuple(sorted(order[:count].tolist())), ratio)


def visible_index(plans: Sequence[MaskPlan], num_tokens: int) -> torch.Tensor:
    """``B x Nv`` indices of visible tokens; every plan must hide the same number."""
    for plan in plans:
        if plan.num_tokens != num_tokens:
            raise GeometryError(
                f"mask plan covers {plan.num_tokens} tokens, model has {num_tokens}"
            )
    if len({len(plan.masked) for plan in plans}) > 1:
        raise GeometryError("mask plans in one batch must hide the same number of tokens")
    return torch.tensor([plan.visible for plan in plans], dtype=torch.long)


# ── Encoder ────────────────────────────────────────────────────────


def tap_indices(depth: int, taps: int = 4) -> list[int]:
    """Evenly spaced block indices (repeats allowed for shallow encoders)."""
    return [max(0, (i + 1) * depth // taps - 1) for i in range(taps)]


class Encoder(nn.Module):
    """Linear patch embedding, fixed 2D sin/cos positions, pre-norm blocks."""

    def __init__(self, profile: ModelProfile) -> None:
        super().__init__()
        self.profile = profile
        self.patch_embed = Dense(profile.patch_dim, profile.embed_dim)
        self.register_buffer(
            "pos_embed",
            pos_embed_2d(profile.grid_size, profile.grid_size, profile.embed_dim),
            persistent=False,
        )
        self.blocks = nn.ModuleList(
            TransformerBlock(profile.embed_dim, profile.num_heads, profile.mlp_ratio)
            for _ in range(profile.depth)
        )
        self.norm = nn.LayerNorm(profile.embed_dim, eps=LAYER_NORM_EPS)

    def forward(
        self,
        patches: torch.Tensor,
        visible: torch.Tensor | None = None,
        *,
        taps: Sequence[int] = (),
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Encode ``B x T x P`` patch vectors.

        ``visible`` (``B x Nv``) keeps only those tokens; ``taps`` lists block
        indices whose outputs are returned alongside the normed result.
        """
        x = self.patch_embed(patches) + self.pos_embed.to(patches.dtype)
        if visible is not None:
            x = torch.gather(x, 1, visible.unsqueeze(-1).expand(-1, -1, x.shape[-1]))
        tapped: list[torch.Tensor] = []
        for i, block in enumerate(self.blocks):
            x = block(x)
            tapped.extend(x for t in taps if t == i)
        return self.norm(x), tapped


def patch_rows(patch: int, keep: Sequence[int]) -> list[int]:
    """Rows of a patch-embedding weight belonging to the kept input channels."""
    area = patch * patch
    return [c * area + k for c in keep for k in range(area)]
