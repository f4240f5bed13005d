"""Pixel-wise regression: encoder taps fused by an upsampling convolutional head."""

from __future__ import annotations

import logging

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ocean_fm.config import ModelProfile
from ocean_fm.errors import DimensionError, EmptyLossError
from ocean_fm.models.encoder import Encoder, patchify, tap_indices

logger = logging.getLogger(__name__)

NUM_TAPS = 4


class RegressionHead(nn.Module):
    """Project each tapped token map, upsample to the input size, sum, refine, regress."""

    def __init__(self, profile: ModelProfile) -> None:
        super().__init__()
        self.profile = profile
        ch = profile.head_channels
        self.proj = nn.ModuleList(
            nn.Conv2d(profile.embed_dim, ch, kernel_size=1) for _ in range(NUM_TAPS)
        )
        self.fuse1 = nn.Conv2d(ch, ch, kernel_size=3, padding=1)
        self.fuse2 = nn.Conv2d(ch, ch, kernel_size=3, padding=1)
        self.out = nn.Conv2d(ch, 1, kernel_size=1)

    def forward(self, taps: list[torch.Tensor]) -> torch.Tensor:
        profile = self.profile
        g, size = profile.grid_size, profile.input_size
        fused: torch.Tensor | None = None
        for proj, tokens in zip(self.proj, taps, strict=True):
            grid = tokens.transpose(1, 2).reshape(tokens.shape[0], -1, g, g)
            up = F.interpolate(proj(grid), size=(size, size), mode="bilinear", align_corners=False)
            fused = up if fused is None else fused + up
        assert fused is not None
        x = F.relu(self.fuse1(fused))
        x = F.relu(self.fuse2(x))
        return self.out(x)


class RegressionModel(nn.Module):
    """Same encoder as pre-training; the head is always freshly initialized."""

    def __init__(self, profile: ModelProfile) -> None:
        super().__init__()
        self.profile = profile
        self.taps = tap_indices(profile.depth, NUM_TAPS)
        self.encoder = Encoder(profile)
        self.head = RegressionHead(profile)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """``B x C x H x W`` normalized, zero-filled images -> ``B x H x W`` log10 predictions."""
        patches = patchify(images, self.profile.patch_size)
        _, taps = self.encoder(patches, taps=self.taps)
        return self.head(taps)[:, 0]


def sparse_masked_loss(pred: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
    """RMSE over labeled (non-NaN) pixels only."""
    if pred.shape != label.shape:
        raise DimensionError(
            f"prediction {tuple(pred.shape)} and label {tuple(label.shape)} differ in shape"
        )
    labeled = ~torch.isnan(label)
    count = int(labeled.sum())
    if count == 0:
        raise EmptyLossError("no labeled pixels")
    diff = torch.where(labeled, pred - torch.nan_to_num(label), torch.zeros((), dtype=pred.dtype))
    diff = diff.to(torch.float64)
    return torch.sqrt((diff * diff).sum() / count).to(pred.dtype)


def predict(model: RegressionModel, image: np.ndarray) -> np.ndarray:
    """Predict a single-channel plane for one normalized ``C x H x W`` image.

    Invalid pixels may hold NaN and are zero-filled. An image with no valid
    pixel at all yields an all-NaN plane.
    """
    if image.ndim != 3 or image.shape[0] != model.profile.in_channels:
        raise DimensionError(
            f"image of shape {image.shape} does not match a "
            f"{model.profile.in_channels}-channel model"
        )
    if np.isnan(image).all():
        logger.warning("Input has no valid pixels; returning an all-NaN plane")
        return np.full(image.shape[1:], np.nan, dtype=np.float32)
    x = torch.from_numpy(np.nan_to_num(image, nan=0.0).astype(np.float32))
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            dtype = next(model.parameters()).dtype
            out = model(x.to(dtype).unsqueeze(0))[0]
    finally:
        model.train(was_training)
    return out.to(torch.float32).numpy()
