"""Per-band normalization statistics."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from ocean_fm.data.tiles import Tile
from ocean_fm.errors import InsufficientDataError, ValidationError


@dataclass(frozen=True, eq=False)
class NormStats:
    mean: np.ndarray  # float32, one entry per band
    std: np.ndarray

    def __post_init__(self) -> None:
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValidationError("mean/std must be 1-D arrays of equal length")
        if not np.all(np.isfinite(self.mean)) or not np.all(self.std > 0):
            raise ValidationError(
                "normalization statistics must be finite with std > 0",
                details={"std": self.std.tolist()},
            )

    @property
    def count(self) -> int:
        return int(self.mean.shape[0])

    def select(self, indices: list[int]) -> NormStats:
        return NormStats(self.mean[indices].copy(), self.std[indices].copy())

    def scale(self, planes: np.ndarray) -> np.ndarray:
        """Normalize a C x H x W array, keeping NaN at invalid pixels."""
        return ((planes - self.mean[:, None, None]) / self.std[:, None, None]).astype(np.float32)

    def apply(self, planes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Normalize and zero-fill; returns the values and the validity mask."""
        validity = ~np.isnan(planes)
        return np.where(validity, self.scale(planes), np.float32(0.0)), validity

    def invert(self, planes: np.ndarray) -> np.ndarray:
        return (planes * self.std[:, None, None] + self.mean[:, None, None]).astype(np.float32)


def compute_norm_stats(tiles: Iterable[Tile]) -> NormStats:
    """Mean and population std per band over all valid pixels (float64 accumulation)."""
    total: np.ndarray | None = None
    total_sq: np.ndarray | None = None
    count: np.ndarray | None = None
    for tile in tiles:
        values = np.where(tile.validity, tile.planes, 0.0).astype(np.float64)
        if total is None:
            total = np.zeros(tile.bands.count)
            total_sq = np.zeros(tile.bands.count)
            count = np.zeros(tile.bands.count)
        total += values.sum(axis=(1, 2))
        total_sq += (values * values).sum(axis=(1, 2))
        count += tile.validity.sum(axis=(1, 2))
    if total is None or count is None or total_sq is None:
        raise InsufficientDataError("cannot compute normalization statistics from no tiles")
    if np.any(count == 0):
        raise InsufficientDataError(
            "a band has no valid pixels", details={"counts": count.tolist()}
        )
    mean = total / count
    var = np.maximum(total_sq / count - mean * mean, 0.0)
    std = np.sqrt(var).astype(np.float32)
    # Constant bands normalize to zero instead of dividing by zero.
    std = np.where(std > 0, std, np.float32(1.0))
    return NormStats(mean.astype(np.float32), std)
