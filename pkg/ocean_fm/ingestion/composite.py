"""Fine-tuning dataset construction: median composites, labeled patches, depth integration."""

from __future__ import annotations

import logging
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from ocean_fm.constants import COMPOSITE_WINDOW_DAYS, PATCH_SIZE
from ocean_fm.data.tiles import LabeledPatch, TargetKind, Tile, label_block_slice
from ocean_fm.errors import (
    DomainError,
    EmptyWindowError,
    GeometryError,
    InsufficientDataError,
    ValidationError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneStack:
    """Co-registered tiles with acquisition times in days, ascending."""
    tiles: tuple[Tile, ...]
    days: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.tiles) != len(self.days):
            raise ValidationError("one acquisition time per tile is required")
        if not self.tiles:
            raise ValidationError("scene stack is empty")
        first = self.tiles[0]
        for tile in self.tiles[1:]:
            if tile.bands != first.bands or tile.planes.shape != first.planes.shape:
                raise ValidationError("stack tiles differ in bands or shape")
        if any(b < a for a, b in zip(self.days, self.days[1:])):
            raise ValidationError("acquisition times must be sorted ascending")

    @classmethod
    def from_unsorted(cls, tiles: Sequence[Tile], days: Sequence[float]) -> SceneStack:
        order = sorted(range(len(days)), key=lambda i: days[i])
        return cls(tuple(tiles[i] for i in order), tuple(float(days[i]) for i in order))


def median_composite(
    stack: SceneStack, center_day: float, window_days: float = COMPOSITE_WINDOW_DAYS
) -> Tile:
    """Per-pixel NaN-skipping median over tiles within ``window_days / 2`` of the center.

    Window membership is closed at both ends. Even counts average the two
    middle values; a pixel with no valid contributor stays invalid.
    """
    half = window_days / 2.0
    members = [t for t, d in zip(stack.tiles, stack.days) if abs(d - center_day) <= half]
    if not members:
        raise EmptyWindowError(
            f"no acquisitions within {half:g} days of day {center_day:g}",
            details={"center_day": center_day, "days": list(stack.days)},
        )
    data = np.stack([t.planes for t in members])
    with warnings.catch_warnings():
        # All-NaN slices are expected under clouds.
        warnings.simplefilter("ignore", RuntimeWarning)
        median = np.nanmedian(data, axis=0).astype(np.float32)
    logger.debug("Composited %d of %d acquisitions around day %g",
                 len(members), len(stack.tiles), center_day)
    return Tile(members[0].bands, median, ~np.isnan(median), members[0].meta).validate()


def make_labeled_patch(
    composite: Tile, value: float, kind: TargetKind, source_id: str = ""
) -> LabeledPatch:
    """Attach ``log10(value)`` to the center 3x3 block of an 80x80 composite."""
    if composite.height != PATCH_SIZE or composite.width != PATCH_SIZE:
        raise GeometryError(
            f"composite is {composite.height}x{composite.width}, expected "
            f"{PATCH_SIZE}x{PATCH_SIZE}"
        )
    if not math.isfinite(value) or value <= 0:
        raise DomainError(
            f"{kind.value} measurement {value} must be positive for log10 targets",
            details={"value": value},
        )
    label = np.full((PATCH_SIZE, PATCH_SIZE), np.nan, dtype=np.float32)
    label[label_block_slice()] = math.log10(value)
    return LabeledPatch(composite, label, kind, source_id)


# ── Depth integration ──────────────────────────────────────────────


@dataclass(frozen=True)
class DepthProfile:
    """Production (mgC/m^3/day) sampled at strictly increasing depths (m)."""
    depths: tuple[float, ...]
    production: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.depths) != len(self.production):
            raise ValidationError("depths and production must have equal length")
        if len(self.depths) < 2:
            raise InsufficientDataError(
                f"depth profile needs at least 2 samples, got {len(self.depths)}"
            )
        if any(d < 0 for d in self.depths) or any(p < 0 for p in self.production):
            raise DomainError("depths and production must be non-negative")
        if any(b <= a for a, b in zip(self.depths, self.depths[1:])):
            raise ValidationError("depths must be strictly increasing")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]]) -> DepthProfile:
        return cls(tuple(float(d) for d, _ in pairs), tuple(float(p) for _, p in pairs))


def integrate_depth(profile: DepthProfile) -> float:
    """Column-integrated production (mgC/m^2/day) by the trapezoidal rule."""
    return float(trapezoid(profile.production, profile.depths))
