"""Core value types: band sets, tiles and sparse-label patches."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ocean_fm.constants import (
    LABEL_BLOCK_SIZE,
    LABEL_BLOCK_START,
    OLCI_BANDS,
    PATCH_SIZE,
    SST_BAND,
)
from ocean_fm.errors import ValidationError


class TargetKind(str, Enum):
    """Fine-tuning target, always stored as log10."""
    CHLOROPHYLL = "chl"  # log10 mg/m^3
    PRIMARY_PRODUCTION = "pp"  # log10 mgC/m^2/day


@dataclass(frozen=True)
class BandSet:
    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise ValidationError(f"duplicate band identifiers in {self.names}")
        for name in self.names:
            if not name or not name.isascii() or len(name) > 255:
                raise ValidationError(f"invalid band identifier {name!r}")

    @classmethod
    def olci(cls, *, with_sst: bool = False) -> BandSet:
        return cls(OLCI_BANDS + ((SST_BAND,) if with_sst else ()))

    @property
    def count(self) -> int:
        return len(self.names)

    @property
    def has_sst(self) -> bool:
        return SST_BAND in self.names

    def index(self, name: str) -> int:
        return self.names.index(name)

    @classmethod
    def default(cls, count: int) -> BandSet:
        """Canonical names for ``count`` bands: OLCI (+SST) for 16/17, else ``B1..Bn``."""
        if count == len(OLCI_BANDS):
            return cls.olci()
        if count == len(OLCI_BANDS) + 1:
            return cls.olci(with_sst=True)
        return cls(tuple(f"B{i + 1}" for i in range(count)))

    def without(self, name: str) -> BandSet:
        return BandSet(tuple(n for n in self.names if n != name))


@dataclass(frozen=True)
class TileMeta:
    region: str = ""
    year: int = 0
    month: int = 0
    lat: float = 0.0
    lon: float = 0.0

    def __post_init__(self) -> None:
        if len(self.region) > 7 or not self.region.isascii():
            raise ValidationError(f"region code {self.region!r} must be <= 7 ASCII chars")
        if not 0 <= self.month <= 12:
            raise ValidationError(f"month {self.month} outside 0..12")


@dataclass(frozen=True, eq=False)
class Tile:
    """Multispectral patch: ``planes`` is C x H x W float32, NaN wherever ``validity`` is False."""
    bands: BandSet
    planes: np.ndarray
    validity: np.ndarray
    meta: TileMeta = field(default_factory=TileMeta)

    @classmethod
    def from_planes(
        cls,
        bands: BandSet,
        planes: np.ndarray,
        meta: TileMeta | None = None,
    ) -> Tile:
        """Build a tile whose validity is derived from the NaN pattern."""
        planes = np.ascontiguousarray(planes, dtype=np.float32)
        return cls(bands, planes, ~np.isnan(planes), meta or TileMeta())

    @property
    def height(self) -> int:
        return int(self.planes.shape[1])

    @property
    def width(self) -> int:
        return int(self.planes.shape[2])

    def violations(self) -> list[str]:
        found: list[str] = []
        if self.planes.ndim != 3 or self.planes.dtype != np.float32:
            found.append("planes must be a float32 C x H x W array")
            return found
        if self.planes.shape[0] != self.bands.count:
            found.append(
                f"plane count {self.planes.shape[0]} does not match {self.bands.count} bands"
            )
        if self.validity.shape != self.planes.shape or self.validity.dtype != np.bool_:
            found.append("validity must be a boolean array shaped like planes")
            return found
        nan = np.isnan(self.planes)
        if np.any(nan & self.validity):
            found.append("valid pixel holds NaN")
        if np.any(~nan & ~self.validity):
            found.append("invalid pixel holds a value other than NaN")
        if np.any(np.isinf(self.planes)):
            found.append("plane holds an infinite value")
        return found

    def validate(self) -> Tile:
        found = self.violations()
        if found:
            raise ValidationError("; ".join(found), details={"violations": found})
        return self

    def crop(self, top: int, left: int, size: int) -> Tile:
        sl = np.s_[:, top:top + size, left:left + size]
        return replace(
            self,
            planes=np.ascontiguousarray(self.planes[sl]),
            validity=np.ascontiguousarray(self.validity[sl]),
        )

    def select_bands(self, bands: BandSet) -> Tile:
        idx = [self.bands.index(n) for n in bands.names]
        return replace(
            self, bands=bands, planes=self.planes[idx].copy(), validity=self.validity[idx].copy()
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tile):
            return NotImplemented
        return (
            self.bands == other.bands
            and self.meta == other.meta
            and self.planes.shape == other.planes.shape
            and self.planes.tobytes() == other.planes.tobytes()
            and np.array_equal(self.validity, other.validity)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class LabeledPatch:
    """80x80 fine-tuning sample labeled on a single 3x3 block."""
    tile: Tile
    label_plane: np.ndarray
    kind: TargetKind
    source_id: str = ""

    def labeled_mask(self) -> np.ndarray:
        return ~np.isnan(self.label_plane)

    @property
    def label_value(self) -> float:
        values = self.label_plane[self.labeled_mask()]
        return float(values[0]) if values.size else float("nan")

    def with_bands(self, bands: BandSet) -> LabeledPatch:
        if bands == self.tile.bands:
            return self
        return replace(self, tile=self.tile.select_bands(bands))


def label_block_slice(
    start: int = LABEL_BLOCK_START, size: int = LABEL_BLOCK_SIZE
) -> tuple[slice, slice]:
    return slice(start, start + size), slice(start, start + size)


def validate_labeled_patch(patch: LabeledPatch) -> list[str]:
    """Return every violated invariant; an empty list means the patch is well formed."""
    violations: list[str] = []
    tile = patch.tile
    if tile.height != PATCH_SIZE or tile.width != PATCH_SIZE:
        violations.append(f"patch extent {tile.height}x{tile.width} not {PATCH_SIZE}x{PATCH_SIZE}")
    if patch.label_plane.shape != (tile.height, tile.width):
        violations.append("label plane shape does not match tile")
        return violations

    mask = patch.labeled_mask()
    rows, cols = np.nonzero(mask)
    is_block = (
        rows.size == LABEL_BLOCK_SIZE * LABEL_BLOCK_SIZE
        and rows.max() - rows.min() == LABEL_BLOCK_SIZE - 1
        and cols.max() - cols.min() == LABEL_BLOCK_SIZE - 1
    )
    if not is_block:
        violations.append("label block not 3x3")
    values = patch.label_plane[mask]
    if values.size and not np.all(np.isfinite(values)):
        violations.append("label value not finite")
    elif values.size and np.unique(values).size != 1:
        violations.append("label values not uniform")
    return violations


__all__ = [
    "BandSet",
    "LabeledPatch",
    "TargetKind",
    "Tile",
    "TileMeta",
    "label_block_slice",
    "validate_labeled_patch",
]
