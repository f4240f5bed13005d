"""Pre-training dataset construction: scene splitting, validity filtering, balanced sampling."""

from __future__ import annotations

import csv
import io
import logging
import os
from collections import defaultdict
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Generic, TypeVar

import numpy as np

from ocean_fm.constants import (
    DEFAULT_EXCLUDED_REGIONS,
    MIN_VALID_FRACTION,
    SOURCE_TILE_SIZE,
    derive_seed,
)
from ocean_fm.data.atomic import atomic_write_text
from ocean_fm.data.tiles import Tile
from ocean_fm.errors import ConfigurationError, ValidationError

logger = logging.getLogger(__name__)

T = TypeVar("T")

CALENDAR_MONTHS: tuple[int, ...] = tuple(range(1, 13))


# ── Splitting and filtering ────────────────────────────────────────


def split_scene(scene: Tile, size: int = SOURCE_TILE_SIZE) -> list[Tile]:
    """Non-overlapping ``size`` x ``size`` tiles from the top-left; remainders are dropped."""
    rows, cols = scene.height // size, scene.width // size
    return [
        scene.crop(r * size, c * size, size)
        for r in range(rows)
        for c in range(cols)
    ]


def valid_fraction(tile: Tile) -> float:
    """Fraction of pixels valid in at least one band."""
    valid = tile.validity.any(axis=0)
    return float(valid.sum()) / float(valid.size)


def passes_filter(tile: Tile, threshold: float = MIN_VALID_FRACTION) -> bool:
    return valid_fraction(tile) >= threshold


# ── Balanced sampling ──────────────────────────────────────────────


@dataclass(frozen=True)
class SampleBudget:
    """Per-region tile counts, spread evenly over ``months``."""
    counts: dict[str, int]
    months: tuple[int, ...] = CALENDAR_MONTHS
    excluded: frozenset[str] = DEFAULT_EXCLUDED_REGIONS

    def __post_init__(self) -> None:
        negative = {r: n for r, n in self.counts.items() if n < 0}
        if negative:
            raise ConfigurationError("budget counts must be >= 0", details=negative)
        if not self.months or len(set(self.months)) != len(self.months):
            raise ConfigurationError("budget months must be non-empty and unique")

    @classmethod
    def uniform(
        cls,
        regions: Iterable[str],
        count: int,
        *,
        months: tuple[int, ...] = CALENDAR_MONTHS,
        excluded: frozenset[str] = DEFAULT_EXCLUDED_REGIONS,
    ) -> SampleBudget:
        return cls({r: count for r in regions}, months=months, excluded=excluded)

    def month_targets(self, region: str, rng: np.random.Generator) -> dict[int, int]:
        """Even split across months; remainder months picked by a seeded draw."""
        total = self.counts[region]
        base, remainder = divmod(total, len(self.months))
        targets = dict.fromkeys(self.months, base)
        if remainder:
            for pick in rng.choice(len(self.months), size=remainder, replace=False):
                targets[self.months[int(pick)]] += 1
        return targets


@dataclass(frozen=True)
class Shortfall:
    region: str
    month: int
    requested: int
    available: int


@dataclass
class SampleResult(Generic[T]):
    selected: list[T]
    shortfalls: list[Shortfall] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.shortfalls


def tile_cell(tile: Tile) -> tuple[str, int]:
    return tile.meta.region, tile.meta.month


def balanced_sample(
    candidates: Sequence[T],
    budget: SampleBudget,
    seed: int,
    *,
    key: Callable[[T], tuple[str, int]] = tile_cell,  # type: ignore[assignment]
) -> SampleResult[T]:
    """Draw the budgeted count per region, evenly per month, without replacement.

    Cells with too few candidates contribute everything they have and are
    listed in ``shortfalls``. Output is ordered by region, month, then input
    position, and depends only on the inputs and ``seed``.
    """
    cells: dict[tuple[str, int], list[int]] = defaultdict(list)
    for i, item in enumerate(candidates):
        cells[key(item)].append(i)

    rng = np.random.default_rng(derive_seed(seed, "sample"))
    selected: list[T] = []
    shortfalls: list[Shortfall] = []
    for region in sorted(budget.counts):
        if region in budget.excluded:
            logger.debug("Skipping excluded region %s", region)
            continue
        for month, target in budget.month_targets(region, rng).items():
            pool = cells.get((region, month), [])
            take = min(target, len(pool))
            if take < target:
                shortfalls.append(Shortfall(region, month, target, len(pool)))
            if take == 0:
                continue
            picks = np.sort(rng.choice(len(pool), size=take, replace=False))
            selected.extend(candidates[pool[int(p)]] for p in picks)

    if shortfalls:
        logger.warning(
            "Sampling shortfall in %d (region, month) cells; %d tiles missing",
            len(shortfalls), sum(s.requested - s.available for s in shortfalls),
        )
    logger.info("Balanced sample selected %d of %d candidates", len(selected), len(candidates))
    return SampleResult(selected, shortfalls)


# ── Manifest ───────────────────────────────────────────────────────


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    region: str
    month: int
    valid_fraction: float


def format_manifest(entries: Iterable[ManifestEntry]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    for e in entries:
        writer.writerow([e.path, e.region, e.month, f"{e.valid_fraction:.6f}"])
    return buf.getvalue()


def write_manifest(entries: Iterable[ManifestEntry], path: str | os.PathLike[str]) -> int:
    return atomic_write_text(path, format_manifest(entries))


def read_manifest(path: str | os.PathLike[str]) -> list[ManifestEntry]:
    entries: list[ManifestEntry] = []
    with Path(path).open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
            if len(row) != 4:
                raise ValidationError(
                    f"manifest line {lineno} has {len(row)} fields, expected 4",
                    details={"line": lineno},
                )
            try:
                entries.append(ManifestEntry(row[0], row[1], int(row[2]), float(row[3])))
            except ValueError:
                raise ValidationError(
                    f"manifest line {lineno} is malformed", details={"line": lineno}
                ) from None
    return entries
