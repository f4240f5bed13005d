"""Shared constants used across the pipeline.

Band sets, tile geometry, excluded regions and the
seed-stream offsets all live here.
"""

from __future__ import annotations

from ocean_fm.errors import ConfigurationError

OLCI_BANDS: tuple[str, ...] = (
    "OL1", "OL2", "OL3", "OL4", "OL5", "OL6", "OL7", "OL8",
    "OL9", "OL10", "OL11", "OL12", "OL16", "OL17", "OL18", "OL21",
)
SST_BAND = "SST"

# Polar provinces and inland water.
DEFAULT_EXCLUDED_REGIONS: frozenset[str] = frozenset({"APLR", "ANTA", "LAKE"})

SOURCE_TILE_SIZE = 45
PATCH_SIZE = 80
CROP_SIZE = 42
TOKEN_PATCH = 2

# Zero-indexed rows/cols 38-40 of an 80x80 patch.
LABEL_BLOCK_SIZE = 3
LABEL_BLOCK_START = 38

MIN_VALID_FRACTION = 0.8
COMPOSITE_WINDOW_DAYS = 6.0

FRACTION_GRID: tuple[float, ...] = (0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0)

SST_RANGE_K = (271.0, 305.0)
REFLECTANCE_RANGE = (0.0, 0.2)

HISTOGRAM_BINS = 64

# derive_seed packs (seed, epoch, index) into one stream without overlap;
# each stream owns STREAM_SPAN consecutive values and the largest derived
# seed stays below 2**63.
SEED_LIMIT = 2**23
EPOCH_LIMIT = 2**16
INDEX_LIMIT = 2**20
STREAM_SPAN = SEED_LIMIT * EPOCH_LIMIT * INDEX_LIMIT

SEED_OFFSETS: dict[str, int] = {
    name: i * STREAM_SPAN
    for i, name in enumerate((
        "init", "mask", "augment", "shuffle", "folds",
        "subset", "trees", "synth", "sample", "validation",
    ))
}


def derive_seed(seed: int, stream: str, *, epoch: int = 0, index: int = 0) -> int:
    """Fan a global seed out to a component stream (fixed offsets, stable across versions).

    Distinct ``(seed, stream, epoch, index)`` tuples give distinct seeds as
    long as each lies in ``[0, SEED_LIMIT)``, ``[0, EPOCH_LIMIT)`` and
    ``[0, INDEX_LIMIT)``; anything outside raises ``ConfigurationError``.
    """
    try:
        offset = SEED_OFFSETS[stream]
    except KeyError:
        raise KeyError(f"unknown seed stream '{stream}'") from None
    if not (0 <= seed < SEED_LIMIT and 0 <= epoch < EPOCH_LIMIT and 0 <= index < INDEX_LIMIT):
        raise ConfigurationError(
            f"seed {seed}, epoch {epoch} or index {index} outside the derivable range",
            details={"limits": (SEED_LIMIT, EPOCH_LIMIT, INDEX_LIMIT)},
        )
    return offset + (seed * EPOCH_LIMIT + epoch) * INDEX_LIMIT + index
