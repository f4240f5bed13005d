"""Synthetic ocean-colour fields with a known band-to-target mapping.

Reflectance bands mix a few shared smooth fields through fixed spectral
loadings, so neighbouring bands stay correlated the way water-leaving
reflectance does. Each field is a sum of random-phase plane waves whose
angular wavenumbers sit near ``1 / correlation_length``. The optional SST
band is an independent field in kelvin. Clouds are one more smooth field
thresholded at the requested fraction. Labels follow ``log10(exp(w . x + b))``
where ``x`` is the mean band vector over the labeled block, so a correct
regressor can recover them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ocean_fm.constants import (
    LABEL_BLOCK_SIZE,
    LABEL_BLOCK_START,
    PATCH_SIZE,
    REFLECTANCE_RANGE,
    SOURCE_TILE_SIZE,
    SST_BAND,
    SST_RANGE_K,
    derive_seed,
)
from ocean_fm.data.tiles import (
    BandSet,
    LabeledPatch,
    TargetKind,
    Tile,
    TileMeta,
    label_block_slice,
)
from ocean_fm.errors import ConfigurationError

logger = logging.getLogger(__name__)

FIRST_YEAR = 2017
YEARS = 5
_MARGIN = 0.1
_LOADING_WIDTH = 0.35


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    band_count: int = 16
    size: int = SOURCE_TILE_SIZE
    correlation_length: float = 12.0
    cloud_fraction: float = 0.0
    weights: tuple[float, ...] | None = None
    bias: float = 0.5
    harmonics: int = 8
    spectral_factors: int | None = 3  # None: every reflectance band is its own field
    regions: tuple[str, ...] = ("SYN",)
    kind: TargetKind = TargetKind.CHLOROPHYLL

    def __post_init__(self) -> None:
        if self.correlation_length < 1:
            raise ConfigurationError(
                f"correlation length {self.correlation_length} must be >= 1"
            )
        if not 0.0 <= self.cloud_fraction < 1.0:
            raise ConfigurationError(f"cloud fraction {self.cloud_fraction} outside [0, 1)")
        if self.band_count < 1 or self.size < 1 or self.harmonics < 1 or not self.regions:
            raise ConfigurationError("band count, size, harmonics and regions must be non-empty")
        if self.spectral_factors is not None and self.spectral_factors < 1:
            raise ConfigurationError(
                f"spectral factor count {self.spectral_factors} must be >= 1 or None"
            )
        if self.weights is not None:
            if len(self.weights) != self.band_count:
                raise ConfigurationError(
                    f"{len(self.weights)} mapping weights for {self.band_count} bands"
                )
            if not all(math.isfinite(w) for w in self.weights):
                raise ConfigurationError("mapping weights must be finite")

    @property
    def bands(self) -> BandSet:
        return BandSet.default(self.band_count)

    def mapping_weights(self) -> np.ndarray:
        """Explicit weights, or a ramp from +10 to -10 across reflectance bands (SST weight 0)."""
        if self.weights is not None:
            return np.asarray(self.weights, dtype=np.float64)
        bands = self.bands
        reflectance = bands.count - int(bands.has_sst)
        weights = np.zeros(bands.count)
        weights[:reflectance] = np.linspace(10.0, -10.0, reflectance)
        return weights

    def spectral_loadings(self) -> np.ndarray:
        """``reflectance bands x factors`` convex weights: Gaussian bumps across the spectrum.

        Rows sum to one. Without spectral factors this is the identity.
        """
        reflectance = self.band_count - int(self.bands.has_sst)
        if self.spectral_factors is None:
            return np.eye(reflectance)
        position = np.linspace(0.0, 1.0, reflectance) if reflectance > 1 else np.zeros(1)
        k = self.spectral_factors
        centre = np.linspace(0.0, 1.0, k) if k > 1 else np.full(1, 0.5)
        bumps = np.exp(-0.5 * ((position[:, None] - centre[None, :]) / _LOADING_WIDTH) ** 2)
        return bumps / bumps.sum(axis=1, keepdims=True)


def _smooth_field(rng: np.random.Generator, size: int, cfg: SynthConfig) -> np.ndarray:
    """Sum of random plane waves, angular wavenumber in ``[0.5, 1.5] / L``, rescaled to [0, 1]."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    field = np.zeros((size, size))
    for _ in range(cfg.harmonics):
        theta = rng.uniform(0.0, 2.0 * math.pi)
        wavenumber = rng.uniform(0.5, 1.5) / cfg.correlation_length
        phase = rng.uniform(0.0, 2.0 * math.pi)
        amplitude = rng.uniform(0.5, 1.0)
        proj = xx * math.cos(theta) + yy * math.sin(theta)
        field += amplitude * np.cos(wavenumber * proj + phase)
    lo, hi = field.min(), field.max()
    if hi - lo <= 0:
        return np.full((size, size), 0.5)
    return (field - lo) / (hi - lo)


def _clean_planes(
    cfg: SynthConfig, index: int, size: int
) -> tuple[np.ndarray, np.ndarray, TileMeta]:
    """Cloud-free planes (float64), the cloud mask and tile metadata."""
    rng = np.random.default_rng([derive_seed(cfg.seed, "synth"), index])
    bands = cfg.bands
    loadings = cfg.spectral_loadings()
    factors = np.stack([_smooth_field(rng, size, cfg) for _ in range(loadings.shape[1])])
    mixed = np.einsum("bk,khw->bhw", loadings, factors)

    planes = np.empty((bands.count, size, size))
    lo, hi = REFLECTANCE_RANGE
    reflectance = loadings.shape[0]
    planes[:reflectance] = lo + (hi - lo) * (_MARGIN + (1.0 - 2.0 * _MARGIN) * mixed)
    if bands.has_sst:
        lo, hi = SST_RANGE_K
        u = _MARGIN + (1.0 - 2.0 * _MARGIN) * _smooth_field(rng, size, cfg)
        planes[bands.index(SST_BAND)] = lo + (hi - lo) * u

    clouds = np.zeros((bands.count, size, size), dtype=bool)
    if cfg.cloud_fraction > 0:
        cover = _smooth_field(rng, size, cfg)
        base = cover < np.quantile(cover, cfg.cloud_fraction)
        clouds[:] = base
        if bands.has_sst:
            # SST comes from another sensor: same cloud field, shifted footprint.
            shift = tuple(int(s) for s in rng.integers(-3, 4, size=2))
            clouds[bands.index(SST_BAND)] = np.roll(base, shift, axis=(0, 1))

    n_regions = len(cfg.regions)
    meta = TileMeta(
        region=cfg.regions[index % n_regions],
        year=FIRST_YEAR + (index // (12 * n_regions)) % YEARS,
        month=(index // n_regions) % 12 + 1,
        lat=float(rng.uniform(-60.0, 60.0)),
        lon=float(rng.uniform(-180.0, 180.0)),
    )
    return planes, clouds, meta


def gen_tile(cfg: SynthConfig, index: int) -> Tile:
    """Pure function of ``(cfg, index)``."""
    planes, clouds, meta = _clean_planes(cfg, index, cfg.size)
    planes = np.where(clouds, np.nan, planes).astype(np.float32)
    return Tile(cfg.bands, planes, ~clouds, meta).validate()


def mapping_label(cfg: SynthConfig, block_mean: np.ndarray) -> float:
    """``log10(exp(w . x + b))`` for a mean band vector ``x``."""
    z = float(np.dot(cfg.mapping_weights(), block_mean)) + cfg.bias
    return z / math.log(10.0)


def gen_labeled_patch(cfg: SynthConfig, index: int) -> LabeledPatch:
    planes, clouds, meta = _clean_planes(cfg, index, PATCH_SIZE)
    rows, cols = label_block_slice()
    clouds[:, rows, cols] = False
    block_mean = planes[:, rows, cols].reshape(planes.shape[0], -1).mean(axis=1)

    label = np.full((PATCH_SIZE, PATCH_SIZE), np.nan, dtype=np.float32)
    label[rows, cols] = mapping_label(cfg, block_mean)
    tile = Tile(
        cfg.bands, np.where(clouds, np.nan, planes).astype(np.float32), ~clouds, meta
    ).validate()
    return LabeledPatch(tile, label, cfg.kind, source_id=f"synth-{cfg.seed}-{index:05d}")


def gen_labeled_dataset(cfg: SynthConfig, n: int) -> list[LabeledPatch]:
    if n < 1:
        raise ConfigurationError(f"dataset size must be >= 1, got {n}")
    patches = [gen_labeled_patch(cfg, i) for i in range(n)]
    logger.info(
        "Generated %d labeled %dx%d patches (%d bands, %dx%d label block at %d)",
        n, PATCH_SIZE, PATCH_SIZE, cfg.band_count,
        LABEL_BLOCK_SIZE, LABEL_BLOCK_SIZE, LABEL_BLOCK_START,
    )
    return patches


def gen_tiles(cfg: SynthConfig, n: int, *, start: int = 0) -> list[Tile]:
    return [gen_tile(cfg, i) for i in range(start, start + n)]
