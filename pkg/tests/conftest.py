"""Shared test fixtures: small profiles, synthetic tiles and labeled patches."""

from __future__ import annotations

import numpy as np
import pytest

from ocean_fm.config import ModelProfile, get_profile
from ocean_fm.data.synth import SynthConfig, gen_labeled_dataset, gen_tiles
from ocean_fm.data.tiles import BandSet, LabeledPatch, Tile, TileMeta

FOUR_BANDS = BandSet(("B1", "B2", "B3", "B4"))


def make_tile(
    planes: np.ndarray,
    bands: BandSet | None = None,
    meta: TileMeta | None = None,
) -> Tile:
    """Tile from a C x H x W array; NaN marks invalid pixels."""
    planes = np.asarray(planes, dtype=np.float32)
    if bands is None:
        bands = BandSet.default(planes.shape[0])
    return Tile.from_planes(bands, planes, meta)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture()
def tiny_profile() -> ModelProfile:
    return get_profile("tiny")


@pytest.fixture()
def small_profile() -> ModelProfile:
    """42x42 input, 4 channels, two blocks."""
    return get_profile("small", in_channels=4)


@pytest.fixture()
def synth_cfg() -> SynthConfig:
    return SynthConfig(seed=7, band_count=4, regions=("NATL", "SATL"))


@pytest.fixture()
def synth_tiles(synth_cfg: SynthConfig) -> list[Tile]:
    return gen_tiles(synth_cfg, 6)


@pytest.fixture()
def labeled_patches(synth_cfg: SynthConfig) -> list[LabeledPatch]:
    return gen_labeled_dataset(synth_cfg, 10)
