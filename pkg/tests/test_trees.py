"""Tests for the per-pixel extremely randomized trees baseline."""

from __future__ import annotations

import numpy as np
import pytest

from ocean_fm.baselines.trees import (
    PixelRows,
    Tree,
    TreeEnsemble,
    TreeRegressor,
    decode_ensemble,
    encode_ensemble,
    extract_pixel_features,
    fit_trees,
    predict_trees,
    read_ensemble,
    write_ensemble,
)
from ocean_fm.data.synth import SynthConfig, gen_labeled_dataset
from ocean_fm.data.tiles import BandSet, LabeledPatch
from ocean_fm.errors import DimensionError, FormatError, InsufficientDataError, ValidationError


def _line_rows(n: int = 200) -> PixelRows:
    x = np.linspace(0.0, 1.0, n)[:, None]
    return PixelRows(x, x[:, 0].copy(), np.array([0.5]))


def _stump(value_left: float = 1.0, value_right: float = 3.0) -> TreeEnsemble:
    tree = Tree(
        feature=np.array([0, -2, -2], dtype=np.int32),
        threshold=np.array([0.5, -2.0, -2.0]),
        left=np.array([1, -1, -1], dtype=np.int32),
        right=np.array([2, -1, -1], dtype=np.int32),
        value=np.array([0.0, value_left, value_right]),
    )
    return TreeEnsemble((tree,), 1, np.array([0.25])).validate()


# ── Features ───────────────────────────────────────────────────────


class TestExtractFeatures:
    def test_one_row_per_labeled_pixel(self, labeled_patches):
        rows = extract_pixel_features(labeled_patches)
        assert rows.features.shape == (9 * len(labeled_patches), 4)
        assert np.all(rows.targets[:9] == labeled_patches[0].label_value)

    def test_row_bound_for_full_dataset(self):
        patches = gen_labeled_dataset(SynthConfig(band_count=2, harmonics=2), 188)
        assert len(extract_pixel_features(patches)) <= 188 * 9

    def test_imputes_missing_bands(self, labeled_patches):
        patch = labeled_patches[0]
        planes = patch.tile.planes.copy()
        planes[1, 38, 38] = np.nan
        tile = type(patch.tile).from_planes(patch.tile.bands, planes, patch.tile.meta)
        damaged = LabeledPatch(tile, patch.label_plane, patch.kind, "damaged")
        rows = extract_pixel_features([damaged])
        assert not np.isnan(rows.features).any()
        assert rows.features[0, 1] == pytest.approx(rows.band_means[1])

    def test_fully_invalid_block_is_skipped(self, labeled_patches):
        patch = labeled_patches[0]
        planes = patch.tile.planes.copy()
        planes[:, 38:41, 38:41] = np.nan
        tile = type(patch.tile).from_planes(patch.tile.bands, planes, patch.tile.meta)
        cloudy = LabeledPatch(tile, patch.label_plane, patch.kind, "cloudy")
        rows = extract_pixel_features([cloudy, labeled_patches[1]])
        assert rows.skipped == ("cloudy",)
        assert len(rows) == 9


# ── Ensemble ───────────────────────────────────────────────────────


class TestFitTrees:
    def test_fits_a_line(self):
        rows = _line_rows()
        ens = fit_trees(rows, 100, seed=0)
        err = ens.predict(rows.features) - rows.targets
        assert np.sqrt(np.mean(err**2)) < 0.05 * rows.targets.std()

    def test_seeded(self):
        rows = _line_rows(50)
        a = encode_ensemble(fit_trees(rows, 5, seed=3))
        b = encode_ensemble(fit_trees(rows, 5, seed=3))
        assert a == b

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            fit_trees(_line_rows(1), 5)


class TestPredict:
    def test_stump(self):
        ens = _stump()
        assert ens.predict(np.array([[0.2], [0.9]])).tolist() == [1.0, 3.0]

    def test_nan_uses_training_mean(self):
        assert predict_trees(_stump(), [np.nan]) == 1.0

    def test_feature_count(self):
        with pytest.raises(DimensionError):
            _stump().predict(np.zeros((2, 3)))

    def test_single_vector_only(self):
        with pytest.raises(DimensionError):
            predict_trees(_stump(), np.zeros((2, 1)))

    def test_bad_child_index(self):
        tree = Tree(
            feature=np.array([0, -2, -2], dtype=np.int32),
            threshold=np.zeros(3),
            left=np.array([5, -1, -1], dtype=np.int32),
            right=np.array([2, -1, -1], dtype=np.int32),
            value=np.zeros(3),
        )
        with pytest.raises(ValidationError):
            TreeEnsemble((tree,), 1, np.zeros(1)).validate()


# ── Serialization ──────────────────────────────────────────────────


class TestEnsembleFiles:
    def test_round_trip_predicts_identically(self, tmp_path):
        rows = _line_rows(60)
        ens = fit_trees(rows, 7, seed=1)
        path = tmp_path / "trees.etr"
        write_ensemble(ens, path)
        back = read_ensemble(path)
        assert np.array_equal(back.predict(rows.features), ens.predict(rows.features))
        assert encode_ensemble(back) == encode_ensemble(ens)

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            decode_ensemble(b"CKP1" + encode_ensemble(_stump())[4:])

    def test_truncated(self):
        with pytest.raises(FormatError):
            decode_ensemble(encode_ensemble(_stump())[:-3])

    def test_trailing(self):
        data = encode_ensemble(_stump())
        with pytest.raises(FormatError) as exc:
            decode_ensemble(data + b"\x00")
        assert exc.value.offset == len(data)


# ── Patch regressor ────────────────────────────────────────────────


class TestTreeRegressor:
    def test_predicts_labeled_pixels(self, labeled_patches):
        reg = TreeRegressor.fit(labeled_patches, BandSet.default(4), n_trees=10, seed=0)
        assert reg.predict_labels(labeled_patches[0]).shape == (9,)

    def test_window_keeps_invalid_pixels_nan(self, labeled_patches):
        reg = TreeRegressor.fit(labeled_patches, BandSet.default(4), n_trees=10, seed=0)
        planes = labeled_patches[0].tile.planes[:, :42, :42].copy()
        planes[:, 0, 0] = np.nan
        planes[2, 1, 1] = np.nan
        out = reg.predict_window(planes)
        assert out.shape == (42, 42) and out.dtype == np.float32
        assert np.isnan(out[0, 0])
        assert np.isfinite(out[1, 1])

    def test_band_subset(self, labeled_patches):
        bands = BandSet(("B1", "B3"))
        reg = TreeRegressor.fit(labeled_patches, bands, n_trees=5, seed=0)
        assert reg.ensemble.n_features == 2
        assert reg.predict_labels(labeled_patches[0]).shape == (9,)
