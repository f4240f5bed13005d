"""Tests for the masked-autoencoder pre-training loop and reconstruction export."""

from __future__ import annotations

import numpy as np
import pytest

from ocean_fm.data.checkpoint import ModelCheckpoint, decode_checkpoint, encode_checkpoint
from ocean_fm.data.normalize import compute_norm_stats
from ocean_fm.data.synth import SynthConfig, gen_tiles
from ocean_fm.errors import ConfigurationError, GeometryError, ValidationError
from ocean_fm.training.pretrain import (
    ALL_REGIONS,
    augmented_view,
    build_mae,
    center_view,
    evaluate_reconstruction,
    load_mae,
    pretrain,
    profile_for,
    reconstruct,
    split_train_val,
)
from ocean_fm.training.records import format_loss_log
from tests.conftest import make_tile


class TestSplitTrainVal:
    def test_sizes_and_order(self, synth_tiles):
        train, val = split_train_val(synth_tiles, 0.34, seed=1)
        assert len(val) == 2 and len(train) == 4
        positions = [synth_tiles.index(t) for t in train]
        assert positions == sorted(positions)

    def test_zero_fraction(self, synth_tiles):
        train, val = split_train_val(synth_tiles, 0.0, seed=1)
        assert val == [] and len(train) == len(synth_tiles)

    def test_fraction_bounds(self, synth_tiles):
        with pytest.raises(ConfigurationError):
            split_train_val(synth_tiles, 1.0, seed=1)


class TestViews:
    def test_center_view(self):
        planes = np.arange(45 * 45, dtype=np.float32).reshape(1, 45, 45)
        view = center_view(planes, 42)
        assert view.shape == (1, 42, 42)
        assert view[0, 0, 0] == planes[0, 1, 1]

    def test_augmented_view_is_seeded(self, rng):
        planes = rng.random((2, 45, 45)).astype(np.float32)
        a = augmented_view(planes, 42, np.random.default_rng(5))
        b = augmented_view(planes, 42, np.random.default_rng(5))
        assert a.shape == (2, 42, 42)
        assert np.array_equal(a, b)


class TestPretrain:
    def test_zero_epochs_returns_initialization(self, synth_tiles, small_profile):
        result = pretrain(synth_tiles, small_profile, epochs=0, seed=3)
        init = ModelCheckpoint.from_module(
            build_mae(small_profile, 3), small_profile, compute_norm_stats(synth_tiles)
        )
        assert result.checkpoint.equals(init)
        assert result.log == []

    def test_repeat_runs_are_bit_identical(self, synth_tiles, small_profile):
        a = pretrain(synth_tiles, small_profile, epochs=1, seed=3, batch_size=4)
        b = pretrain(synth_tiles, small_profile, epochs=1, seed=3, batch_size=4)
        assert encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint)
        assert a.losses() == b.losses()

    def test_training_moves_the_weights(self, synth_tiles, small_profile):
        result = pretrain(synth_tiles, small_profile, epochs=1, seed=3, batch_size=4)
        init = build_mae(small_profile, 3)
        trained = result.checkpoint.params["encoder.patch_embed.weight"]
        assert not np.array_equal(
            trained.numpy(), init.encoder.patch_embed.weight.detach().numpy()
        )

    def test_validation_losses_per_region(self, synth_tiles, small_profile):
        train, val = synth_tiles[:4], synth_tiles[4:]
        result = pretrain(train, small_profile, epochs=1, seed=3, val_tiles=val)
        regions = {r.region for r in result.log if r.split == "val"}
        assert regions == {ALL_REGIONS} | {t.meta.region for t in val}
        assert len(result.losses("train")) == 1
        assert format_loss_log(result.log).startswith("epoch,split,region,loss\n0,train,ALL,")

    def test_band_count_mismatch(self, synth_tiles, tiny_profile):
        with pytest.raises(ConfigurationError):
            pretrain(synth_tiles, tiny_profile.with_channels(3), epochs=0, seed=0)

    def test_tile_smaller_than_input(self, small_profile):
        tile = make_tile(np.zeros((4, 40, 40)))
        with pytest.raises(GeometryError):
            pretrain([tile], small_profile, epochs=0, seed=0)

    def test_cloudy_tiles_rejected(self, small_profile):
        tiles = gen_tiles(SynthConfig(seed=1, band_count=4, cloud_fraction=0.5), 2)
        with pytest.raises(ValidationError):
            pretrain(tiles, small_profile, epochs=0, seed=0)

    def test_empty_dataset(self, small_profile):
        with pytest.raises(ValidationError):
            pretrain([], small_profile, epochs=0, seed=0)

    @pytest.mark.slow
    def test_overfits_a_few_tiles(self):
        tiles = gen_tiles(SynthConfig(seed=2), 8)
        profile = profile_for("desk", tiles)
        result = pretrain(
            tiles, profile, epochs=300, seed=0, batch_size=2, lr_peak=1e-3, augment=False
        )
        losses = result.losses()
        assert len(losses) == 300
        assert losses[-1] < 0.01
        assert np.mean(losses[-10:]) < np.mean(losses[50:60])


class TestEvaluateReconstruction:
    def test_fixed_masks_are_repeatable(self, synth_tiles, small_profile):
        model = build_mae(small_profile, 0)
        norm = compute_norm_stats(synth_tiles)
        a = evaluate_reconstruction(model, synth_tiles, norm, mask_ratio=0.75, seed=4)
        b = evaluate_reconstruction(model, synth_tiles, norm, mask_ratio=0.75, seed=4)
        assert a == b
        assert set(a) == {ALL_REGIONS, "NATL", "SATL"}
        assert all(v > 0 for v in a.values())


class TestReconstruct:
    def test_export_in_physical_units(self, synth_tiles, small_profile):
        ckpt = pretrain(synth_tiles, small_profile, epochs=0, seed=3).checkpoint
        tile = synth_tiles[0]
        out = reconstruct(ckpt, tile, 0.75, seed=2)
        assert np.array_equal(out.original, center_view(tile.planes, 42))
        assert out.mask.shape == (42, 42)
        assert int(out.mask.sum()) == 330 * 4
        assert out.reconstruction.shape == (4, 42, 42)
        assert np.isfinite(out.reconstruction).all()

    def test_checkpoint_round_trip_loads(self, synth_tiles, small_profile):
        ckpt = pretrain(synth_tiles, small_profile, epochs=0, seed=3).checkpoint
        model = load_mae(decode_checkpoint(encode_checkpoint(ckpt)))
        assert model.profile == small_profile

    def test_band_mismatch(self, synth_tiles, small_profile):
        ckpt = pretrain(synth_tiles, small_profile, epochs=0, seed=3).checkpoint
        tile = make_tile(np.zeros((3, 45, 45)))
        with pytest.raises(ConfigurationError):
            reconstruct(ckpt, tile, 0.75, seed=0)

    def test_profile_for(self, synth_tiles):
        assert profile_for("small", synth_tiles).in_channels == 4
        with pytest.raises(ValidationError):
            profile_for("small", [])
