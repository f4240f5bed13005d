"""Tests for sparse-label fine-tuning: augmentation, model construction and training."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from ocean_fm.config import get_profile
from ocean_fm.data.checkpoint import ModelCheckpoint
from ocean_fm.data.normalize import NormStats
from ocean_fm.data.synth import SynthConfig, gen_labeled_dataset
from ocean_fm.data.tiles import BandSet
from ocean_fm.errors import ConfigurationError, ValidationError
from ocean_fm.models.mae import MaskedAutoencoder
from ocean_fm.training.finetune import (
    FinetuneConfig,
    FinetunedRegressor,
    augment,
    build_model,
    fallback_crop,
    fallback_offsets,
    finetune,
    flip_horizontal,
    flip_vertical,
    resolve_bands,
    subset_fraction,
)
from ocean_fm.training.pretrain import pretrain


def _mae_checkpoint(profile_name: str, band_count: int) -> ModelCheckpoint:
    profile = get_profile(profile_name, in_channels=band_count)
    norm = NormStats(np.zeros(band_count, np.float32), np.ones(band_count, np.float32))
    return ModelCheckpoint.from_module(MaskedAutoencoder(profile), profile, norm)


class TestFinetuneConfig:
    def test_fraction_must_be_on_grid(self):
        with pytest.raises(ConfigurationError):
            FinetuneConfig(seed=0, fraction=0.3)

    def test_negative_epochs(self):
        with pytest.raises(ConfigurationError):
            FinetuneConfig(seed=0, epochs=-1)


class TestSubsetFraction:
    def test_size_and_order(self):
        items = list(range(40))
        picked = subset_fraction(items, 0.375, seed=2)
        assert len(picked) == 15
        assert picked == sorted(picked)
        assert picked == subset_fraction(items, 0.375, seed=2)

    def test_full_fraction_keeps_everything(self):
        assert subset_fraction(list("abcde"), 1.0, seed=0) == list("abcde")

    def test_bands_without_sst(self):
        assert resolve_bands(BandSet.olci(with_sst=True), use_sst=False) == BandSet.olci()
        assert resolve_bands(BandSet.olci(), use_sst=True) == BandSet.olci()


# ── Augmentation ───────────────────────────────────────────────────


class TestAugment:
    def test_fallback_offset_is_centered(self, labeled_patches):
        assert fallback_offsets(labeled_patches[0]) == (21, 21)
        planes, label = fallback_crop(labeled_patches[0])
        rows, cols = np.nonzero(~np.isnan(label))
        assert set(rows) == set(cols) == {17, 18, 19}
        assert planes.shape == (4, 42, 42)

    @pytest.mark.parametrize("seed", range(12))
    def test_label_survives(self, labeled_patches, seed):
        patch = labeled_patches[seed % len(labeled_patches)]
        planes, label = augment(patch, seed)
        assert planes.shape == (4, 42, 42) and label.shape == (42, 42)
        kept = label[~np.isnan(label)]
        assert kept.size > 0
        assert np.all(kept == patch.label_value)

    def test_label_survives_a_thousand_seeds(self, labeled_patches):
        patch = labeled_patches[0]
        for seed in range(1000):
            _, label = augment(patch, seed)
            kept = label[~np.isnan(label)]
            assert kept.size > 0
            assert np.all(kept == patch.label_value)

    @pytest.mark.parametrize("flip", [flip_horizontal, flip_vertical])
    def test_double_flip_is_identity(self, labeled_patches, flip):
        planes = labeled_patches[0].tile.planes
        assert not np.array_equal(flip(planes), planes)
        assert np.array_equal(flip(flip(planes)), planes)

    def test_deterministic(self, labeled_patches):
        a = augment(labeled_patches[0], 17)
        b = augment(labeled_patches[0], 17)
        assert np.array_equal(a[0], b[0], equal_nan=True)
        assert np.array_equal(a[1], b[1], equal_nan=True)

    def test_unlabeled_patch(self, labeled_patches):
        patch = labeled_patches[0]
        blank = type(patch)(patch.tile, np.full_like(patch.label_plane, np.nan), patch.kind)
        with pytest.raises(ValidationError):
            augment(blank, 0)


# ── Model construction ─────────────────────────────────────────────


class TestBuildModel:
    def test_scratch_is_seeded(self, small_profile):
        bands = BandSet.default(4)
        a = build_model(FinetuneConfig(seed=5), small_profile, bands)
        b = build_model(FinetuneConfig(seed=5), small_profile, bands)
        assert torch.equal(a.head.out.weight, b.head.out.weight)

    def test_encoder_copied_from_checkpoint(self, small_profile):
        ckpt = _mae_checkpoint("small", 4)
        model = build_model(FinetuneConfig(seed=0, pretrained=ckpt), small_profile, ckpt.bands)
        state = ckpt.state_dict()
        fc2 = model.encoder.blocks[1].mlp.fc2.weight
        assert torch.equal(fc2, state["encoder.blocks.1.mlp.fc2.weight"])
        assert torch.equal(model.encoder.patch_embed.weight, state["encoder.patch_embed.weight"])

    def test_sst_rows_dropped(self):
        ckpt = _mae_checkpoint("small", 17)
        profile = get_profile("small", in_channels=16)
        cfg = FinetuneConfig(seed=0, pretrained=ckpt, use_sst=False)
        model = build_model(cfg, profile, BandSet.olci())
        full = ckpt.state_dict()["encoder.patch_embed.weight"]
        assert model.encoder.patch_embed.weight.shape == (64, profile.embed_dim)
        assert torch.equal(model.encoder.patch_embed.weight, full[:64])

    def test_missing_band_in_checkpoint(self):
        ckpt = _mae_checkpoint("small", 16)
        profile = get_profile("small", in_channels=17)
        with pytest.raises(ConfigurationError):
            build_model(
                FinetuneConfig(seed=0, pretrained=ckpt), profile, BandSet.olci(with_sst=True)
            )

    def test_profile_mismatch(self, small_profile):
        ckpt = _mae_checkpoint("tiny", 4)
        with pytest.raises(ConfigurationError):
            build_model(FinetuneConfig(seed=0, pretrained=ckpt), small_profile, ckpt.bands)


# ── Training ───────────────────────────────────────────────────────


class TestFinetune:
    def test_short_run(self, labeled_patches, small_profile):
        reg = finetune(labeled_patches, FinetuneConfig(seed=0, epochs=2), small_profile)
        assert len(reg.log) == 2
        assert all(np.isfinite(r.loss) for r in reg.log)
        preds = reg.predict_labels(labeled_patches[0])
        assert preds.shape == (9,)

    def test_repeat_runs_match(self, labeled_patches, small_profile):
        cfg = FinetuneConfig(seed=1, epochs=1)
        a = finetune(labeled_patches, cfg, small_profile)
        b = finetune(labeled_patches, cfg, small_profile)
        assert a.checkpoint().equals(b.checkpoint())

    def test_checkpoint_round_trip(self, labeled_patches, small_profile):
        reg = finetune(labeled_patches, FinetuneConfig(seed=0, epochs=1), small_profile)
        ckpt = reg.checkpoint()
        assert ckpt.is_regression
        back = FinetunedRegressor.from_checkpoint(ckpt)
        patch = labeled_patches[3]
        assert np.array_equal(back.predict_labels(patch), reg.predict_labels(patch))

    def test_pretrained_init(self, synth_tiles, labeled_patches, small_profile):
        ckpt = pretrain(synth_tiles, small_profile, epochs=0, seed=0).checkpoint
        cfg = FinetuneConfig(seed=0, pretrained=ckpt, epochs=0)
        reg = finetune(labeled_patches, cfg, small_profile)
        assert torch.equal(
            reg.model.encoder.patch_embed.weight,
            ckpt.state_dict()["encoder.patch_embed.weight"],
        )
        assert reg.norm.mean.tobytes() == ckpt.norm.mean.tobytes()

    def test_sst_excluded(self, small_profile):
        patches = gen_labeled_dataset(SynthConfig(seed=1, band_count=17, harmonics=2), 4)
        cfg = FinetuneConfig(seed=0, epochs=1, use_sst=False)
        reg = finetune(patches, cfg, small_profile)
        assert reg.bands == BandSet.olci()
        assert reg.model.profile.in_channels == 16
        assert reg.predict_labels(patches[0]).shape == (9,)

    def test_fraction_leaves_nothing(self, labeled_patches, small_profile):
        cfg = FinetuneConfig(seed=0, epochs=1, fraction=0.125)
        with pytest.raises(ValidationError):
            finetune(labeled_patches[:5], cfg, small_profile)

    def test_empty_dataset(self, small_profile):
        with pytest.raises(ValidationError):
            finetune([], FinetuneConfig(seed=0), small_profile)
