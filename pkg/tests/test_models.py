"""Tests for patch geometry, masking, the MAE and the regression model."""

from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from ocean_fm.config import get_profile
from ocean_fm.errors import ConfigurationError, DimensionError, EmptyLossError, GeometryError
from ocean_fm.models.encoder import (
    Encoder,
    MaskPlan,
    patch_rows,
    patchify,
    pos_embed_2d,
    random_mask,
    seeded_init,
    tap_indices,
    unpatchify,
    visible_index,
)
from ocean_fm.models.mae import MaskedAutoencoder, masked_rmse_loss, masked_squared_error
from ocean_fm.models.regression import RegressionModel, predict, sparse_masked_loss

# ── Patch geometry ─────────────────────────────────────────────────


class TestPatchify:
    @pytest.mark.parametrize("channels", [1, 16, 17])
    def test_round_trip_is_exact(self, channels):
        x = torch.randn(channels, 42, 42, generator=torch.Generator().manual_seed(0))
        tokens = patchify(x, 2)
        assert tokens.shape == (441, channels * 4)
        assert torch.equal(unpatchify(tokens, 2, channels, (21, 21)), x)

    def test_token_layout(self):
        x = torch.arange(2 * 4 * 4, dtype=torch.float32).reshape(2, 4, 4)
        tokens = patchify(x, 2)
        # second patch of the first row: channel 0 pixels, then channel 1
        assert tokens[1].tolist() == [2.0, 3.0, 6.0, 7.0, 18.0, 19.0, 22.0, 23.0]

    def test_indivisible_extent(self):
        with pytest.raises(GeometryError):
            patchify(torch.zeros(1, 5, 4), 2)

    def test_unpatchify_shape_check(self):
        with pytest.raises(GeometryError):
            unpatchify(torch.zeros(10, 4), 2, 1, (3, 3))

    def test_patch_rows(self):
        assert patch_rows(2, [0, 2]) == [0, 1, 2, 3, 8, 9, 10, 11]


class TestPositionalEmbedding:
    def test_origin(self):
        assert pos_embed_2d(1, 1, 4).tolist() == [[0.0, 1.0, 0.0, 1.0]]

    def test_row_and_column_halves(self):
        emb = pos_embed_2d(2, 3, 8)
        assert emb.shape == (6, 8)
        token = emb[4].double()  # row 1, column 1
        expected = [math.sin(1), math.cos(1), math.sin(0.01), math.cos(0.01)] * 2
        assert token.tolist() == pytest.approx(expected, abs=1e-6)
        assert torch.equal(emb[3, :4], emb[4, :4])

    def test_dim_must_be_multiple_of_four(self):
        with pytest.raises(ConfigurationError):
            pos_embed_2d(2, 2, 6)

    def test_every_grid_position_is_distinct(self):
        emb = pos_embed_2d(21, 21, 64)
        assert emb.shape == (441, 64)
        assert torch.unique(emb, dim=0).shape[0] == 441


# ── Masking ────────────────────────────────────────────────────────


class TestRandomMask:
    def test_count_and_uniqueness(self):
        plan = random_mask(441, 0.75, seed=3)
        assert len(plan.masked) == 330
        assert len(set(plan.masked)) == 330
        assert list(plan.masked) == sorted(plan.masked)
        assert len(plan.visible) == 111

    def test_seeded(self):
        assert random_mask(100, 0.5, 1) == random_mask(100, 0.5, 1)
        assert random_mask(100, 0.5, 1) != random_mask(100, 0.5, 2)

    def test_seeds_give_distinct_plans(self):
        plans = {random_mask(441, 0.75, seed).masked for seed in range(100)}
        assert len(plans) == 100

    @pytest.mark.parametrize("ratio", [0.0, 1.0, -0.1])
    def test_ratio_bounds(self, ratio):
        with pytest.raises(ConfigurationError):
            random_mask(16, ratio, 0)

    def test_pixel_mask(self):
        plan = MaskPlan(4, (1, 2), 0.5)
        pixels = plan.pixel_mask((2, 2), 2)
        assert pixels.int().tolist() == [
            [0, 0, 1, 1],
            [0, 0, 1, 1],
            [1, 1, 0, 0],
            [1, 1, 0, 0],
        ]

    def test_batch_plans_must_agree(self):
        with pytest.raises(GeometryError):
            visible_index([MaskPlan(4, (1,), 0.25), MaskPlan(4, (1, 2), 0.5)], 4)


# ── Encoder and MAE ────────────────────────────────────────────────


class TestEncoder:
    def test_tap_indices(self):
        assert tap_indices(12) == [2, 5, 8, 11]
        assert tap_indices(1) == [0, 0, 0, 0]

    def test_visible_subset(self, small_profile):
        enc = Encoder(small_profile)
        patches = torch.randn(2, small_profile.num_tokens, small_profile.patch_dim)
        visible = torch.tensor([[0, 5, 9], [1, 2, 3]])
        out, taps = enc(patches, visible, taps=[0, 1])
        assert out.shape == (2, 3, small_profile.embed_dim)
        assert len(taps) == 2

    def test_seeded_init_is_reproducible(self, small_profile):
        with seeded_init(11):
            a = Encoder(small_profile)
        with seeded_init(11):
            b = Encoder(small_profile)
        assert torch.equal(a.patch_embed.weight, b.patch_embed.weight)


class TestMaskedAutoencoder:
    def _model(self, profile, seed=0):
        with seeded_init(seed):
            return MaskedAutoencoder(profile)

    def test_output_shape(self, small_profile):
        model = self._model(small_profile)
        images = torch.randn(2, 4, 42, 42)
        plans = [random_mask(441, 0.75, s) for s in (1, 2)]
        assert model(images, plans).shape == (2, 4, 42, 42)

    def test_plan_count_must_match_batch(self, small_profile):
        model = self._model(small_profile)
        with pytest.raises(DimensionError):
            model(torch.randn(2, 4, 42, 42), [random_mask(441, 0.75, 1)])

    def test_masked_inputs_do_not_reach_the_encoder(self, tiny_profile):
        model = self._model(tiny_profile).double()
        images = torch.randn(1, 2, 8, 8, dtype=torch.float64)
        plan = random_mask(tiny_profile.num_tokens, 0.75, 4)
        pixels = plan.pixel_mask((4, 4), 2)
        perturbed = images.clone()
        perturbed[0, :, pixels] += 5.0
        assert torch.equal(model(images, [plan]), model(perturbed, [plan]))

    def test_visible_inputs_reach_masked_outputs(self, tiny_profile):
        model = self._model(tiny_profile).double()
        images = torch.randn(1, 2, 8, 8, dtype=torch.float64, requires_grad=True)
        plan = random_mask(tiny_profile.num_tokens, 0.75, 4)
        validity = torch.ones_like(images, dtype=torch.bool)
        loss = masked_rmse_loss(model(images, [plan]), images.detach(), [plan], validity)
        loss.backward()
        visible_pixels = ~plan.pixel_mask((4, 4), 2)
        assert images.grad[0, :, visible_pixels].abs().sum() > 0
        assert images.grad[0, :, ~visible_pixels].abs().sum() == 0


class TestMaskedLoss:
    def test_matches_brute_force(self, rng):
        recon = torch.from_numpy(rng.standard_normal((2, 4, 4)))
        target = torch.from_numpy(rng.standard_normal((2, 4, 4)))
        plan = MaskPlan(4, (0, 3), 0.5)
        validity = torch.ones(2, 4, 4, dtype=torch.bool)
        # half of each masked patch
        validity[:, 0, :] = False
        validity[:, 2, :] = False
        pixels = plan.pixel_mask((2, 2), 2)
        keep = pixels[None] & validity
        expected = math.sqrt(float(((recon - target)[keep] ** 2).mean()))
        loss = masked_rmse_loss(recon, target, plan, validity)
        assert float(loss) == pytest.approx(expected, rel=1e-12)
        _, count = masked_squared_error(recon, target, plan, validity)
        assert count == 2 * 4

    def test_visible_patches_do_not_count(self, rng):
        recon = torch.from_numpy(rng.standard_normal((3, 8, 8)))
        target = torch.from_numpy(rng.standard_normal((3, 8, 8)))
        plan = random_mask(16, 0.5, seed=9)
        validity = torch.ones(3, 8, 8, dtype=torch.bool)
        visible = ~plan.pixel_mask((4, 4), 2)
        noise = torch.from_numpy(rng.standard_normal((3, 8, 8)))
        moved_recon = torch.where(visible, recon + noise, recon)
        moved_target = torch.where(visible, target - noise, target)
        assert torch.equal(
            masked_rmse_loss(moved_recon, moved_target, plan, validity),
            masked_rmse_loss(recon, target, plan, validity),
        )

    def test_no_valid_masked_pixel(self):
        plan = MaskPlan(4, (0,), 0.25)
        validity = torch.ones(1, 4, 4, dtype=torch.bool)
        validity[:, :2, :2] = False
        with pytest.raises(EmptyLossError):
            masked_rmse_loss(torch.zeros(1, 4, 4), torch.zeros(1, 4, 4), plan, validity)

    def test_shape_mismatch(self):
        plan = MaskPlan(4, (0,), 0.25)
        with pytest.raises(DimensionError):
            masked_rmse_loss(
                torch.zeros(1, 4, 4), torch.zeros(2, 4, 4), plan,
                torch.ones(1, 4, 4, dtype=torch.bool),
            )


# ── Regression ─────────────────────────────────────────────────────


class TestRegressionModel:
    def test_output_is_a_plane(self, small_profile):
        with seeded_init(0):
            model = RegressionModel(small_profile)
        assert model(torch.randn(3, 4, 42, 42)).shape == (3, 42, 42)

    def test_predict_all_nan(self, small_profile):
        model = RegressionModel(small_profile)
        out = predict(model, np.full((4, 42, 42), np.nan, dtype=np.float32))
        assert out.shape == (42, 42) and np.isnan(out).all()

    def test_predict_channel_check(self, small_profile):
        with pytest.raises(DimensionError):
            predict(RegressionModel(small_profile), np.zeros((3, 42, 42), dtype=np.float32))

    def test_predict_restores_training_mode(self, small_profile):
        model = RegressionModel(small_profile).train()
        predict(model, np.zeros((4, 42, 42), dtype=np.float32))
        assert model.training


class TestSparseLoss:
    def test_only_labeled_pixels_count(self):
        pred = torch.zeros(1, 5, 5, dtype=torch.float64)
        pred[0, 0, 0] = 100.0
        label = torch.full((1, 5, 5), float("nan"), dtype=torch.float64)
        label[0, 1:4, 1:4] = 2.0
        assert float(sparse_masked_loss(pred, label)) == pytest.approx(2.0)

    def test_unlabeled(self):
        label = torch.full((1, 3, 3), float("nan"))
        with pytest.raises(EmptyLossError):
            sparse_masked_loss(torch.zeros(1, 3, 3), label)

    def test_gradient_ignores_unlabeled(self):
        pred = torch.zeros(1, 5, 5, requires_grad=True)
        label = torch.full((1, 5, 5), float("nan"))
        label[0, 2, 2] = 1.0
        sparse_masked_loss(pred, label).backward()
        assert pred.grad.abs().sum() == pytest.approx(1.0)
        assert pred.grad[0, 2, 2] == pytest.approx(-1.0)
