"""End-to-end gradient checks of the two training losses in float64."""

from __future__ import annotations

import logging
from typing import NamedTuple

import torch

from ocean_fm.config import ModelProfile
from ocean_fm.constants import LABEL_BLOCK_SIZE, derive_seed
from ocean_fm.models.encoder import random_mask, seeded_init
from ocean_fm.models.mae import MaskedAutoencoder, masked_rmse_loss
from ocean_fm.models.regression import RegressionModel, sparse_masked_loss
from ocean_fm.nn.core import ParamSet
from ocean_fm.nn.gradcheck import finite_diff_check

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-3
GRADCHECK_EPS = 1e-5


class GradientReport(NamedTuple):
    loss: str
    max_rel_error: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < GRADCHECK_TOLERANCE


def _inputs(profile: ModelProfile, seed: int) -> torch.Tensor:
    gen = torch.Generator().manual_seed(derive_seed(seed, "synth"))
    size = profile.input_size
    return torch.randn(1, profile.in_channels, size, size, generator=gen, dtype=torch.float64)


def check_mae_gradients(
    profile: ModelProfile, seed: int, *, eps: float = GRADCHECK_EPS, num_samples: int = 50
) -> GradientReport:
    with seeded_init(derive_seed(seed, "init")):
        model = MaskedAutoencoder(profile).double()
    images = _inputs(profile, seed)
    validity = torch.ones_like(images, dtype=torch.bool)
    plan = random_mask(profile.num_tokens, 0.75, derive_seed(seed, "mask"))

    def loss_fn() -> torch.Tensor:
        recon = model(images, [plan])
        return masked_rmse_loss(recon, images, [plan], validity, patch=profile.patch_size)

    worst = finite_diff_check(
        loss_fn, ParamSet.from_module(model), eps, num_samples=num_samples, seed=seed
    )
    logger.info("MAE gradient check: max relative error %.3e", worst)
    return GradientReport("mae", worst)


def check_regression_gradients(
    profile: ModelProfile, seed: int, *, eps: float = GRADCHECK_EPS, num_samples: int = 50
) -> GradientReport:
    with seeded_init(derive_seed(seed, "init")):
        model = RegressionModel(profile).double()
    images = _inputs(profile, seed)
    size = profile.input_size
    start = (size - LABEL_BLOCK_SIZE) // 2
    label = torch.full((1, size, size), float("nan"), dtype=torch.float64)
    label[:, start:start + LABEL_BLOCK_SIZE, start:start + LABEL_BLOCK_SIZE] = 0.5

    def loss_fn() -> torch.Tensor:
        return sparse_masked_loss(model(images), label)

    worst = finite_diff_check(
        loss_fn, ParamSet.from_module(model), eps, num_samples=num_samples, seed=seed
    )
    logger.info("Regression gradient check: max relative error %.3e", worst)
    return GradientReport("finetune", worst)
