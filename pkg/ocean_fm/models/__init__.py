"""Network definitions shared by pre-training and fine-tuning."""

from ocean_fm.models.encoder import (
    Encoder,
    MaskPlan,
    patchify,
    pos_embed_2d,
    random_mask,
    seeded_init,
    tap_indices,
    unpatchify,
)
from ocean_fm.models.mae import MaskedAutoencoder, mae_forward, masked_rmse_loss
from ocean_fm.models.regression import (
    RegressionHead,
    RegressionModel,
    predict,
    sparse_masked_loss,
)

__all__ = [
    "Encoder",
    "MaskPlan",
    "MaskedAutoencoder",
    "RegressionHead",
    "RegressionModel",
    "mae_forward",
    "masked_rmse_loss",
    "patchify",
    "pos_embed_2d",
    "predict",
    "random_mask",
    "seeded_init",
    "sparse_masked_loss",
    "tap_indices",
    "unpatchify",
]
