"""Training loops: masked-autoencoder pre-training and regression fine-tuning."""

from ocean_fm.training.checks import (
    GradientReport,
    check_mae_gradients,
    check_regression_gradients,
)
from ocean_fm.training.finetune import (
    FinetuneConfig,
    FinetunedRegressor,
    augment,
    build_model,
    finetune,
    subset_fraction,
)
from ocean_fm.training.pretrain import (
    PretrainResult,
    Reconstruction,
    pretrain,
    reconstruct,
    split_train_val,
)
from ocean_fm.training.records import ALL_REGIONS, LossRecord, write_loss_log

__all__ = [
    "ALL_REGIONS",
    "FinetuneConfig",
    "FinetunedRegressor",
    "GradientReport",
    "LossRecord",
    "PretrainResult",
    "Reconstruction",
    "augment",
    "build_model",
    "check_mae_gradients",
    "check_regression_gradients",
    "finetune",
    "pretrain",
    "reconstruct",
    "split_train_val",
    "subset_fraction",
    "write_loss_log",
]
