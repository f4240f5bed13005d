"""Sparse-label regression fine-tuning, from a pre-trained encoder or from scratch."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TypeVar

import numpy as np
import torch
from scipy import ndimage

from ocean_fm.config import ModelProfile
from ocean_fm.constants import CROP_SIZE, FRACTION_GRID, SST_BAND, derive_seed
from ocean_fm.data.checkpoint import ModelCheckpoint
from ocean_fm.data.normalize import NormStats, compute_norm_stats
from ocean_fm.data.tiles import BandSet, LabeledPatch, TargetKind
from ocean_fm.errors import (
    ConfigurationError,
    GeometryError,
    TrainingDivergenceError,
    ValidationError,
)
from ocean_fm.models.encoder import patch_rows, seeded_init
from ocean_fm.models.regression import RegressionModel, predict, sparse_masked_loss
from ocean_fm.nn.core import ParamSet
from ocean_fm.nn.optim import OptimizerState, adamw_step
from ocean_fm.training.records import ALL_REGIONS, LossRecord

logger = logging.getLogger(__name__)

T = TypeVar("T")

MAX_ROTATION_DEG = 30.0
MAX_AUGMENT_TRIES = 10
ENCODER_PREFIX = "encoder."


@dataclass(frozen=True, eq=False)
class FinetuneConfig:
    """``pretrained=None`` trains the same architecture from scratch."""
    seed: int
    task: TargetKind = TargetKind.CHLOROPHYLL
    pretrained: ModelCheckpoint | None = None
    use_sst: bool = True
    epochs: int = 50
    lr: float = 1e-3
    fraction: float = 1.0
    batch_size: int = 8
    augment: bool = True

    def __post_init__(self) -> None:
        if self.fraction not in FRACTION_GRID:
            raise ConfigurationError(
                f"training fraction {self.fraction} not in {FRACTION_GRID}"
            )
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise ConfigurationError("epochs, batch size and learning rate must be non-negative")


def resolve_bands(bands: BandSet, use_sst: bool) -> BandSet:
    """Dataset bands, minus SST when the run excludes it."""
    return bands if use_sst or not bands.has_sst else bands.without(SST_BAND)


def subset_fraction(items: Sequence[T], fraction: float, seed: int) -> list[T]:
    """Seeded ``floor(fraction * n)`` subset, in the original order."""
    count = math.floor(fraction * len(items))
    rng = np.random.default_rng(derive_seed(seed, "subset"))
    keep = np.sort(rng.permutation(len(items))[:count])
    return [items[int(i)] for i in keep]


# ── Augmentation ───────────────────────────────────────────────────


def _block_bounds(label: np.ndarray) -> tuple[int, int, int, int]:
    rows, cols = np.nonzero(~np.isnan(label))
    if rows.size == 0:
        raise ValidationError("patch has no labeled pixels")
    return int(rows.min()), int(rows.max()), int(cols.min()), int(cols.max())


def _offset_range(first: int, last: int, extent: int, crop: int) -> tuple[int, int]:
    """Crop offsets keeping rows ``first..last`` inside a ``crop`` window."""
    lo, hi = max(0, last - crop + 1), min(extent - crop, first)
    if lo > hi:
        raise GeometryError(f"no {crop}px crop of a {extent}px patch contains the label block")
    return lo, hi


def _crop(patch: LabeledPatch, top: int, left: int, crop: int) -> tuple[np.ndarray, np.ndarray]:
    window = np.s_[top:top + crop, left:left + crop]
    return (
        np.ascontiguousarray(patch.tile.planes[(slice(None), *window)]),
        np.ascontiguousarray(patch.label_plane[window]),
    )


def fallback_offsets(patch: LabeledPatch, crop: int = CROP_SIZE) -> tuple[int, int]:
    """Centered crop offsets, clamped so the label block stays inside."""
    r0, r1, c0, c1 = _block_bounds(patch.label_plane)
    rlo, rhi = _offset_range(r0, r1, patch.tile.height, crop)
    clo, chi = _offset_range(c0, c1, patch.tile.width, crop)
    return min(max(crop // 2, rlo), rhi), min(max(crop // 2, clo), chi)


def fallback_crop(patch: LabeledPatch, crop: int = CROP_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic view: centered crop, no flips, no rotation."""
    return _crop(patch, *fallback_offsets(patch, crop), crop)


def flip_horizontal(planes: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(planes[..., ::-1])


def flip_vertical(planes: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(planes[..., ::-1, :])


def augment(
    patch: LabeledPatch,
    seed: int,
    crop: int = CROP_SIZE,
    *,
    max_rotation: float = MAX_ROTATION_DEG,
    max_tries: int = MAX_AUGMENT_TRIES,
) -> tuple[np.ndarray, np.ndarray]:
    """Random crop, flips, then rotation; the result always keeps a labeled pixel.

    Bands rotate bilinearly with NaN fill, the label plane by nearest
    neighbour. After ``max_tries`` label-free draws the fallback crop is used.
    """
    r0, r1, c0, c1 = _block_bounds(patch.label_plane)
    rlo, rhi = _offset_range(r0, r1, patch.tile.height, crop)
    clo, chi = _offset_range(c0, c1, patch.tile.width, crop)
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        top = int(rng.integers(rlo, rhi + 1))
        left = int(rng.integers(clo, chi + 1))
        bands, label = _crop(patch, top, left, crop)
        if rng.random() < 0.5:
            bands, label = flip_horizontal(bands), flip_horizontal(label)
        if rng.random() < 0.5:
            bands, label = flip_vertical(bands), flip_vertical(label)
        angle = float(rng.uniform(-max_rotation, max_rotation))
        bands = ndimage.rotate(
            bands, angle, axes=(2, 1), reshape=False, order=1, mode="constant", cval=np.nan
        )
        label = ndimage.rotate(
            label, angle, axes=(1, 0), reshape=False, order=0, mode="constant", cval=np.nan
        )
        if not np.isnan(label).all():
            return bands, label
    logger.warning(
        "Augmentation of %s lost the label block %d times; using the centered crop",
        patch.source_id or "patch", max_tries,
    )
    return fallback_crop(patch, crop)


# ── Model construction ─────────────────────────────────────────────


def build_model(
    cfg: FinetuneConfig, profile: ModelProfile, bands: BandSet
) -> RegressionModel:
    """Regression model whose encoder is copied from ``cfg.pretrained`` when given.

    Checkpoint bands the run does not use (for example SST) have their
    patch-embedding rows dropped. The head is always freshly initialized.
    """
    if profile.in_channels != bands.count:
        raise ConfigurationError(
            f"profile has {profile.in_channels} channels for {bands.count} bands"
        )
    with seeded_init(derive_seed(cfg.seed, "init")):
        model = RegressionModel(profile)
    ckpt = cfg.pretrained
    if ckpt is None:
        return model

    if ckpt.profile_name != profile.name:
        raise ConfigurationError(
            f"checkpoint profile '{ckpt.profile_name}' differs from '{profile.name}'"
        )
    missing = [b for b in bands.names if b not in ckpt.bands.names]
    if missing:
        raise ConfigurationError(
            f"bands {missing} are not in the {ckpt.band_count}-band checkpoint",
            details={"checkpoint_bands": list(ckpt.bands.names)},
        )
    keep = [ckpt.bands.index(b) for b in bands.names]
    state = {
        name.removeprefix(ENCODER_PREFIX): tensor
        for name, tensor in ckpt.state_dict().items()
        if name.startswith(ENCODER_PREFIX)
    }
    state["patch_embed.weight"] = state["patch_embed.weight"][patch_rows(profile.patch_size, keep)]
    try:
        model.encoder.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise ConfigurationError(f"checkpoint encoder does not fit: {exc}") from None
    dropped = [b for b in ckpt.bands.names if b not in bands.names]
    if dropped:
        logger.info("Ignoring pre-trained weights for bands %s", ", ".join(dropped))
    return model


def normalization_for(
    cfg: FinetuneConfig, patches: Sequence[LabeledPatch], bands: BandSet
) -> NormStats:
    """Checkpoint statistics when pre-trained, else statistics of the training patches."""
    if cfg.pretrained is not None:
        ckpt_bands = cfg.pretrained.bands
        return cfg.pretrained.norm.select([ckpt_bands.index(b) for b in bands.names])
    return compute_norm_stats(p.tile.select_bands(bands) for p in patches)


def load_regression(ckpt: ModelCheckpoint) -> RegressionModel:
    if not ckpt.is_regression:
        raise ConfigurationError("checkpoint holds a pre-training model, not a regressor")
    model = RegressionModel(ckpt.profile())
    ckpt.load_into(model)
    return model


# ── Training ───────────────────────────────────────────────────────


@dataclass
class FinetunedRegressor:
    """Trained model bundled with the statistics and bands it expects."""
    model: RegressionModel
    norm: NormStats
    bands: BandSet
    log: list[LossRecord] = field(default_factory=list)

    @classmethod
    def from_checkpoint(cls, ckpt: ModelCheckpoint) -> FinetunedRegressor:
        return cls(load_regression(ckpt), ckpt.norm, ckpt.bands)

    def checkpoint(self) -> ModelCheckpoint:
        return ModelCheckpoint.from_module(self.model, self.model.profile, self.norm)

    def predict_window(self, planes: np.ndarray) -> np.ndarray:
        """Log10 plane for one ``C x crop x crop`` window in physical units (NaN = invalid)."""
        return predict(self.model, self.norm.scale(planes))

    def predict_labels(self, patch: LabeledPatch) -> np.ndarray:
        """Predictions at the labeled pixels of the centered crop, row-major."""
        planes, label = fallback_crop(patch.with_bands(self.bands), self.model.profile.input_size)
        pred = self.predict_window(planes)
        return pred[~np.isnan(label)]


def finetune(
    train: Sequence[LabeledPatch], cfg: FinetuneConfig, profile: ModelProfile
) -> FinetunedRegressor:
    """Minimize the sparse masked loss; ``cfg.fraction`` subsets ``train`` first."""
    if not train:
        raise ValidationError("fine-tuning needs at least one labeled patch")
    bands = resolve_bands(train[0].tile.bands, cfg.use_sst)
    profile = profile.with_channels(bands.count)
    used = subset_fraction(train, cfg.fraction, cfg.seed)
    if not used:
        raise ValidationError(
            f"fraction {cfg.fraction} of {len(train)} patches leaves nothing to train on"
        )
    used = [p.with_bands(bands) for p in used]
    norm = normalization_for(cfg, used, bands)
    model = build_model(cfg, profile, bands)
    params = ParamSet.from_module(model)
    steps_per_epoch = math.ceil(len(used) / cfg.batch_size)
    opt = OptimizerState.create(
        params, peak_lr=cfg.lr, total_steps=cfg.epochs * steps_per_epoch
    )
    result = FinetunedRegressor(model, norm, bands)

    logger.info(
        "Fine-tuning %s (%s init) on %d of %d patches, %d bands, %d epochs",
        cfg.task.value, "pretrained" if cfg.pretrained else "scratch",
        len(used), len(train), bands.count, cfg.epochs,
    )
    model.train()
    crop = profile.input_size
    for epoch in range(cfg.epochs):
        order = np.random.default_rng(derive_seed(cfg.seed, "shuffle", epoch=epoch)).permutation(
            len(used)
        )
        epoch_sq, epoch_n = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            images, labels = [], []
            for i in (int(k) for k in order[start:start + cfg.batch_size]):
                if cfg.augment:
                    seed = derive_seed(cfg.seed, "augment", epoch=epoch, index=i)
                    planes, label = augment(used[i], seed, crop)
                else:
                    planes, label = fallback_crop(used[i], crop)
                images.append(norm.apply(planes)[0])
                labels.append(label)
            x = torch.from_numpy(np.stack(images))
            y = torch.from_numpy(np.stack(labels).astype(np.float32))

            params.zero_grad()
            loss = sparse_masked_loss(model(x), y)
            if not torch.isfinite(loss):
                raise TrainingDivergenceError(
                    f"non-finite loss at epoch {epoch}, step {opt.step}",
                    details={"epoch": epoch, "step": opt.step},
                )
            loss.backward()
            adamw_step(params, opt, opt.current_lr())
            n = int((~torch.isnan(y)).sum())
            epoch_sq += float(loss) ** 2 * n
            epoch_n += n

        train_loss = math.sqrt(epoch_sq / epoch_n)
        result.log.append(LossRecord(epoch, "train", ALL_REGIONS, train_loss))
        logger.info("Epoch %d train %.6f", epoch, train_loss)
    return result
