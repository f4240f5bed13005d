"""Masked-autoencoder pre-training loop."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import torch

from ocean_fm.config import ModelProfile, get_profile
from ocean_fm.constants import MIN_VALID_FRACTION, derive_seed
from ocean_fm.data.checkpoint import ModelCheckpoint
from ocean_fm.data.normalize import NormStats, compute_norm_stats
from ocean_fm.data.tiles import Tile
from ocean_fm.errors import (
    ConfigurationError,
    GeometryError,
    TrainingDivergenceError,
    ValidationError,
)
from ocean_fm.ingestion.sampling import valid_fraction
from ocean_fm.models.encoder import random_mask, seeded_init
from ocean_fm.models.mae import MaskedAutoencoder, masked_squared_error
from ocean_fm.nn.core import ParamSet
from ocean_fm.nn.optim import OptimizerState, adamw_step
from ocean_fm.training.records import ALL_REGIONS, LossRecord

logger = logging.getLogger(__name__)

DEFAULT_MASK_RATIO = 0.75
DEFAULT_PEAK_LR = 2.4e-3


@dataclass
class PretrainResult:
    model: MaskedAutoencoder
    checkpoint: ModelCheckpoint
    log: list[LossRecord] = field(default_factory=list)

    def losses(self, split: str = "train", region: str = ALL_REGIONS) -> list[float]:
        return [r.loss for r in self.log if r.split == split and r.region == region]


def split_train_val(
    tiles: Sequence[Tile], val_fraction: float, seed: int
) -> tuple[list[Tile], list[Tile]]:
    """Seeded hold-out; both parts keep the input order."""
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigurationError(f"validation fraction {val_fraction} outside [0, 1)")
    n_val = math.floor(val_fraction * len(tiles))
    rng = np.random.default_rng(derive_seed(seed, "validation"))
    held = set(rng.permutation(len(tiles))[:n_val].tolist())
    train = [t for i, t in enumerate(tiles) if i not in held]
    val = [t for i, t in enumerate(tiles) if i in held]
    return train, val


# ── Views ──────────────────────────────────────────────────────────


def augmented_view(planes: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Rotate by a random multiple of 90 degrees, then random-crop to ``size``."""
    k = int(rng.integers(4))
    rotated = np.rot90(planes, k=k, axes=(1, 2))
    top = int(rng.integers(rotated.shape[1] - size + 1))
    left = int(rng.integers(rotated.shape[2] - size + 1))
    return np.ascontiguousarray(rotated[:, top:top + size, left:left + size])


def center_view(planes: np.ndarray, size: int) -> np.ndarray:
    top = (planes.shape[1] - size) // 2
    left = (planes.shape[2] - size) // 2
    return np.ascontiguousarray(planes[:, top:top + size, left:left + size])


def _batch_tensors(
    views: list[np.ndarray], norm: NormStats
) -> tuple[torch.Tensor, torch.Tensor]:
    values, validity = zip(*(norm.apply(v) for v in views))
    return torch.from_numpy(np.stack(values)), torch.from_numpy(np.stack(validity))


def _check_dataset(tiles: Sequence[Tile], profile: ModelProfile) -> None:
    if not tiles:
        raise ValidationError("pre-training needs at least one tile")
    for i, tile in enumerate(tiles):
        if tile.bands.count != profile.in_channels:
            raise ConfigurationError(
                f"tile {i} has {tile.bands.count} bands, profile expects {profile.in_channels}"
            )
        if tile.height < profile.input_size or tile.width < profile.input_size:
            raise GeometryError(
                f"tile {i} is {tile.height}x{tile.width}, smaller than the "
                f"{profile.input_size}px model input"
            )
    failing = [i for i, t in enumerate(tiles) if valid_fraction(t) < MIN_VALID_FRACTION]
    if failing:
        raise ValidationError(
            f"{len(failing)} tiles are less than {MIN_VALID_FRACTION:.0%} valid",
            details={"indices": failing[:20]},
        )


def build_mae(profile: ModelProfile, seed: int) -> MaskedAutoencoder:
    with seeded_init(derive_seed(seed, "init")):
        return MaskedAutoencoder(profile)


def load_mae(checkpoint: ModelCheckpoint) -> MaskedAutoencoder:
    if checkpoint.is_regression:
        raise ConfigurationError("checkpoint holds a fine-tuned regression model")
    model = MaskedAutoencoder(checkpoint.profile())
    checkpoint.load_into(model)
    return model


# ── Evaluation ─────────────────────────────────────────────────────


def evaluate_reconstruction(
    model: MaskedAutoencoder,
    tiles: Sequence[Tile],
    norm: NormStats,
    *,
    mask_ratio: float,
    seed: int,
    batch_size: int = 16,
) -> dict[str, float]:
    """Masked RMSE on center crops with fixed seeded masks: overall and per region."""
    profile = model.profile
    totals: dict[str, float] = defaultdict(float)
    counts: dict[str, int] = defaultdict(int)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for start in range(0, len(tiles), batch_size):
                chunk = range(start, min(start + batch_size, len(tiles)))
                views = [center_view(tiles[i].planes, profile.input_size) for i in chunk]
                plans = [
                    random_mask(
                        profile.num_tokens, mask_ratio, derive_seed(seed, "validation", index=i)
                    )
                    for i in chunk
                ]
                images, validity = _batch_tensors(views, norm)
                recon = model(images, plans)
                for j, i in enumerate(chunk):
                    sq, n = masked_squared_error(recon[j], images[j], plans[j], validity[j])
                    region = tiles[i].meta.region
                    for key in (region, ALL_REGIONS):
                        totals[key] += float(sq)
                        counts[key] += n
    finally:
        model.train(was_training)
    return {k: math.sqrt(totals[k] / counts[k]) for k in sorted(totals) if counts[k]}


# ── Training ───────────────────────────────────────────────────────


def pretrain(
    tiles: Sequence[Tile],
    profile: ModelProfile,
    *,
    epochs: int,
    lr_peak: float = DEFAULT_PEAK_LR,
    mask_ratio: float = DEFAULT_MASK_RATIO,
    seed: int,
    batch_size: int = 8,
    val_tiles: Sequence[Tile] = (),
    augment: bool = True,
) -> PretrainResult:
    """Train a masked autoencoder; ``epochs=0`` returns the initialization untouched."""
    if epochs < 0 or batch_size < 1:
        raise ConfigurationError("epochs must be >= 0 and batch size >= 1")
    _check_dataset(tiles, profile)
    if not 0.0 < mask_ratio < 1.0:
        raise ConfigurationError(f"mask ratio {mask_ratio} outside (0, 1)")

    norm = compute_norm_stats(tiles)
    model = build_mae(profile, seed)
    params = ParamSet.from_module(model)
    steps_per_epoch = math.ceil(len(tiles) / batch_size)
    opt = OptimizerState.create(params, peak_lr=lr_peak, total_steps=epochs * steps_per_epoch)
    log: list[LossRecord] = []

    logger.info(
        "Pre-training profile %s on %d tiles (%d validation) for %d epochs, %d parameters",
        profile.name, len(tiles), len(val_tiles), epochs, params.num_elements(),
    )
    model.train()
    for epoch in range(epochs):
        order = np.random.default_rng(derive_seed(seed, "shuffle", epoch=epoch)).permutation(
            len(tiles)
        )
        epoch_sq, epoch_n = 0.0, 0
        for start in range(0, len(order), batch_size):
            chunk = [int(i) for i in order[start:start + batch_size]]
            views, plans = [], []
            for i in chunk:
                planes = tiles[i].planes
                if augment:
                    rng = np.random.default_rng(derive_seed(seed, "augment", epoch=epoch, index=i))
                    views.append(augmented_view(planes, profile.input_size, rng))
                else:
                    views.append(center_view(planes, profile.input_size))
                plans.append(random_mask(
                    profile.num_tokens, mask_ratio, derive_seed(seed, "mask", epoch=epoch, index=i)
                ))
            images, validity = _batch_tensors(views, norm)

            params.zero_grad()
            recon = model(images, plans)
            sq, n = masked_squared_error(recon, images, plans, validity)
            if n == 0:
                logger.debug(
                    "Batch at epoch %d step %d has no masked valid pixels", epoch, opt.step
                )
                continue
            loss = torch.sqrt(sq / n)
            if not torch.isfinite(loss):
                raise TrainingDivergenceError(
                    f"non-finite loss at epoch {epoch}, step {opt.step}",
                    details={"epoch": epoch, "step": opt.step},
                )
            loss.backward()
            adamw_step(params, opt, opt.current_lr())
            epoch_sq += float(sq)
            epoch_n += n

        train_loss = math.sqrt(epoch_sq / epoch_n) if epoch_n else float("nan")
        log.append(LossRecord(epoch, "train", ALL_REGIONS, train_loss))
        if val_tiles:
            val = evaluate_reconstruction(
                model, val_tiles, norm, mask_ratio=mask_ratio, seed=seed
            )
            log.extend(LossRecord(epoch, "val", region, value) for region, value in val.items())
            logger.info("Epoch %d train %.6f val %.6f", epoch, train_loss, val[ALL_REGIONS])
        else:
            logger.info("Epoch %d train %.6f", epoch, train_loss)

    return PretrainResult(model, ModelCheckpoint.from_module(model, profile, norm), log)


# ── Reconstruction export ──────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Input crop, masked-pixel map and reconstruction, both images in physical units."""
    original: np.ndarray
    mask: np.ndarray
    reconstruction: np.ndarray


def reconstruct(
    checkpoint: ModelCheckpoint, tile: Tile, mask_ratio: float, seed: int
) -> Reconstruction:
    model = load_mae(checkpoint)
    profile = model.profile
    if tile.bands.count != profile.in_channels:
        raise ConfigurationError(
            f"tile has {tile.bands.count} bands, checkpoint expects {profile.in_channels}"
        )
    if tile.height < profile.input_size or tile.width < profile.input_size:
        raise GeometryError(f"tile smaller than the {profile.input_size}px model input")
    crop = center_view(tile.planes, profile.input_size)
    plan = random_mask(profile.num_tokens, mask_ratio, derive_seed(seed, "mask"))
    images, _ = _batch_tensors([crop], checkpoint.norm)
    model.eval()
    with torch.no_grad():
        recon = model(images, [plan])[0].numpy()
    grid = (profile.grid_size, profile.grid_size)
    mask = plan.pixel_mask(grid, profile.patch_size).numpy()
    return Reconstruction(crop, mask, checkpoint.norm.invert(recon))


def profile_for(name: str, tiles: Sequence[Tile]) -> ModelProfile:
    """Named profile bound to the band count of ``tiles``."""
    if not tiles:
        raise ValidationError("no tiles to infer the band count from")
    return get_profile(name, in_channels=tiles[0].bands.count)


__all__ = [
    "ALL_REGIONS",
    "LossRecord",
    "PretrainResult",
    "Reconstruction",
    "evaluate_reconstruction",
    "pretrain",
    "reconstruct",
    "split_train_val",
]
