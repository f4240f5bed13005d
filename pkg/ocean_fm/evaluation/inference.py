"""Large-area inference by overlapping sliding windows."""

from __future__ import annotations

import logging
from collections.abc import Callable

import numpy as np

from ocean_fm.constants import CROP_SIZE
from ocean_fm.errors import ConfigurationError, DimensionError, GeometryError

logger = logging.getLogger(__name__)

DEFAULT_STRIDE = 21

# C x window x window physical planes -> window x window log10 plane (NaN allowed)
WindowPredictor = Callable[[np.ndarray], np.ndarray]


def window_offsets(
    extent: int, window: int = CROP_SIZE, stride: int = DEFAULT_STRIDE
) -> list[int]:
    """``0, stride, ...`` up to ``extent - window``, plus an edge-aligned final offset."""
    if stride < 1:
        raise ConfigurationError(f"stride must be positive, got {stride}")
    if extent < window:
        raise GeometryError(f"extent {extent} is smaller than the {window}px window")
    last = extent - window
    offsets = list(range(0, last + 1, stride))
    if offsets[-1] != last:
        offsets.append(last)
    return offsets


def coverage(
    height: int, width: int, window: int = CROP_SIZE, stride: int = DEFAULT_STRIDE
) -> np.ndarray:
    """How many windows cover each pixel."""
    counts = np.zeros((height, width), dtype=np.int64)
    for top in window_offsets(height, window, stride):
        for left in window_offsets(width, window, stride):
            counts[top:top + window, left:left + window] += 1
    return counts


def tiled_inference(
    predict_window: WindowPredictor,
    scene: np.ndarray,
    stride: int = DEFAULT_STRIDE,
    *,
    window: int = CROP_SIZE,
) -> np.ndarray:
    """Average overlapping window predictions into one ``H x W`` float32 plane.

    Each pixel is the equal-weight mean of the finite predictions covering it;
    pixels no window predicts stay NaN.
    """
    if scene.ndim != 3:
        raise DimensionError(f"scene must be C x H x W, got shape {scene.shape}")
    _, height, width = scene.shape
    if height < window or width < window:
        raise GeometryError(f"scene {height}x{width} is smaller than the {window}px window")

    total = np.zeros((height, width), dtype=np.float64)
    count = np.zeros((height, width), dtype=np.int64)
    tops = window_offsets(height, window, stride)
    lefts = window_offsets(width, window, stride)
    for top in tops:
        for left in lefts:
            pred = np.asarray(
                predict_window(scene[:, top:top + window, left:left + window]), dtype=np.float64
            )
            if pred.shape != (window, window):
                raise DimensionError(f"window prediction has shape {pred.shape}")
            ok = np.isfinite(pred)
            region = np.s_[top:top + window, left:left + window]
            total[region] += np.where(ok, pred, 0.0)
            count[region] += ok
    logger.info("Tiled %dx%d scene with %d windows", height, width, len(tops) * len(lefts))

    out = np.full((height, width), np.nan, dtype=np.float64)
    np.divide(total, count, out=out, where=count > 0)
    return out.astype(np.float32)
