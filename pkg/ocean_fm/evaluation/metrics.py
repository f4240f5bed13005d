"""Scalar and image metrics: RMSE, windowed SSIM, value histograms, label coverage."""

from __future__ import annotations

import csv
import io
import math
import os
from collections.abc import Mapping, Sequence
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F

from ocean_fm.constants import CROP_SIZE, HISTOGRAM_BINS
from ocean_fm.data.atomic import atomic_write_text
from ocean_fm.data.tiles import LabeledPatch
from ocean_fm.errors import (
    ConfigurationError,
    DimensionError,
    InsufficientDataError,
)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def rmse(preds: Sequence[float] | np.ndarray, targets: Sequence[float] | np.ndarray) -> float:
    p = np.asarray(preds, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise DimensionError(f"{p.size} predictions for {t.size} targets")
    if p.size == 0:
        raise InsufficientDataError("rmse of an empty sequence")
    return math.sqrt(float(np.mean((p - t) ** 2)))


# ── SSIM ───────────────────────────────────────────────────────────


def _gaussian_window(size: int, sigma: float) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2.0 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)[None, None]


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    dynamic_range: float,
    *,
    window: int = SSIM_WINDOW,
    sigma: float = SSIM_SIGMA,
) -> float:
    """Mean local SSIM over fully-inside Gaussian windows.

    NaN pixels are dropped pairwise: each window's weights are renormalized
    over the mutually valid pixels, and windows with none are skipped.
    Planes smaller than the window shrink it to the largest odd size that fits.
    """
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionError(f"ssim needs two equal 2-D planes, got {a.shape} and {b.shape}")
    if not dynamic_range > 0:
        raise ConfigurationError(f"dynamic range must be positive, got {dynamic_range}")
    valid = ~(np.isnan(a) | np.isnan(b))
    if not valid.any():
        raise InsufficientDataError("no mutually valid pixels")

    size = min(window, *a.shape)
    if size % 2 == 0:
        size -= 1
    kernel = _gaussian_window(size, sigma)

    def conv(x: np.ndarray) -> torch.Tensor:
        return F.conv2d(torch.from_numpy(x)[None, None], kernel)[0, 0]

    m = valid.astype(np.float64)
    x = np.where(valid, a, 0.0).astype(np.float64)
    y = np.where(valid, b, 0.0).astype(np.float64)
    weight = conv(m)
    has_data = weight > 1e-12
    w = torch.where(has_data, weight, torch.ones_like(weight))
    mu_x, mu_y = conv(x) / w, conv(y) / w
    var_x = conv(x * x) / w - mu_x * mu_x
    var_y = conv(y * y) / w - mu_y * mu_y
    cov = conv(x * y) / w - mu_x * mu_y

    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    values = (num / den)[has_data]
    if values.numel() == 0:
        raise InsufficientDataError("no window contains a mutually valid pixel")
    return float(values.mean())


# ── Histograms ─────────────────────────────────────────────────────


class HistogramRow(NamedTuple):
    series: str
    band: str
    bin_lo: float
    bin_hi: float
    density: float


def band_histograms(
    series: Mapping[str, np.ndarray],
    band_names: Sequence[str],
    *,
    bins: int = HISTOGRAM_BINS,
    value_range: tuple[float, float] | None = None,
) -> list[HistogramRow]:
    """Normalized per-band densities of each ``C x H x W`` series over a shared range."""
    rows: list[HistogramRow] = []
    for b, band in enumerate(band_names):
        values = {
            name: planes[b][~np.isnan(planes[b])].astype(np.float64)
            for name, planes in series.items()
        }
        if value_range is None:
            pooled = [v for v in values.values() if v.size]
            if not pooled:
                continue
            lo = min(float(v.min()) for v in pooled)
            hi = max(float(v.max()) for v in pooled)
        else:
            lo, hi = value_range
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        for name, v in values.items():
            counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
            total = counts.sum()
            widths = np.diff(edges)
            density = counts / (total * widths) if total else np.zeros(bins)
            rows.extend(
                HistogramRow(name, band, float(edges[i]), float(edges[i + 1]), float(density[i]))
                for i in range(bins)
            )
    return rows


def format_histograms(rows: Sequence[HistogramRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HistogramRow._fields)
    for r in rows:
        writer.writerow(
            [r.series, r.band, f"{r.bin_lo:.8g}", f"{r.bin_hi:.8g}", f"{r.density:.8g}"]
        )
    return buf.getvalue()


def write_histograms(rows: Sequence[HistogramRow], path: str | os.PathLike[str]) -> int:
    return atomic_write_text(path, format_histograms(rows))


def label_pixel_share(patches: Sequence[LabeledPatch], crop: int = CROP_SIZE) -> float:
    """Labeled pixels across the whole dataset as a fraction of one ``crop`` x ``crop`` image."""
    labeled = sum(int(p.labeled_mask().sum()) for p in patches)
    return labeled / float(crop * crop)
