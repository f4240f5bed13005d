"""Per-pixel extremely randomized trees baseline.

Trees are grown by scikit-learn's ``ExtraTreesRegressor`` and then frozen
into plain node arrays, which is what gets serialized (ETR1) and evaluated.

ETR1 layout (little-endian)::

    magic "ETR1" | u16 version | u16 feature count F | u32 tree count
    | F x f64 imputation means
    | per tree: u32 node count n | i32 feature[n] | f64 threshold[n]
      | i32 left[n] | i32 right[n] | f64 value[n]

Leaves have ``left == right == -1``.
"""

from __future__ import annotations

import logging
import math
import os
import struct
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.ensemble import ExtraTreesRegressor

from ocean_fm.constants import derive_seed
from ocean_fm.data.atomic import atomic_write_bytes
from ocean_fm.data.tiles import BandSet, LabeledPatch
from ocean_fm.errors import DimensionError, FormatError, InsufficientDataError, ValidationError

logger = logging.getLogger(__name__)

LEAF = -1
MAGIC = b"ETR1"
VERSION = 1
DEFAULT_TREES = 100
MIN_SAMPLES_LEAF = 2


# ── Features ───────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class PixelRows:
    """One row per labeled pixel: band vector (imputed) and log10 target."""
    features: np.ndarray  # N x C float64
    targets: np.ndarray  # N
    band_means: np.ndarray  # C, used for imputation
    skipped: tuple[str, ...] = ()

    def __len__(self) -> int:
        return int(self.targets.shape[0])


def _labeled_pixels(patch: LabeledPatch) -> tuple[np.ndarray, np.ndarray]:
    mask = patch.labeled_mask()
    return patch.tile.planes[:, mask].T.astype(np.float64), patch.label_plane[mask]


def extract_pixel_features(
    patches: Sequence[LabeledPatch], band_means: np.ndarray | None = None
) -> PixelRows:
    """Rows for every labeled pixel; NaN features take the per-band training mean.

    Patches whose labeled block is invalid in every band are skipped and
    reported by source id. Means default to the mean of the rows collected here.
    """
    blocks: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    skipped: list[str] = []
    for i, patch in enumerate(patches):
        x, y = _labeled_pixels(patch)
        if np.isnan(x).all():
            skipped.append(patch.source_id or f"#{i}")
            continue
        blocks.append(x)
        targets.append(y.astype(np.float64))
    if skipped:
        logger.warning("Skipped %d patches with a fully invalid label block", len(skipped))

    channels = patches[0].tile.bands.count if patches else 0
    features = np.concatenate(blocks) if blocks else np.empty((0, channels))
    if band_means is None:
        counts = (~np.isnan(features)).sum(axis=0)
        sums = np.nansum(features, axis=0)
        band_means = np.divide(sums, counts, out=np.zeros(channels), where=counts > 0)
    features = np.where(np.isnan(features), band_means[None, :], features)
    return PixelRows(
        features,
        np.concatenate(targets) if targets else np.empty(0),
        np.asarray(band_means, dtype=np.float64),
        tuple(skipped),
    )


# ── Ensemble ───────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray  # int32
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64

    @property
    def node_count(self) -> int:
        return int(self.feature.shape[0])

    def violations(self, n_features: int) -> list[str]:
        found: list[str] = []
        n = self.node_count
        if any(a.shape != (n,) for a in (self.threshold, self.left, self.right, self.value)):
            return ["node arrays differ in length"]
        leaf = self.left == LEAF
        if np.any(leaf != (self.right == LEAF)):
            found.append("internal node without two children")
        internal = ~leaf
        kids = np.concatenate([self.left[internal], self.right[internal]])
        if kids.size and (kids.min() <= 0 or kids.max() >= n):
            found.append("child index out of range")
        feats = self.feature[internal]
        if feats.size and (feats.min() < 0 or feats.max() >= n_features):
            found.append("split feature out of range")
        if not np.all(np.isfinite(self.value[leaf])):
            found.append("leaf value not finite")
        return found


@dataclass(frozen=True, eq=False)
class TreeEnsemble:
    trees: tuple[Tree, ...]
    n_features: int
    feature_means: np.ndarray

    def validate(self) -> TreeEnsemble:
        if not self.trees:
            raise ValidationError("ensemble has no trees")
        for i, tree in enumerate(self.trees):
            found = tree.violations(self.n_features)
            if found:
                raise ValidationError(f"tree {i}: {'; '.join(found)}", details={"tree": i})
        return self

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Tree-mean prediction for each row of an ``N x F`` array (NaN imputed)."""
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise DimensionError(
                f"features of shape {x.shape} do not match {self.n_features} ensemble features"
            )
        x = np.where(np.isnan(x), self.feature_means[None, :], x).astype(np.float32)
        rows = np.arange(x.shape[0])
        total = np.zeros(x.shape[0])
        for tree in self.trees:
            node = np.zeros(x.shape[0], dtype=np.int64)
            active = tree.left[node] != LEAF
            while active.any():
                idx = rows[active]
                at = node[idx]
                go_left = x[idx, tree.feature[at]] <= tree.threshold[at]
                node[idx] = np.where(go_left, tree.left[at], tree.right[at])
                active = tree.left[node] != LEAF
            total += tree.value[node]
        return total / len(self.trees)


def fit_trees(
    rows: PixelRows,
    n_trees: int = DEFAULT_TREES,
    seed: int = 0,
    *,
    min_samples_leaf: int = MIN_SAMPLES_LEAF,
    n_jobs: int = 1,
) -> TreeEnsemble:
    """Grow extremely randomized trees with ``ceil(sqrt(C))`` candidate features per split."""
    if len(rows) < 2:
        raise InsufficientDataError(f"tree fitting needs at least 2 rows, got {len(rows)}")
    n_features = rows.features.shape[1]
    estimator = ExtraTreesRegressor(
        n_estimators=n_trees,
        max_features=math.ceil(math.sqrt(n_features)),
        min_samples_leaf=min_samples_leaf,
        bootstrap=False,
        random_state=np.random.RandomState(np.random.MT19937(derive_seed(seed, "trees"))),
        n_jobs=n_jobs,
    )
    estimator.fit(rows.features.astype(np.float32), rows.targets)
    trees = tuple(
        Tree(
            feature=est.tree_.feature.astype(np.int32),
            threshold=est.tree_.threshold.astype(np.float64),
            left=est.tree_.children_left.astype(np.int32),
            right=est.tree_.children_right.astype(np.int32),
            value=est.tree_.value[:, 0, 0].astype(np.float64),
        )
        for est in estimator.estimators_
    )
    logger.info("Fitted %d trees on %d rows x %d features", n_trees, len(rows), n_features)
    return TreeEnsemble(trees, n_features, rows.band_means.copy()).validate()


def predict_trees(ens: TreeEnsemble, features: Sequence[float] | np.ndarray) -> float:
    """Mean leaf value over all trees for a single feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"expected one feature vector, got shape {x.shape}")
    return float(ens.predict(x[None, :])[0])


# ── ETR1 serialization ─────────────────────────────────────────────


def encode_ensemble(ens: TreeEnsemble) -> bytes:
    parts = [MAGIC, struct.pack("<HHI", VERSION, ens.n_features, len(ens.trees))]
    parts.append(ens.feature_means.astype("<f8").tobytes())
    for tree in ens.trees:
        parts.append(struct.pack("<I", tree.node_count))
        parts.append(tree.feature.astype("<i4").tobytes())
        parts.append(tree.threshold.astype("<f8").tobytes())
        parts.append(tree.left.astype("<i4").tobytes())
        parts.append(tree.right.astype("<i4").tobytes())
        parts.append(tree.value.astype("<f8").tobytes())
    return b"".join(parts)


def decode_ensemble(data: bytes) -> TreeEnsemble:
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}", offset=0)
    if len(data) < 12:
        raise FormatError("truncated header", offset=len(data))
    version, n_features, n_trees = struct.unpack_from("<HHI", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    pos = 12

    def take(dtype: str, count: int) -> np.ndarray:
        nonlocal pos
        size = np.dtype(dtype).itemsize * count
        if pos + size > len(data):
            raise FormatError("truncated ensemble", offset=pos)
        out = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        pos += size
        return out

    means = take("<f8", n_features).astype(np.float64)
    trees = []
    for _ in range(n_trees):
        (n,) = take("<u4", 1)
        trees.append(Tree(
            feature=take("<i4", int(n)).astype(np.int32),
            threshold=take("<f8", int(n)).astype(np.float64),
            left=take("<i4", int(n)).astype(np.int32),
            right=take("<i4", int(n)).astype(np.int32),
            value=take("<f8", int(n)).astype(np.float64),
        ))
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes", offset=pos)
    return TreeEnsemble(tuple(trees), n_features, means).validate()


def write_ensemble(ens: TreeEnsemble, path: str | os.PathLike[str]) -> int:
    written = atomic_write_bytes(path, encode_ensemble(ens))
    logger.info("Wrote %d-tree ensemble to %s", len(ens.trees), path)
    return written


def read_ensemble(path: str | os.PathLike[str]) -> TreeEnsemble:
    return decode_ensemble(Path(path).read_bytes())


# ── Patch-level regressor ──────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class TreeRegressor:
    ensemble: TreeEnsemble
    bands: BandSet

    @classmethod
    def fit(
        cls,
        patches: Sequence[LabeledPatch],
        bands: BandSet,
        *,
        n_trees: int = DEFAULT_TREES,
        seed: int = 0,
    ) -> TreeRegressor:
        rows = extract_pixel_features([p.with_bands(bands) for p in patches])
        return cls(fit_trees(rows, n_trees, seed), bands)

    def predict_labels(self, patch: LabeledPatch) -> np.ndarray:
        x, _ = _labeled_pixels(patch.with_bands(self.bands))
        return self.ensemble.predict(x)

    def predict_window(self, planes: np.ndarray) -> np.ndarray:
        """Per-pixel prediction over a ``C x H x W`` array; all-NaN pixels stay NaN."""
        channels, height, width = planes.shape
        flat = planes.reshape(channels, -1).T
        out = self.ensemble.predict(flat)
        out[np.isnan(flat).all(axis=1)] = np.nan
        return out.reshape(height, width).astype(np.float32)
