"""K-fold cross-validation, the training-fraction ablation and the results table."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from typing import NamedTuple, Protocol

import numpy as np

from ocean_fm.constants import FRACTION_GRID, derive_seed
from ocean_fm.data.tiles import LabeledPatch
from ocean_fm.errors import ConfigurationError, OceanFMError, ValidationError
from ocean_fm.evaluation.metrics import rmse
from ocean_fm.training.finetune import subset_fraction

logger = logging.getLogger(__name__)

DEFAULT_FOLDS = 5
MIN_TRAIN_SAMPLES = 2


class PatchRegressor(Protocol):
    def predict_labels(self, patch: LabeledPatch) -> np.ndarray:
        """Log10 predictions at the patch's labeled pixels, row-major."""
        ...


# (training patches, fold index) -> trained regressor
ModelFactory = Callable[[Sequence[LabeledPatch], int], PatchRegressor]


# ── Fold plans ─────────────────────────────────────────────────────


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    folds: tuple[tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return sum(len(f) for f in self.folds)

    def sizes(self) -> list[int]:
        return [len(f) for f in self.folds]

    def train_indices(self, fold: int) -> list[int]:
        held = set(self.folds[fold])
        return [i for i in range(self.n) if i not in held]

    def violations(self) -> list[str]:
        found: list[str] = []
        flat = [i for f in self.folds for i in f]
        if len(self.folds) != self.k:
            found.append(f"{len(self.folds)} folds for k={self.k}")
        if len(set(flat)) != len(flat):
            found.append("folds overlap")
        if set(flat) != set(range(len(flat))):
            found.append("folds do not cover 0..n-1")
        sizes = self.sizes()
        if sizes and max(sizes) - min(sizes) > 1:
            found.append(f"fold sizes {sizes} differ by more than one")
        return found


def kfold_split(n: int, k: int = DEFAULT_FOLDS, seed: int = 0) -> FoldPlan:
    """Seeded shuffle of ``0..n-1`` dealt round-robin into ``k`` folds (each sorted)."""
    if k < 2:
        raise ConfigurationError(f"k-fold needs k >= 2, got {k}")
    if n < k:
        raise ValidationError(f"cannot split {n} samples into {k} folds")
    perm = np.random.default_rng(derive_seed(seed, "folds")).permutation(n)
    folds = tuple(tuple(sorted(int(i) for i in perm[f::k])) for f in range(k))
    return FoldPlan(k, seed, folds)


# ── Reports ────────────────────────────────────────────────────────


class FoldFailure(NamedTuple):
    fold: int
    code: str
    message: str


@dataclass(frozen=True)
class MetricReport:
    """Per-fold RMSE (``None`` for failed folds) and its summary."""
    fold_rmse: tuple[float | None, ...]
    failures: tuple[FoldFailure, ...] = ()
    ssim: float | None = None
    runtime_s: float = 0.0

    @property
    def complete(self) -> bool:
        return not self.failures

    @property
    def succeeded(self) -> list[float]:
        return [r for r in self.fold_rmse if r is not None]

    @property
    def mean(self) -> float:
        ok = self.succeeded
        return float(np.mean(ok)) if ok else math.nan

    @property
    def std(self) -> float:
        """Population standard deviation over the folds that trained."""
        ok = self.succeeded
        return float(np.std(ok)) if ok else math.nan


def _targets(patch: LabeledPatch) -> np.ndarray:
    return patch.label_plane[patch.labeled_mask()].astype(np.float64)


def evaluate_fold(model: PatchRegressor, held_out: Sequence[LabeledPatch]) -> float:
    """RMSE pooled over every labeled pixel of the held-out patches."""
    preds = [np.asarray(model.predict_labels(p), dtype=np.float64) for p in held_out]
    return rmse(np.concatenate(preds), np.concatenate([_targets(p) for p in held_out]))


def run_cv(
    dataset: Sequence[LabeledPatch],
    factory: ModelFactory,
    folds: FoldPlan,
    *,
    fraction: float = 1.0,
    seed: int | None = None,
) -> MetricReport:
    """Train on each fold's complement and score the fold.

    ``fraction < 1`` subsets every training complement (never the held-out
    fold). A fold whose training or scoring raises ``RuntimeError`` or
    ``ValueError`` (every ``OceanFMError`` included) is recorded as a failure
    under its error code, or the exception class name for library errors, and
    the remaining folds still run. Anything else propagates.
    """
    if folds.n != len(dataset):
        raise ValidationError(f"fold plan covers {folds.n} samples, dataset has {len(dataset)}")
    seed = folds.seed if seed is None else seed
    started = time.perf_counter()
    scores: list[float | None] = []
    failures: list[FoldFailure] = []
    for f, held in enumerate(folds.folds):
        train = [dataset[i] for i in folds.train_indices(f)]
        if fraction < 1.0:
            train = subset_fraction(train, fraction, seed + f)
        try:
            model = factory(train, f)
            score = evaluate_fold(model, [dataset[i] for i in held])
        except (RuntimeError, ValueError) as exc:
            code = exc.code if isinstance(exc, OceanFMError) else type(exc).__name__
            logger.error("Fold %d failed [%s]: %s", f, code, exc)
            failures.append(FoldFailure(f, code, str(exc)))
            scores.append(None)
            continue
        logger.info("Fold %d: %d train, %d held out, RMSE %.6f", f, len(train), len(held), score)
        scores.append(score)
    report = MetricReport(
        tuple(scores), tuple(failures), runtime_s=time.perf_counter() - started
    )
    logger.info(
        "CV RMSE %.6f +/- %.6f over %d folds (%.1fs)",
        report.mean, report.std, len(report.succeeded), report.runtime_s,
    )
    return report


# ── Fraction ablation ──────────────────────────────────────────────


class AblationPoint(NamedTuple):
    fraction: float
    report: MetricReport | None  # None when skipped
    min_train: int

    @property
    def skipped(self) -> bool:
        return self.report is None

    @property
    def mean(self) -> float:
        return math.nan if self.report is None else self.report.mean


def fraction_ablation(
    dataset: Sequence[LabeledPatch],
    factory: ModelFactory,
    folds: FoldPlan,
    fractions: Sequence[float] = FRACTION_GRID,
    *,
    seed: int | None = None,
) -> list[AblationPoint]:
    """Re-run the same folds with each training complement subsetted to ``fraction``.

    Points where any fold would train on fewer than two samples are skipped
    and flagged.
    """
    bad = [f for f in fractions if f not in FRACTION_GRID]
    if bad:
        raise ConfigurationError(f"fractions {bad} not in {FRACTION_GRID}")
    curve: list[AblationPoint] = []
    for fraction in fractions:
        smallest = min(
            math.floor(fraction * len(folds.train_indices(f))) for f in range(folds.k)
        )
        if smallest < MIN_TRAIN_SAMPLES:
            logger.warning(
                "Skipping fraction %.3f: a fold would train on %d samples", fraction, smallest
            )
            curve.append(AblationPoint(fraction, None, smallest))
            continue
        report = run_cv(dataset, factory, folds, fraction=fraction, seed=seed)
        curve.append(AblationPoint(fraction, report, smallest))
    return curve


# ── Output ─────────────────────────────────────────────────────────


def _fmt(value: float | None) -> str:
    return "" if value is None or math.isnan(value) else f"{value:.8g}"


def format_fold_table(reports: Mapping[str, MetricReport]) -> str:
    """CSV ``model,fold,rmse,status``; failed folds carry their error code."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "fold", "rmse", "status"])
    for name, report in reports.items():
        codes = {f.fold: f.code for f in report.failures}
        for i, score in enumerate(report.fold_rmse):
            writer.writerow([name, i, _fmt(score), codes.get(i, "ok")])
    return buf.getvalue()


def format_ablation(curves: Mapping[str, Sequence[AblationPoint]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "fraction", "mean_rmse", "std_rmse", "min_train", "status"])
    for name, curve in curves.items():
        for p in curve:
            if p.report is None:
                writer.writerow([name, p.fraction, "", "", p.min_train, "skipped"])
            else:
                status = "ok" if p.report.complete else "partial"
                writer.writerow([
                    name, p.fraction, _fmt(p.report.mean), _fmt(p.report.std), p.min_train,
                    status,
                ])
    return buf.getvalue()


@dataclass(frozen=True)
class SummaryRow:
    model: str
    report: MetricReport
    reconstruction: tuple[float, float] | None = None  # mean, std


@dataclass(frozen=True)
class ResultsSummary:
    task: str
    rows: Sequence[SummaryRow]
    label_share: float | None = None
    notes: tuple[str, ...] = ()

    def render(self) -> str:
        """Plain-text table: one row per model, ``mean +/- std`` per column."""
        header = ("Model", "Reconstruction", f"{self.task} RMSE", "Folds")
        body = []
        for row in self.rows:
            recon = "" if row.reconstruction is None else "{:.4f} +/- {:.4f}".format(
                *row.reconstruction
            )
            r = row.report
            cv = "failed" if not r.succeeded else f"{r.mean:.4f} +/- {r.std:.4f}"
            body.append((row.model, recon, cv, f"{len(r.succeeded)}/{len(r.fold_rmse)}"))
        widths = [max(len(line[i]) for line in (header, *body)) for i in range(len(header))]

        def line(cells: Sequence[str]) -> str:
            return " | ".join(c.ljust(w) for c, w in zip(cells, widths, strict=True)).rstrip()

        out = [line(header), "-+-".join("-" * w for w in widths)]
        out.extend(line(cells) for cells in body)
        if self.label_share is not None:
            out.append("")
            out.append(f"Labeled pixels: {self.label_share:.2%} of one input crop")
        out.extend(self.notes)
        return "\n".join(out) + "\n"