"""``ocean-fm`` command line: one subcommand per pipeline stage.

Results go to stdout as ``key=value`` lines, diagnostics to stderr.
Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import torch

from ocean_fm.baselines.trees import (
    DEFAULT_TREES,
    TreeRegressor,
    decode_ensemble,
    write_ensemble,
)
from ocean_fm.baselines.trees import MAGIC as ENSEMBLE_MAGIC
from ocean_fm.config import PROFILES, get_profile
from ocean_fm.constants import (
    COMPOSITE_WINDOW_DAYS,
    DEFAULT_EXCLUDED_REGIONS,
    FRACTION_GRID,
    MIN_VALID_FRACTION,
    OLCI_BANDS,
    SOURCE_TILE_SIZE,
)
from ocean_fm.data.atomic import atomic_write_text
from ocean_fm.data.checkpoint import MAGIC as CHECKPOINT_MAGIC
from ocean_fm.data.checkpoint import (
    ModelCheckpoint,
    decode_checkpoint,
    read_checkpoint,
    write_checkpoint,
)
from ocean_fm.data.codec import (
    TILE_SUFFIX,
    list_tile_files,
    read_labeled_patch,
    read_tile,
    write_labeled_patch,
    write_tile,
)
from ocean_fm.data.synth import SynthConfig, gen_labeled_dataset, gen_tiles
from ocean_fm.data.tiles import BandSet, LabeledPatch, TargetKind, Tile
from ocean_fm.errors import (
    ConfigurationError,
    InsufficientDataError,
    OceanFMError,
    ValidationError,
)
from ocean_fm.evaluation.cv import (
    DEFAULT_FOLDS,
    AblationPoint,
    MetricReport,
    ModelFactory,
    ResultsSummary,
    SummaryRow,
    format_ablation,
    format_fold_table,
    fraction_ablation,
    kfold_split,
    run_cv,
)
from ocean_fm.evaluation.inference import DEFAULT_STRIDE, tiled_inference
from ocean_fm.evaluation.metrics import (
    band_histograms,
    label_pixel_share,
    ssim,
    write_histograms,
)
from ocean_fm.ingestion.composite import (
    DepthProfile,
    SceneStack,
    integrate_depth,
    make_labeled_patch,
    median_composite,
)
from ocean_fm.ingestion.sampling import (
    ManifestEntry,
    SampleBudget,
    balanced_sample,
    passes_filter,
    split_scene,
    tile_cell,
    valid_fraction,
    write_manifest,
)
from ocean_fm.training.checks import (
    GRADCHECK_EPS,
    check_mae_gradients,
    check_regression_gradients,
)
from ocean_fm.training.finetune import (
    FinetuneConfig,
    FinetunedRegressor,
    finetune,
    resolve_bands,
)
from ocean_fm.training.pretrain import (
    DEFAULT_MASK_RATIO,
    DEFAULT_PEAK_LR,
    evaluate_reconstruction,
    load_mae,
    pretrain,
    profile_for,
    reconstruct,
    split_train_val,
)
from ocean_fm.training.records import ALL_REGIONS, write_loss_log

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
BAND_CHOICES = ("olci", "olci+sst")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
PREDICTION_BAND = "LOG10_PRED"
MASK_BAND = "MASK"

# Table rows in display order.
MODEL_ROWS = {
    "scratch-olci": "OLCI (Scratch)",
    "fm-olci": "OLCI (FM)",
    "scratch-sst": "OLCI + SST (Scratch)",
    "fm-sst": "OLCI + SST (FM)",
    "trees": "Random forest",
}

# Subcommands that consume randomness and therefore demand --seed.
STOCHASTIC = frozenset(
    {"synth", "sample", "pretrain", "finetune", "baseline", "eval", "gradcheck"}
)


# ── Run configuration ──────────────────────────────────────────────


@dataclass(frozen=True)
class RunConfig:
    """Parsed invocation: globals plus the subcommand's paths and hyper-parameters."""
    command: str
    seed: int | None
    threads: int = 1
    log_level: str = "WARNING"
    profile: str | None = None
    task: TargetKind | None = None
    paths: dict[str, Path | None] = field(default_factory=dict)
    hyper: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.command in STOCHASTIC and self.seed is None:
            raise ConfigurationError(f"'{self.command}' needs --seed")
        if self.threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {self.threads}")

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> RunConfig:
        values = {k: v for k, v in vars(ns).items() if k != "handler"}
        task = values.pop("task", None)
        paths = {k: v for k, v in values.items() if isinstance(v, Path)}
        paths.update({k: None for k in values.pop("_path_args", ()) if values.get(k) is None})
        return cls(
            command=values.pop("command"),
            seed=values.pop("seed", None),
            threads=values.pop("threads"),
            log_level=values.pop("log_level"),
            profile=values.pop("profile", None),
            task=TargetKind(task) if task else None,
            paths=paths,
            hyper={k: v for k, v in values.items() if k not in paths},
        )

    def path(self, name: str) -> Path:
        value = self.paths.get(name)
        if value is None:
            raise ConfigurationError(f"'{self.command}' needs --{name.replace('_', '-')}")
        return value

    @property
    def run_seed(self) -> int:
        if self.seed is None:
            raise ConfigurationError(f"'{self.command}' needs --seed")
        return self.seed


# ── Loading helpers ────────────────────────────────────────────────


def _load_tiles(directory: Path) -> list[Tile]:
    files = list_tile_files(directory)
    if not files:
        raise InsufficientDataError(f"no {TILE_SUFFIX} tiles in {directory}")
    return [read_tile(p) for p in files]


def _load_patches(directory: Path, task: TargetKind | None = None) -> list[LabeledPatch]:
    files = list_tile_files(directory)
    if not files:
        raise InsufficientDataError(f"no labeled patches in {directory}")
    patches = [read_labeled_patch(p) for p in files]
    if task is not None:
        wrong = sorted({p.kind.value for p in patches if p.kind is not task})
        if wrong:
            raise ConfigurationError(
                f"dataset holds {', '.join(wrong)} labels, not {task.value}",
                details={"directory": str(directory)},
            )
    return patches


def _use_sst(choice: str, bands: BandSet) -> bool:
    if choice == "olci+sst" and not bands.has_sst:
        raise ConfigurationError("--bands olci+sst needs a dataset with an SST band")
    return choice == "olci+sst"


def _emit(**values: Any) -> None:
    for key, value in values.items():
        text = f"{value:.6g}" if isinstance(value, float) else str(value)
        print(f"{key}={text}")


# ── Subcommands ────────────────────────────────────────────────────


def cmd_synth(cfg: RunConfig) -> int:
    out = cfg.path("out")
    out.mkdir(parents=True, exist_ok=True)
    synth = SynthConfig(
        seed=cfg.run_seed,
        band_count=len(OLCI_BANDS) + (cfg.hyper["bands"] == "olci+sst"),
        size=cfg.hyper["size"],
        cloud_fraction=cfg.hyper["cloud_fraction"],
        regions=tuple(cfg.hyper["regions"].split(",")),
        kind=cfg.task or TargetKind.CHLOROPHYLL,
    )
    count = cfg.hyper["count"]
    entries: list[ManifestEntry] = []
    if cfg.hyper["labeled"]:
        for i, patch in enumerate(gen_labeled_dataset(synth, count)):
            path = out / f"patch-{i:05d}{TILE_SUFFIX}"
            write_labeled_patch(patch, path)
            meta = patch.tile.meta
            entries.append(
                ManifestEntry(path.name, meta.region, meta.month, valid_fraction(patch.tile))
            )
    else:
        for i, tile in enumerate(gen_tiles(synth, count)):
            path = out / f"tile-{i:05d}{TILE_SUFFIX}"
            write_tile(tile, path)
            entries.append(
                ManifestEntry(path.name, tile.meta.region, tile.meta.month, valid_fraction(tile))
            )
    write_manifest(entries, out / MANIFEST_NAME)
    _emit(written=len(entries), manifest=out / MANIFEST_NAME)
    return 0


def cmd_sample(cfg: RunConfig) -> int:
    threshold = cfg.hyper["threshold"]
    candidates: list[tuple[str, Tile]] = []
    scenes = list_tile_files(cfg.path("scenes"))
    if not scenes:
        raise InsufficientDataError(f"no scenes in {cfg.path('scenes')}")
    for scene_path in scenes:
        scene = read_tile(scene_path)
        cols = scene.width // SOURCE_TILE_SIZE
        for k, tile in enumerate(split_scene(scene)):
            if passes_filter(tile, threshold):
                r, c = divmod(k, cols)
                candidates.append((f"{scene_path.stem}-r{r:03d}c{c:03d}", tile))

    excluded = frozenset(cfg.hyper["exclude"].split(",")) if cfg.hyper["exclude"] else frozenset()
    regions = sorted({tile.meta.region for _, tile in candidates})
    budget = SampleBudget.uniform(regions, cfg.hyper["per_region"], excluded=excluded)
    result = balanced_sample(
        candidates, budget, cfg.run_seed, key=lambda item: tile_cell(item[1])
    )

    out = cfg.path("out")
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, tile in result.selected:
        write_tile(tile, out / f"{name}{TILE_SUFFIX}")
        entries.append(ManifestEntry(
            f"{name}{TILE_SUFFIX}", tile.meta.region, tile.meta.month, valid_fraction(tile)
        ))
    write_manifest(entries, out / MANIFEST_NAME)
    for s in result.shortfalls:
        print(
            f"shortfall region={s.region} month={s.month} "
            f"requested={s.requested} available={s.available}",
            file=sys.stderr,
        )
    _emit(candidates=len(candidates), selected=len(entries), shortfalls=len(result.shortfalls))
    return 0


def _read_stack(path: Path) -> SceneStack:
    tiles, days = [], []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
            if len(row) != 2:
                raise ValidationError(
                    f"stack line {lineno} has {len(row)} fields, expected path and day",
                    details={"line": lineno},
                )
            tiles.append(read_tile(path.parent / row[0]))
            days.append(float(row[1]))
    return SceneStack.from_unsorted(tiles, days)


def _read_depth_profile(path: Path) -> DepthProfile:
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    try:
        return DepthProfile.from_pairs([(float(d), float(p)) for d, p in rows])
    except ValueError as exc:
        if isinstance(exc, OceanFMError):
            raise
        raise ValidationError(f"depth profile {path}: {exc}") from None


def cmd_composite(cfg: RunConfig) -> int:
    task = cfg.task or TargetKind.CHLOROPHYLL
    composite = median_composite(
        _read_stack(cfg.path("stack")), cfg.hyper["center_day"], cfg.hyper["window"]
    )
    value = cfg.hyper["value"]
    depth_path = cfg.paths.get("depth_profile")
    if depth_path is not None:
        value = integrate_depth(_read_depth_profile(depth_path))
    if value is None:
        raise ConfigurationError("composite needs --value or --depth-profile")
    out = cfg.path("out")
    patch = make_labeled_patch(composite, value, task, out.name.removesuffix(TILE_SUFFIX))
    write_labeled_patch(patch, out)
    _emit(value=float(value), label=patch.label_value, valid_fraction=valid_fraction(composite))
    return 0


def cmd_pretrain(cfg: RunConfig) -> int:
    seed = cfg.run_seed
    tiles = _load_tiles(cfg.path("data"))
    profile = profile_for(cfg.profile or "desk", tiles)
    train, val = split_train_val(tiles, cfg.hyper["val_fraction"], seed)
    result = pretrain(
        train,
        profile,
        epochs=cfg.hyper["epochs"],
        lr_peak=cfg.hyper["lr"],
        mask_ratio=cfg.hyper["mask_ratio"],
        seed=seed,
        batch_size=cfg.hyper["batch_size"],
        val_tiles=val,
        augment=not cfg.hyper["no_augment"],
    )
    out = cfg.path("out")
    write_checkpoint(result.checkpoint, out)
    log_path = cfg.paths.get("log") or out.with_suffix(".loss.csv")
    write_loss_log(result.log, log_path)
    train_losses = result.losses()
    _emit(
        tiles=len(train),
        validation=len(val),
        final_train_loss=train_losses[-1] if train_losses else float("nan"),
        checkpoint=out,
    )
    return 0


def _pretrained(cfg: RunConfig) -> ModelCheckpoint | None:
    init = cfg.hyper["init"]
    if init == "scratch":
        return None
    return read_checkpoint(cfg.path("init_ckpt"))


def cmd_finetune(cfg: RunConfig) -> int:
    task = cfg.task or TargetKind.CHLOROPHYLL
    patches = _load_patches(cfg.path("data"), task)
    pretrained = _pretrained(cfg)
    profile_name = cfg.profile or (pretrained.profile_name if pretrained else "desk")
    run = FinetuneConfig(
        seed=cfg.run_seed,
        task=task,
        pretrained=pretrained,
        use_sst=_use_sst(cfg.hyper["bands"], patches[0].tile.bands),
        epochs=cfg.hyper["epochs"],
        lr=cfg.hyper["lr"],
        fraction=cfg.hyper["fraction"],
        batch_size=cfg.hyper["batch_size"],
        augment=not cfg.hyper["no_augment"],
    )
    result = finetune(patches, run, get_profile(profile_name))
    out = cfg.path("out")
    write_checkpoint(result.checkpoint(), out)
    write_loss_log(result.log, cfg.paths.get("log") or out.with_suffix(".loss.csv"))
    _emit(
        patches=len(patches),
        bands=result.bands.count,
        final_train_loss=result.log[-1].loss if result.log else float("nan"),
        checkpoint=out,
    )
    return 0


def cmd_baseline(cfg: RunConfig) -> int:
    patches = _load_patches(cfg.path("data"), cfg.task)
    dataset_bands = patches[0].tile.bands
    bands = resolve_bands(dataset_bands, _use_sst(cfg.hyper["bands"], dataset_bands))
    model = TreeRegressor.fit(patches, bands, n_trees=cfg.hyper["trees"], seed=cfg.run_seed)
    write_ensemble(model.ensemble, cfg.path("out"))
    _emit(patches=len(patches), bands=bands.count, trees=len(model.ensemble.trees))
    return 0


# ── eval ───────────────────────────────────────────────────────────


def _finetune_factory(template: FinetuneConfig, profile_name: str) -> ModelFactory:
    profile = get_profile(profile_name)

    def factory(train: Sequence[LabeledPatch], fold: int) -> FinetunedRegressor:
        return finetune(train, replace(template, seed=template.seed + fold), profile)

    return factory


def _tree_factory(bands: BandSet, n_trees: int, seed: int) -> ModelFactory:
    def factory(train: Sequence[LabeledPatch], fold: int) -> TreeRegressor:
        return TreeRegressor.fit(train, bands, n_trees=n_trees, seed=seed + fold)

    return factory


def _reconstruction_score(
    ckpt: ModelCheckpoint, tiles: Sequence[Tile], mask_ratio: float, seed: int
) -> tuple[float, float]:
    """Overall masked RMSE and its spread across region codes."""
    selected = [t.select_bands(ckpt.bands) for t in tiles]
    losses = evaluate_reconstruction(
        load_mae(ckpt), selected, ckpt.norm, mask_ratio=mask_ratio, seed=seed
    )
    regional = [v for k, v in losses.items() if k != ALL_REGIONS]
    return losses[ALL_REGIONS], float(np.std(regional)) if regional else 0.0


def _eval_rows(
    cfg: RunConfig, patches: Sequence[LabeledPatch]
) -> list[tuple[str, ModelFactory, ModelCheckpoint | None]]:
    seed = cfg.run_seed
    task = cfg.task or TargetKind.CHLOROPHYLL
    dataset_bands = patches[0].tile.bands
    fm = {"fm-olci": cfg.paths.get("fm_olci"), "fm-sst": cfg.paths.get("fm_sst")}
    wanted = (
        list(MODEL_ROWS) if cfg.hyper["models"] == "all" else cfg.hyper["models"].split(",")
    )
    unknown = [m for m in wanted if m not in MODEL_ROWS]
    if unknown:
        raise ConfigurationError(f"unknown models {unknown}", details={"known": list(MODEL_ROWS)})

    rows = []
    for key in MODEL_ROWS:
        if key not in wanted:
            continue
        if key == "trees":
            factory = _tree_factory(dataset_bands, cfg.hyper["trees"], seed)
            rows.append((MODEL_ROWS[key], factory, None))
            continue
        if key.endswith("sst") and not dataset_bands.has_sst:
            logger.info("Dataset has no SST band; skipping %s", MODEL_ROWS[key])
            continue
        ckpt = None
        if key.startswith("fm-"):
            if fm[key] is None:
                continue
            ckpt = read_checkpoint(fm[key])
        template = FinetuneConfig(
            seed=seed,
            task=task,
            pretrained=ckpt,
            use_sst=key.endswith("sst"),
            epochs=cfg.hyper["epochs"],
            lr=cfg.hyper["lr"],
            batch_size=cfg.hyper["batch_size"],
        )
        profile_name = cfg.profile or (ckpt.profile_name if ckpt else "desk")
        rows.append((MODEL_ROWS[key], _finetune_factory(template, profile_name), ckpt))
    if not rows:
        raise ConfigurationError("no model rows selected for evaluation")
    return rows


def cmd_eval(cfg: RunConfig) -> int:
    seed = cfg.run_seed
    task = cfg.task or TargetKind.CHLOROPHYLL
    patches = _load_patches(cfg.path("data"), task)
    folds = kfold_split(len(patches), cfg.hyper["folds"], seed)
    recon_dir = cfg.paths.get("recon_tiles")
    recon_tiles = _load_tiles(recon_dir) if recon_dir is not None else []

    reports: dict[str, MetricReport] = {}
    curves: dict[str, list[AblationPoint]] = {}
    summary_rows: list[SummaryRow] = []
    for name, factory, ckpt in _eval_rows(cfg, patches):
        logger.info("Cross-validating %s", name)
        report = run_cv(patches, factory, folds)
        reports[name] = report
        recon = None
        if ckpt is not None and recon_tiles:
            recon = _reconstruction_score(ckpt, recon_tiles, cfg.hyper["mask_ratio"], seed)
        summary_rows.append(SummaryRow(name, report, recon))
        if cfg.hyper["ablation"]:
            curves[name] = fraction_ablation(patches, factory, folds)

    profile = get_profile(cfg.profile or "desk")
    summary = ResultsSummary(
        task.value, summary_rows, label_pixel_share(patches, profile.input_size)
    ).render()
    out = cfg.path("out")
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "folds.csv", format_fold_table(reports))
    atomic_write_text(out / "summary.txt", summary)
    if curves:
        atomic_write_text(out / "ablation.csv", format_ablation(curves))
    sys.stdout.write(summary)
    return 0


# ── infer ──────────────────────────────────────────────────────────


def _export_reconstruction(cfg: RunConfig, ckpt: ModelCheckpoint, scene: Tile) -> int:
    bands = ckpt.bands
    rec = reconstruct(ckpt, scene.select_bands(bands), cfg.hyper["mask_ratio"], cfg.run_seed)
    out = cfg.path("out")
    out.mkdir(parents=True, exist_ok=True)
    mask = rec.mask.astype(np.float32)[np.newaxis]
    write_tile(Tile.from_planes(bands, rec.original, scene.meta), out / "original.oct")
    write_tile(Tile.from_planes(BandSet((MASK_BAND,)), mask, scene.meta), out / "mask.oct")
    write_tile(
        Tile.from_planes(bands, rec.reconstruction, scene.meta), out / "reconstruction.oct"
    )
    rows = band_histograms(
        {"original": rec.original, "reconstruction": rec.reconstruction}, bands.names
    )
    write_histograms(rows, out / "histograms.csv")
    _emit(masked_pixels=int(rec.mask.sum()), output=out)
    return 0


def cmd_infer(cfg: RunConfig) -> int:
    scene = read_tile(cfg.path("scene"))
    model_bytes = cfg.path("model").read_bytes()
    window = None
    if model_bytes[:4] == CHECKPOINT_MAGIC:
        ckpt = decode_checkpoint(model_bytes)
        if not ckpt.is_regression:
            return _export_reconstruction(cfg, ckpt, scene)
        regressor = FinetunedRegressor.from_checkpoint(ckpt)
        bands, predict_window = regressor.bands, regressor.predict_window
        window = regressor.model.profile.input_size
    elif model_bytes[:4] == ENSEMBLE_MAGIC:
        ensemble = decode_ensemble(model_bytes)
        trees = TreeRegressor(ensemble, BandSet.default(ensemble.n_features))
        bands, predict_window = trees.bands, trees.predict_window
    else:
        raise ConfigurationError(f"{cfg.path('model')} is neither a checkpoint nor an ensemble")

    planes = scene.select_bands(bands).planes
    kwargs = {"window": window} if window is not None else {}
    plane = tiled_inference(predict_window, planes, cfg.hyper["stride"], **kwargs)
    out = cfg.path("out")
    write_tile(Tile.from_planes(BandSet((PREDICTION_BAND,)), plane[np.newaxis], scene.meta), out)
    results: dict[str, Any] = {"output": out}

    reference_path = cfg.paths.get("reference")
    if reference_path is not None:
        reference = read_tile(reference_path)
        if reference.bands.count != 1 or reference.planes.shape[1:] != plane.shape:
            raise ConfigurationError(
                f"reference must be one {plane.shape[0]}x{plane.shape[1]} band"
            )
        ref = reference.planes[0]
        dynamic_range = cfg.hyper["dynamic_range"]
        if dynamic_range is None:
            dynamic_range = float(np.nanmax(ref) - np.nanmin(ref))
        results["ssim"] = ssim(plane, ref, dynamic_range)
        rows = band_histograms(
            {"inferred": plane[np.newaxis], "reference": ref[np.newaxis]}, (PREDICTION_BAND,)
        )
        write_histograms(rows, out.with_name(out.name.removesuffix(TILE_SUFFIX) + ".hist.csv"))
    _emit(**results)
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    profile = get_profile(cfg.profile or "tiny")
    kwargs = {"eps": cfg.hyper["eps"], "num_samples": cfg.hyper["samples"]}
    reports = [
        check_mae_gradients(profile, cfg.run_seed, **kwargs),
        check_regression_gradients(profile, cfg.run_seed, **kwargs),
    ]
    for report in reports:
        print(f"{report.loss} max_rel_error={report.max_rel_error:.3e}")
    failed = [r.loss for r in reports if not r.passed]
    if failed:
        raise OceanFMError(
            f"gradient check failed for {', '.join(failed)}", code="GRADCHECK"
        )
    return 0


# ── Parser ─────────────────────────────────────────────────────────


class _InitAction(argparse.Action):
    """``--init scratch`` or ``--init ckpt PATH``."""

    def __call__(
        self,
        parser: argparse.ArgumentParser,
        namespace: argparse.Namespace,
        values: Any,
        option_string: str | None = None,
    ) -> None:
        if values == ["scratch"]:
            namespace.init, namespace.init_ckpt = "scratch", None
        elif len(values) == 2 and values[0] == "ckpt":
            namespace.init, namespace.init_ckpt = "ckpt", Path(values[1])
        else:
            parser.error("--init takes 'scratch' or 'ckpt PATH'")


def _fraction(text: str) -> float:
    value = float(text)
    if value not in FRACTION_GRID:
        raise argparse.ArgumentTypeError(f"{value} is not one of {FRACTION_GRID}")
    return value


Handler = Callable[[RunConfig], int]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--log-level", choices=LOG_LEVELS, default="WARNING")

    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, required=True)

    task = argparse.ArgumentParser(add_help=False)
    task.add_argument("--task", choices=[k.value for k in TargetKind], default="chl")

    profile = argparse.ArgumentParser(add_help=False)
    profile.add_argument("--profile", choices=sorted(PROFILES))

    parser = argparse.ArgumentParser(
        prog="ocean-fm", description="Ocean-colour foundation model pipeline."
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(
        name: str, handler: Handler, help_: str, *parents: argparse.ArgumentParser
    ) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_, parents=[common, *parents])
        p.set_defaults(handler=handler)
        return p

    p = add("synth", cmd_synth, "generate synthetic tiles or labeled patches", seeded, task)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--bands", choices=BAND_CHOICES, default="olci")
    p.add_argument("--size", type=int, default=SOURCE_TILE_SIZE)
    p.add_argument("--cloud-fraction", type=float, default=0.0)
    p.add_argument("--regions", default="SYN")
    p.add_argument("--labeled", action="store_true", help="emit 80x80 labeled patches")

    p = add("sample", cmd_sample, "split scenes and draw a balanced tile sample", seeded)
    p.add_argument("--scenes", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--per-region", type=int, required=True)
    p.add_argument("--threshold", type=float, default=MIN_VALID_FRACTION)
    p.add_argument("--exclude", default=",".join(sorted(DEFAULT_EXCLUDED_REGIONS)))

    p = add("composite", cmd_composite, "median-composite a stack into a labeled patch", task)
    p.add_argument("--stack", type=Path, required=True, help="TSV of tile path and day")
    p.add_argument("--center-day", type=float, required=True)
    p.add_argument("--window", type=float, default=COMPOSITE_WINDOW_DAYS)
    p.add_argument("--value", type=float)
    p.add_argument("--depth-profile", type=Path, help="CSV of depth,production")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(_path_args=("depth_profile",))

    p = add("pretrain", cmd_pretrain, "masked-autoencoder pre-training", seeded, profile)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--log", type=Path)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=DEFAULT_PEAK_LR)
    p.add_argument("--mask-ratio", type=float, default=DEFAULT_MASK_RATIO)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--val-fraction", type=float, default=0.0)
    p.add_argument("--no-augment", action="store_true")
    p.set_defaults(_path_args=("log",))

    p = add("finetune", cmd_finetune, "sparse-label regression fine-tuning", seeded, task, profile)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--log", type=Path)
    p.add_argument(
        "--init", nargs="+", action=_InitAction, default="scratch", metavar="scratch|ckpt PATH"
    )
    p.add_argument("--bands", choices=BAND_CHOICES, default="olci")
    p.add_argument("--fraction", type=_fraction, default=1.0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--no-augment", action="store_true")
    p.set_defaults(init_ckpt=None, _path_args=("log", "init_ckpt"))

    p = add("baseline", cmd_baseline, "fit the per-pixel tree ensemble", seeded, task)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--bands", choices=BAND_CHOICES, default="olci")
    p.add_argument("--trees", type=int, default=DEFAULT_TREES)

    p = add("eval", cmd_eval, "k-fold cross-validation and ablation", seeded, task, profile)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--folds", type=int, default=DEFAULT_FOLDS)
    p.add_argument("--models", default="all", help=f"comma list of {', '.join(MODEL_ROWS)}")
    p.add_argument("--fm-olci", type=Path, help="pre-trained OLCI checkpoint")
    p.add_argument("--fm-sst", type=Path, help="pre-trained OLCI + SST checkpoint")
    p.add_argument("--recon-tiles", type=Path, help="tiles for the reconstruction column")
    p.add_argument("--mask-ratio", type=float, default=DEFAULT_MASK_RATIO)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--trees", type=int, default=DEFAULT_TREES)
    p.add_argument("--ablation", action="store_true")
    p.set_defaults(_path_args=("fm_olci", "fm_sst", "recon_tiles"))

    p = add("infer", cmd_infer, "tiled inference or reconstruction export")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True, help="CKP1 checkpoint or ETR1 ensemble")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    p.add_argument("--reference", type=Path)
    p.add_argument("--dynamic-range", type=float)
    p.add_argument("--seed", type=int, help="mask seed for reconstruction export")
    p.add_argument("--mask-ratio", type=float, default=DEFAULT_MASK_RATIO)
    p.set_defaults(_path_args=("reference",))

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of both losses", seeded, profile)
    p.add_argument("--eps", type=float, default=GRADCHECK_EPS)
    p.add_argument("--samples", type=int, default=50)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=args.log_level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    handler: Handler = args.handler
    try:
        cfg = RunConfig.from_namespace(args)
        torch.set_num_threads(cfg.threads)
        torch.use_deterministic_algorithms(True)
        logger.info("Running %s with seed %s", cfg.command, cfg.seed)
        return handler(cfg)
    except OceanFMError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[IO]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
