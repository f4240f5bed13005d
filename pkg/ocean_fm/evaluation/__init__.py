"""Cross-validation, metrics and large-area inference."""

from ocean_fm.evaluation.cv import (
    AblationPoint,
    FoldFailure,
    FoldPlan,
    MetricReport,
    ModelFactory,
    PatchRegressor,
    ResultsSummary,
    SummaryRow,
    format_ablation,
    format_fold_table,
    fraction_ablation,
    kfold_split,
    run_cv,
)
from ocean_fm.evaluation.inference import coverage, tiled_inference, window_offsets
from ocean_fm.evaluation.metrics import (
    HistogramRow,
    band_histograms,
    label_pixel_share,
    rmse,
    ssim,
    write_histograms,
)

__all__ = [
    "AblationPoint",
    "FoldFailure",
    "FoldPlan",
    "HistogramRow",
    "MetricReport",
    "ModelFactory",
    "PatchRegressor",
    "ResultsSummary",
    "SummaryRow",
    "band_histograms",
    "coverage",
    "format_ablation",
    "format_fold_table",
    "fraction_ablation",
    "kfold_split",
    "label_pixel_share",
    "rmse",
    "ssim",
    "tiled_inference",
    "window_offsets",
    "write_histograms",
]
