"""Non-deep baselines."""

from ocean_fm.baselines.trees import (
    PixelRows,
    TreeEnsemble,
    TreeRegressor,
    extract_pixel_features,
    fit_trees,
    predict_trees,
    read_ensemble,
    write_ensemble,
)

__all__ = [
    "PixelRows",
    "TreeEnsemble",
    "TreeRegressor",
    "extract_pixel_features",
    "fit_trees",
    "predict_trees",
    "read_ensemble",
    "write_ensemble",
]
