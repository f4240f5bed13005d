"""Dataset construction for pre-training and fine-tuning."""

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
    SampleResult,
    Shortfall,
    balanced_sample,
    passes_filter,
    read_manifest,
    split_scene,
    valid_fraction,
    write_manifest,
)

__all__ = [
    "DepthProfile",
    "ManifestEntry",
    "SampleBudget",
    "SampleResult",
    "SceneStack",
    "Shortfall",
    "balanced_sample",
    "integrate_depth",
    "make_labeled_patch",
    "median_composite",
    "passes_filter",
    "read_manifest",
    "split_scene",
    "valid_fraction",
    "write_manifest",
]
