"""Value types and on-disk artifact formats."""

from ocean_fm.data.checkpoint import ModelCheckpoint, read_checkpoint, write_checkpoint
from ocean_fm.data.codec import read_labeled_patch, read_tile, write_labeled_patch, write_tile
from ocean_fm.data.normalize import NormStats, compute_norm_stats
from ocean_fm.data.tiles import (
    BandSet,
    LabeledPatch,
    TargetKind,
    Tile,
    TileMeta,
    label_block_slice,
    validate_labeled_patch,
)

__all__ = [
    "BandSet",
    "LabeledPatch",
    "ModelCheckpoint",
    "NormStats",
    "TargetKind",
    "Tile",
    "TileMeta",
    "compute_norm_stats",
    "label_block_slice",
    "read_checkpoint",
    "read_labeled_patch",
    "read_tile",
    "validate_labeled_patch",
    "write_checkpoint",
    "write_labeled_patch",
    "write_tile",
]
