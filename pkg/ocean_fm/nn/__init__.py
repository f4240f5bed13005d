"""Numeric foundation: dense layers, transformer blocks, AdamW, gradient checks."""

from ocean_fm.nn.core import (
    Dense,
    MultiHeadAttention,
    ParamSet,
    TransformerBlock,
    dense_forward,
    transformer_block_forward,
)
from ocean_fm.nn.gradcheck import finite_diff_check
from ocean_fm.nn.optim import OptimizerState, adamw_step

__all__ = [
    "Dense",
    "MultiHeadAttention",
    "OptimizerState",
    "ParamSet",
    "TransformerBlock",
    "adamw_step",
    "dense_forward",
    "finite_diff_check",
    "transformer_block_forward",
]
