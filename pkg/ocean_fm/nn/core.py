"""Numeric building blocks: dense layers, attention, pre-norm transformer blocks.

Tensors are plain ``torch.Tensor`` values; reverse-mode gradients come from
torch autograd. Weight matrices of :class:`Dense` are stored input-major
(``Din x Dout``) so input rows can be sliced out when an input channel is
dropped.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ocean_fm.errors import ConfigurationError, DimensionError

LAYER_NORM_EPS = 1e-6


def dense_forward(x: torch.Tensor, w: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """``out[..., j] = sum_k x[..., k] * w[k, j] + b[j]``."""
    if w.dim() != 2:
        raise DimensionError(f"weight must be 2-D, got shape {tuple(w.shape)}")
    if x.dim() < 1 or x.shape[-1] != w.shape[0]:
        raise DimensionError(
            f"input feature size {tuple(x.shape)[-1:]} does not match weight rows {w.shape[0]}",
            details={"x": tuple(x.shape), "w": tuple(w.shape)},
        )
    if b.shape != (w.shape[1],):
        raise DimensionError(
            f"bias shape {tuple(b.shape)} does not match weight columns {w.shape[1]}",
            details={"b": tuple(b.shape), "w": tuple(w.shape)},
        )
    return torch.matmul(x, w) + b


class Dense(nn.Module):
    """Affine layer backed by :func:`dense_forward`."""

    def __init__(self, in_features: int, out_features: int) -> None:
        super().__init__()
        self.weight = nn.Parameter(torch.empty(in_features, out_features))
        self.bias = nn.Parameter(torch.zeros(out_features))
        nn.init.xavier_uniform_(self.weight)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return dense_forward(x, self.weight, self.bias)


class MultiHeadAttention(nn.Module):
    """Softmax self-attention; probabilities are materialized so they can be inspected."""

    def __init__(self, dim: int, num_heads: int) -> None:
        super().__init__()
        if num_heads < 1 or dim % num_heads:
            raise ConfigurationError(
                f"dimension {dim} not divisible by {num_heads} heads",
                details={"dim": dim, "num_heads": num_heads},
            )
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.qkv = Dense(dim, 3 * dim)
        self.proj = Dense(dim, dim)

    def forward(
        self, x: torch.Tensor, *, return_attention: bool = False
    ) -> torch.Tensor | tuple[torch.Tensor, torch.Tensor]:
        batch, tokens, dim = x.shape
        qkv = self.qkv(x).reshape(batch, tokens, 3, self.num_heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)
        scores = torch.matmul(q, k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        attn = scores.softmax(dim=-1)
        out = torch.matmul(attn, v).transpose(1, 2).reshape(batch, tokens, dim)
        out = self.proj(out)
        if return_attention:
            return out, attn
        return out


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int) -> None:
        super().__init__()
        self.fc1 = Dense(dim, hidden)
        self.fc2 = Dense(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class TransformerBlock(nn.Module):
    """Pre-norm block: ``x + attn(LN(x))`` followed by ``x + mlp(LN(x))``."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float = 4.0) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=LAYER_NORM_EPS)
        self.attn = MultiHeadAttention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim, eps=LAYER_NORM_EPS)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(
        self, x: torch.Tensor, *, return_attention: bool = False
    ) -> torch.Tensor | tuple[torch.Tensor, torch.Tensor]:
        attended = self.attn(self.norm1(x), return_attention=return_attention)
        if return_attention:
            attended, attn = attended
        x = x + attended
        x = x + self.mlp(self.norm2(x))
        if return_attention:
            return x, attn
        return x


def transformer_block_forward(
    tokens: torch.Tensor,
    block: TransformerBlock,
    *,
    return_attention: bool = False,
) -> torch.Tensor | tuple[torch.Tensor, torch.Tensor]:
    """Run one block over ``T x D`` (or ``B x T x D``) tokens."""
    unbatched = tokens.dim() == 2
    if unbatched:
        tokens = tokens.unsqueeze(0)
    if tokens.dim() != 3 or tokens.shape[-1] != block.norm1.normalized_shape[0]:
        raise DimensionError(
            f"tokens of shape {tuple(tokens.shape)} do not fit block width "
            f"{block.norm1.normalized_shape[0]}"
        )
    result = block(tokens, return_attention=return_attention)
    if not unbatched:
        return result
    if return_attention:
        out, attn = result
        return out.squeeze(0), attn.squeeze(0)
    return result.squeeze(0)


# ── Named parameter sets ───────────────────────────────────────────


@dataclass
class ParamSet:
    """Ordered, uniquely named parameters with their gradients."""
    params: dict[str, nn.Parameter]

    @classmethod
    def from_module(cls, module: nn.Module, prefix: str = "") -> ParamSet:
        return cls({
            name: p for name, p in module.named_parameters()
            if name.startswith(prefix)
        })

    @classmethod
    def from_tensors(cls, tensors: dict[str, torch.Tensor]) -> ParamSet:
        """Wrap loose leaf tensors (inputs, toy parameters) for gradient tooling."""
        out: dict[str, nn.Parameter] = {}
        for name, tensor in tensors.items():
            if not isinstance(tensor, nn.Parameter):
                raise DimensionError(f"'{name}' must be an nn.Parameter")
            out[name] = tensor
        return cls(out)

    def __len__(self) -> int:
        return len(self.params)

    def __iter__(self) -> Iterator[tuple[str, torch.Tensor, torch.Tensor]]:
        for name, p in self.params.items():
            yield name, p, self.gradient(name)

    def __getitem__(self, name: str) -> nn.Parameter:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: tuple(p.shape) for name, p in self.params.items()}

    def num_elements(self) -> int:
        return sum(p.numel() for p in self.params.values())

    def gradient(self, name: str) -> torch.Tensor:
        p = self.params[name]
        if p.grad is None:
            return torch.zeros_like(p)
        return p.grad

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def slice(self, prefix: str) -> ParamSet:
        return ParamSet({k: v for k, v in self.params.items() if k.startswith(prefix)})

    def snapshot(self) -> dict[str, torch.Tensor]:
        """Detached copies of every tensor, in order."""
        return {name: p.detach().clone() for name, p in self.params.items()}
