"""CKP1 model checkpoints: profile name, normalization statistics, named tensors.

Layout (little-endian)::

    magic "CKP1" | u16 version | u8 len + profile name
    | u16 band count | count x (f32 mean, f32 std)
    | u32 parameter count
    | per parameter: u16 len + name | u8 ndim (<= 8) | ndim x u32 dims | f32 data
"""

from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ocean_fm.config import ModelProfile, get_profile
from ocean_fm.data.atomic import atomic_write_bytes
from ocean_fm.data.normalize import NormStats
from ocean_fm.data.tiles import BandSet
from ocean_fm.errors import ConfigurationError, FormatError, ValidationError
from ocean_fm.nn.core import ParamSet

logger = logging.getLogger(__name__)

MAGIC = b"CKP1"
VERSION = 1
REGRESSION_PREFIX = "head."
MAX_NDIM = 8


@dataclass(frozen=True, eq=False)
class ModelCheckpoint:
    profile_name: str
    norm: NormStats
    params: ParamSet
    version: int = VERSION

    @classmethod
    def from_module(
        cls, module: nn.Module, profile: ModelProfile, norm: NormStats
    ) -> ModelCheckpoint:
        """Snapshot a model's parameters (detached copies)."""
        if norm.count != profile.in_channels:
            raise ConfigurationError(
                f"{norm.count} normalization bands for a {profile.in_channels}-channel profile"
            )
        snapshot = {
            name: nn.Parameter(tensor, requires_grad=False)
            for name, tensor in ParamSet.from_module(module).snapshot().items()
        }
        return cls(profile.name, norm, ParamSet(snapshot))

    @property
    def band_count(self) -> int:
        return self.norm.count

    @property
    def bands(self) -> BandSet:
        return BandSet.default(self.band_count)

    @property
    def is_regression(self) -> bool:
        return any(name.startswith(REGRESSION_PREFIX) for name in self.params.names())

    def profile(self) -> ModelProfile:
        return get_profile(self.profile_name, in_channels=self.band_count)

    def state_dict(self) -> dict[str, torch.Tensor]:
        return {name: p.detach() for name, p in self.params.params.items()}

    def load_into(self, module: nn.Module) -> nn.Module:
        """Copy every tensor into ``module``; names and shapes must match exactly."""
        expected = ParamSet.from_module(module).shapes()
        if expected != self.params.shapes():
            missing = sorted(set(expected) - set(self.params.names()))
            unexpected = sorted(set(self.params.names()) - set(expected))
            raise ConfigurationError(
                f"checkpoint does not match profile '{self.profile_name}'",
                details={"missing": missing, "unexpected": unexpected},
            )
        with torch.no_grad():
            for name, p in module.named_parameters():
                p.copy_(self.params[name])
        return module

    def equals(self, other: ModelCheckpoint) -> bool:
        """Bit-exact comparison of every field."""
        if (
            self.profile_name != other.profile_name
            or self.version != other.version
            or self.norm.mean.tobytes() != other.norm.mean.tobytes()
            or self.norm.std.tobytes() != other.norm.std.tobytes()
            or self.params.names() != other.params.names()
        ):
            return False
        return all(
            _tensor_bytes(p) == _tensor_bytes(other.params[name])
            for name, p in self.params.params.items()
        )


def _tensor_bytes(tensor: torch.Tensor) -> bytes:
    return tensor.detach().cpu().numpy().astype("<f4").tobytes()


# ── Encoding ───────────────────────────────────────────────────────


def encode_checkpoint(ckpt: ModelCheckpoint) -> bytes:
    name = ckpt.profile_name.encode("ascii")
    parts = [MAGIC, struct.pack("<HB", ckpt.version, len(name)), name]
    parts.append(struct.pack("<H", ckpt.band_count))
    stats = np.stack([ckpt.norm.mean, ckpt.norm.std], axis=1).astype("<f4")
    parts.append(stats.tobytes())
    parts.append(struct.pack("<I", len(ckpt.params)))
    for pname, p in ckpt.params.params.items():
        raw = pname.encode("ascii")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{p.dim()}I", p.dim(), *p.shape))
        parts.append(_tensor_bytes(p))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.data):
            raise FormatError(f"truncated {what}", offset=self.pos)
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes) -> ModelCheckpoint:
    reader = _Reader(data)
    if reader.take(4, "magic") != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}", offset=0)
    version, name_len = reader.unpack("<HB", "header")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    try:
        profile_name = reader.take(name_len, "profile name").decode("ascii")
    except UnicodeDecodeError:
        raise FormatError("profile name is not ASCII", offset=7) from None

    (band_count,) = reader.unpack("<H", "band count")
    stats_at = reader.pos
    stats = np.frombuffer(reader.take(8 * band_count, "band statistics"), dtype="<f4")
    stats = stats.reshape(band_count, 2).astype(np.float32)
    try:
        norm = NormStats(stats[:, 0].copy(), stats[:, 1].copy())
    except ValidationError as exc:
        raise FormatError(f"bad band statistics: {exc}", offset=stats_at) from None

    (count,) = reader.unpack("<I", "parameter count")
    params: dict[str, nn.Parameter] = {}
    for _ in range(count):
        name_at = reader.pos
        (length,) = reader.unpack("<H", "parameter name length")
        try:
            pname = reader.take(length, "parameter name").decode("ascii")
        except UnicodeDecodeError:
            raise FormatError("parameter name is not ASCII", offset=name_at + 2) from None
        if pname in params:
            raise FormatError(f"duplicate parameter '{pname}'", offset=name_at)
        (ndim,) = reader.unpack("<B", "ndim")
        if ndim > MAX_NDIM:
            raise FormatError(f"'{pname}' claims {ndim} dimensions", offset=reader.pos - 1)
        dims_at = reader.pos
        dims = reader.unpack(f"<{ndim}I", "dims")
        numel = math.prod(dims)
        if 4 * numel > len(data) - reader.pos:
            raise FormatError(
                f"'{pname}' of shape {dims} overruns the buffer", offset=dims_at
            )
        data_at = reader.pos
        values = np.frombuffer(reader.take(4 * numel, f"data of '{pname}'"), dtype="<f4")
        try:
            tensor = torch.from_numpy(values.astype(np.float32).reshape(dims))
        except ValueError as exc:
            raise FormatError(f"bad data for '{pname}': {exc}", offset=data_at) from None
        params[pname] = nn.Parameter(tensor, requires_grad=False)
    if reader.pos != len(data):
        raise FormatError(f"{len(data) - reader.pos} trailing bytes", offset=reader.pos)
    return ModelCheckpoint(profile_name, norm, ParamSet(params), version=version)


def write_checkpoint(ckpt: ModelCheckpoint, path: str | os.PathLike[str]) -> int:
    written = atomic_write_bytes(path, encode_checkpoint(ckpt))
    logger.info("Wrote checkpoint %s (%d tensors, %d bytes)", path, len(ckpt.params), written)
    return written


def read_checkpoint(path: str | os.PathLike[str]) -> ModelCheckpoint:
    return decode_checkpoint(Path(path).read_bytes())
