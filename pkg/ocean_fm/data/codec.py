"""OCT1 tile format reader/writer.

Layout (little-endian)::

    magic "OCT1" | u16 version | u16 C | u16 H | u16 W | i16 year | u8 month
    | 7-byte region (ASCII, space padded) | f64 lat | f64 lon
    | C x (u8 name length + ASCII name)
    | C*H*W f32 planes (band-major, row-major)
    | C bit-packed validity planes (row-major, MSB first, each padded to a byte)

Labeled patches are stored as two OCT1 files: the bands, and a single-band
label tile named ``LABEL_<KIND>`` next to it (``<stem>.label.oct``).
"""

from __future__ import annotations

import logging
import math
import os
import struct
from pathlib import Path

import numpy as np

from ocean_fm.data.atomic import atomic_write_bytes
from ocean_fm.data.tiles import BandSet, LabeledPatch, TargetKind, Tile, TileMeta
from ocean_fm.errors import FormatError, ValidationError

logger = logging.getLogger(__name__)

MAGIC = b"OCT1"
VERSION = 1
_HEADER = struct.Struct("<4sHHHHhB7sdd")
HEADER_SIZE = _HEADER.size
TILE_SUFFIX = ".oct"
_LABEL_SUFFIX = ".label.oct"
_LABEL_PREFIX = "LABEL_"


def validity_bytes(height: int, width: int) -> int:
    return math.ceil(height * width / 8)


def encode_tile(tile: Tile) -> bytes:
    tile.validate()
    meta = tile.meta
    region = meta.region.encode("ascii").ljust(7, b" ")
    parts = [
        _HEADER.pack(
            MAGIC, VERSION, tile.bands.count, tile.height, tile.width,
            meta.year, meta.month, region, meta.lat, meta.lon,
        )
    ]
    for name in tile.bands.names:
        raw = name.encode("ascii")
        parts.append(struct.pack("<B", len(raw)) + raw)
    parts.append(tile.planes.astype("<f4", copy=False).tobytes(order="C"))
    flat = tile.validity.reshape(tile.bands.count, -1)
    parts.append(np.packbits(flat, axis=1).tobytes(order="C"))
    return b"".join(parts)


def decode_tile(data: bytes) -> Tile:
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}", offset=0)
    if len(data) < HEADER_SIZE:
        raise FormatError("truncated header", offset=len(data))
    (_, version, count, height, width, year, month,
     region, lat, lon) = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if count == 0:
        raise FormatError("band count must be positive", offset=6)
    if height == 0 or width == 0:
        raise FormatError("tile extent must be positive", offset=8)

    pos = HEADER_SIZE
    names: list[str] = []
    for _ in range(count):
        if pos >= len(data):
            raise FormatError("truncated band name table", offset=pos)
        length = data[pos]
        end = pos + 1 + length
        if length == 0 or end > len(data):
            raise FormatError("bad band name length", offset=pos)
        try:
            names.append(data[pos + 1:end].decode("ascii"))
        except UnicodeDecodeError:
            raise FormatError("band name is not ASCII", offset=pos + 1) from None
        pos = end

    plane_count = count * height * width
    plane_start = pos
    mask_start = plane_start + 4 * plane_count
    row_bytes = validity_bytes(height, width)
    expected = mask_start + count * row_bytes
    if len(data) < expected:
        raise FormatError(
            f"truncated file: expected {expected} bytes, got {len(data)}", offset=len(data)
        )
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes", offset=expected)

    planes = (
        np.frombuffer(data, dtype="<f4", count=plane_count, offset=plane_start)
        .astype(np.float32)
        .reshape(count, height, width)
    )
    packed = np.frombuffer(data, dtype=np.uint8, count=count * row_bytes, offset=mask_start)
    bits = np.unpackbits(packed.reshape(count, row_bytes), axis=1)
    if bits[:, height * width:].any():
        raise FormatError("non-zero validity padding bits", offset=mask_start)
    validity = bits[:, : height * width].astype(bool).reshape(count, height, width)

    nan = np.isnan(planes)
    bad = np.flatnonzero(nan & validity)
    if bad.size:
        offset = plane_start + 4 * int(bad[0])
        raise ValidationError(
            f"valid pixel stores NaN (at byte {offset})", details={"offset": offset}
        )
    bad = np.flatnonzero(~nan & ~validity)
    if bad.size:
        offset = plane_start + 4 * int(bad[0])
        raise ValidationError(
            f"invalid pixel stores a value (at byte {offset})", details={"offset": offset}
        )

    try:
        meta = TileMeta(
            region=region.decode("ascii").rstrip(" "),
            year=year,
            month=month,
            lat=lat,
            lon=lon,
        )
        bands = BandSet(tuple(names))
    except (UnicodeDecodeError, ValidationError) as exc:
        raise FormatError(f"bad header field: {exc}", offset=HEADER_SIZE - 23) from None
    return Tile(bands, planes, validity, meta).validate()


def write_tile(tile: Tile, path: str | os.PathLike[str]) -> int:
    """Write ``tile`` atomically; returns the byte count."""
    written = atomic_write_bytes(path, encode_tile(tile))
    logger.debug("Wrote %s (%d bytes)", path, written)
    return written


def read_tile(path: str | os.PathLike[str]) -> Tile:
    return decode_tile(Path(path).read_bytes())


# ── Labeled patches ────────────────────────────────────────────────


def label_path_for(path: str | os.PathLike[str]) -> Path:
    p = Path(path)
    return p.with_name(p.name.removesuffix(TILE_SUFFIX) + _LABEL_SUFFIX)


def is_label_file(path: str | os.PathLike[str]) -> bool:
    return Path(path).name.endswith(_LABEL_SUFFIX)


def write_labeled_patch(patch: LabeledPatch, path: str | os.PathLike[str]) -> int:
    label = patch.label_plane[np.newaxis].astype(np.float32)
    label_tile = Tile.from_planes(
        BandSet((_LABEL_PREFIX + patch.kind.value.upper(),)), label, patch.tile.meta
    )
    written = write_tile(patch.tile, path)
    return written + write_tile(label_tile, label_path_for(path))


def read_labeled_patch(path: str | os.PathLike[str]) -> LabeledPatch:
    tile = read_tile(path)
    label_tile = read_tile(label_path_for(path))
    (name,) = label_tile.bands.names
    try:
        kind = TargetKind(name.removeprefix(_LABEL_PREFIX).lower())
    except ValueError:
        raise FormatError(f"unknown label band {name!r}", offset=HEADER_SIZE) from None
    stem = Path(path).name.removesuffix(TILE_SUFFIX)
    return LabeledPatch(tile, label_tile.planes[0].copy(), kind, source_id=stem)


def list_tile_files(directory: str | os.PathLike[str]) -> list[Path]:
    """Band tiles in a directory (label companions excluded), sorted by name."""
    return sorted(
        p for p in Path(directory).glob(f"*{TILE_SUFFIX}") if not is_label_file(p)
    )
