"""Per-epoch loss records shared by the training loops."""

from __future__ import annotations

import csv
import io
import os
from collections.abc import Sequence
from typing import NamedTuple

from ocean_fm.data.atomic import atomic_write_text

ALL_REGIONS = "ALL"


class LossRecord(NamedTuple):
    epoch: int
    split: str
    region: str
    loss: float


def format_loss_log(log: Sequence[LossRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "split", "region", "loss"])
    for r in log:
        writer.writerow([r.epoch, r.split, r.region, f"{r.loss:.8g}"])
    return buf.getvalue()


def write_loss_log(log: Sequence[LossRecord], path: str | os.PathLike[str]) -> int:
    return atomic_write_text(path, format_loss_log(log))
