"""Central finite-difference verification of autograd gradients."""

from __future__ import annotations

import logging
from collections.abc import Callable

import torch

from ocean_fm.errors import ConfigurationError, DeterminismError
from ocean_fm.nn.core import ParamSet

logger = logging.getLogger(__name__)

_REL_FLOOR = 1e-8


def _evaluate(loss_fn: Callable[[], torch.Tensor]) -> float:
    with torch.no_grad():
        return float(loss_fn())


def finite_diff_check(
    loss_fn: Callable[[], torch.Tensor],
    params: ParamSet,
    eps: float = 1e-3,
    *,
    num_samples: int = 50,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Coordinates are sampled uniformly without replacement across all
    parameters (every coordinate when there are fewer than ``num_samples``).
    """
    if not 1e-5 <= eps <= 1e-2:
        raise ConfigurationError(f"eps must lie in [1e-5, 1e-2], got {eps}")

    first, second = _evaluate(loss_fn), _evaluate(loss_fn)
    if first != second:
        raise DeterminismError(
            "loss function returned different values for identical parameters",
            details={"first": first, "second": second},
        )

    params.zero_grad()
    loss = loss_fn()
    if loss.requires_grad:
        loss.backward()
    analytic = {name: grad.detach().clone() for name, _, grad in params}

    coords = [(name, i) for name, p in params.params.items() for i in range(p.numel())]
    if len(coords) > num_samples:
        gen = torch.Generator().manual_seed(seed)
        picks = torch.randperm(len(coords), generator=gen)[:num_samples].tolist()
        coords = [coords[i] for i in sorted(picks)]

    worst = 0.0
    worst_coord: tuple[str, int] | None = None
    for name, index in coords:
        flat = params[name].data.view(-1)
        original = flat[index].item()
        flat[index] = original + eps
        plus = _evaluate(loss_fn)
        flat[index] = original - eps
        minus = _evaluate(loss_fn)
        flat[index] = original

        numeric = (plus - minus) / (2.0 * eps)
        exact = float(analytic[name].view(-1)[index])
        rel = abs(exact - numeric) / max(abs(exact), abs(numeric), _REL_FLOOR)
        if rel > worst:
            worst, worst_coord = rel, (name, index)

    logger.debug("Gradient check over %d coordinates: max rel error %.3e at %s",
                 len(coords), worst, worst_coord)
    return worst
