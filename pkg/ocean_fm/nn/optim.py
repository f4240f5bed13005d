"""AdamW with linear warmup and cosine decay."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import torch

from ocean_fm.errors import ConfigurationError, TrainingDivergenceError
from ocean_fm.nn.core import ParamSet

logger = logging.getLogger(__name__)

DEFAULT_BETAS = (0.9, 0.95)
DEFAULT_WEIGHT_DECAY = 0.05
DEFAULT_WARMUP_FRACTION = 0.05


@dataclass
class OptimizerState:
    """Step counter, AdamW moments and the learning-rate schedule."""
    peak_lr: float
    total_steps: int
    warmup_steps: int
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    betas: tuple[float, float] = DEFAULT_BETAS
    eps: float = 1e-8
    step: int = 0
    optimizer: torch.optim.AdamW | None = field(default=None, repr=False)
    _names: dict[int, str] = field(default_factory=dict, repr=False)

    @classmethod
    def create(
        cls,
        params: ParamSet,
        *,
        peak_lr: float,
        total_steps: int,
        warmup_fraction: float = DEFAULT_WARMUP_FRACTION,
        weight_decay: float = DEFAULT_WEIGHT_DECAY,
        betas: tuple[float, float] = DEFAULT_BETAS,
    ) -> OptimizerState:
        if peak_lr < 0 or total_steps < 0 or not 0.0 <= warmup_fraction < 1.0:
            raise ConfigurationError(
                "invalid optimizer schedule",
                details={
                    "peak_lr": peak_lr,
                    "total_steps": total_steps,
                    "warmup_fraction": warmup_fraction,
                },
            )
        state = cls(
            peak_lr=peak_lr,
            total_steps=total_steps,
            warmup_steps=int(warmup_fraction * total_steps),
            weight_decay=weight_decay,
            betas=betas,
        )
        state.optimizer = torch.optim.AdamW(
            list(params.params.values()),
            lr=peak_lr,
            betas=betas,
            eps=state.eps,
            weight_decay=weight_decay,
        )
        state._names = {id(p): name for name, p in params.params.items()}
        return state

    def lr_at(self, step: int) -> float:
        """Linear warmup to ``peak_lr`` then cosine decay to zero at ``total_steps``."""
        if self.total_steps <= 0:
            return self.peak_lr
        if step < self.warmup_steps:
            return self.peak_lr * (step + 1) / self.warmup_steps
        span = max(1, self.total_steps - self.warmup_steps)
        progress = min(1.0, (step - self.warmup_steps) / span)
        return 0.5 * self.peak_lr * (1.0 + math.cos(math.pi * progress))

    def current_lr(self) -> float:
        return self.lr_at(self.step)

    def moments(self, name: str) -> tuple[torch.Tensor, torch.Tensor] | None:
        """First/second moment tensors for a named parameter, once it has stepped."""
        assert self.optimizer is not None
        for group in self.optimizer.param_groups:
            for p in group["params"]:
                if self._names.get(id(p)) == name:
                    st = self.optimizer.state.get(p)
                    if not st:
                        return None
                    return st["exp_avg"], st["exp_avg_sq"]
        raise KeyError(name)


def adamw_step(params: ParamSet, opt: OptimizerState, lr: float) -> ParamSet:
    """Apply one decoupled-weight-decay Adam update at learning rate ``lr``."""
    if opt.optimizer is None:
        raise ConfigurationError("optimizer state was not created with OptimizerState.create")
    for name, p in params.params.items():
        if p.grad is not None and not bool(torch.isfinite(p.grad).all()):
            raise TrainingDivergenceError(
                f"non-finite gradient in parameter '{name}'",
                details={"parameter": name, "step": opt.step},
            )
    for group in opt.optimizer.param_groups:
        group["lr"] = lr
    opt.optimizer.step()
    opt.step += 1
    return params
