"""Adam with bias correction and the warmup/decay learning-rate schedule.

Training uses two parameter groups with separate peak learning rates (the
feature extractor versus everything trained from scratch); each group
carries its own AdamState and LrSchedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on ``params``."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for key, grad in grads.items():
        p = params[key]
        if grad.shape != p.shape:
            raise DataError(f"gradient shape {grad.shape} does not match "
                            f"parameter {key} shape {p.shape}")
        if key not in state.m:
            state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        m = state.m[key]
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass(frozen=True)
class LrSchedule:
    """Linear ramp 0 -> peak over warmup, then linear decay to 0 at total."""

    peak_lr: float
    warmup_steps: int
    total_steps: int

    def __post_init__(self):
        if not 0 < self.warmup_steps < self.total_steps:
            raise DataError(
                f"need 0 < warmup ({self.warmup_steps}) < total ({self.total_steps})")
        if self.peak_lr <= 0:
            raise DataError(f"peak_lr must be positive, got {self.peak_lr}")


def lr_at(step: int, schedule: LrSchedule) -> float:
    if step < 0 or step > schedule.total_steps:
        raise DataError(f"step {step} outside [0, {schedule.total_steps}]")
    if step <= schedule.warmup_steps:
        return schedule.peak_lr * step / schedule.warmup_steps
    remaining = schedule.total_steps - step
    return schedule.peak_lr * remaining / (schedule.total_steps - schedule.warmup_steps)
