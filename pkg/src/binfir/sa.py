"""Stochastic-approximation building blocks: step sizes, expanding
truncations and sign tracking."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import ConfigError


@dataclass
class StepSchedule:
    """alpha_j = gain / (j + offset), with j counted from 1.

    For gain > 0 and offset >= 0 the sequence is positive, not summable and
    square summable.
    """

    gain: float = 1.0
    offset: float = 0.0
    j: int = 1

    def __post_init__(self):
        if not self.gain > 0:
            raise ConfigError(f"gain must be positive, got {self.gain}", "step.gain")
        if not self.offset >= 0:
            raise ConfigError(f"offset must be nonnegative, got {self.offset}", "step.offset")
        if self.j < 1:
            raise ConfigError(f"counter starts at 1, got {self.j}", "step.j")

    def alpha(self, j: int) -> float:
        return self.gain / (j + self.offset)


def next_step(sched: StepSchedule) -> float:
    a = sched.alpha(sched.j)
    sched.j += 1
    return a


@dataclass
class TruncationPolicy:
    """Bounds M_k = bound * growth**k; ``count`` is the number of resets so far.
    Iterates that leave the current ball are sent back to the origin."""

    bound: float = 1000.0
    growth: float = 2.0
    count: int = 0

    def __post_init__(self):
        if not self.bound > 0:
            raise ConfigError(f"bound must be positive, got {self.bound}", "truncation.bound")
        if not self.growth > 1:
            raise ConfigError(f"growth must exceed 1, got {self.growth}", "truncation.growth")

    @property
    def current_bound(self) -> float:
        return self.bound * self.growth**self.count


def truncated_update(x, increment, policy: TruncationPolicy) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    increment = np.asarray(increment, dtype=float)
    if x.shape != increment.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {increment.shape}")
    candidate = x + increment
    if np.linalg.norm(candidate) <= policy.current_bound:
        return candidate, False
    policy.count += 1
    return np.zeros_like(candidate), True


def sign(x: float) -> int:
    if x > 0:
        return 1
    if x < 0:
        return -1
    return 0


def sign_track(estimate: float, target: float, alpha: float) -> float:
    return estimate + alpha * sign(target - estimate)


def wire_sign(x: float) -> int:
    """Sign as carried on a one-bit link: ties go to +1 so both ends agree."""
    return 1 if x >= 0 else -1


@njit(cache=True)
def _project(candidate, x, bound):
    """In-place expanding-truncation step. Returns True when the reset fired."""
    sq = 0.0
    for k in range(candidate.size):
        sq += candidate[k] * candidate[k]
    if math.sqrt(sq) <= bound:
        for k in range(candidate.size):
            x[k] = candidate[k]
        return False
    for k in range(candidate.size):
        x[k] = 0.0
    return True
