"""Three-point local model around the current input.

The predicted values at ``i-1, i, i+1`` are pulled toward a straight line,
the pull on each point growing with its variance. ``nu`` scales the allowed
bend: large ``nu`` keeps the predicted means, small ``nu`` forces the three
values onto a line.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from upo.belief import Estimate, PointState, WeightingOperator


class ContractViolation(ValueError):
    """Local model requested for a neighbourhood that cannot support it."""


class LocalCase(str, enum.Enum):
    RIGHT_UNMEASURED = "right_unmeasured"
    LEFT_UNMEASURED = "left_unmeasured"
    ALL_MEASURED = "all_measured"


@dataclass(frozen=True)
class LocalModelParams:
    nu: float
    rho: float

    def __post_init__(self) -> None:
        if not self.nu > 0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if not self.rho > 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")


@dataclass(frozen=True)
class LocalModel:
    center: int
    h: tuple[float, float, float]
    case: LocalCase

    @property
    def bend(self) -> float:
        """Second difference ``h[0] - 2 h[1] + h[2]``."""
        return self.h[0] - 2.0 * self.h[1] + self.h[2]


def solve_local(center: int, estimates: Sequence[Estimate], params: LocalModelParams) -> LocalModel:
    """Smoothed values at ``center - 1, center, center + 1`` from their estimates."""
    left, mid, right = estimates
    if not mid.defined:
        raise ContractViolation(f"center {center} has no estimate")
    if not left.defined and not right.defined:
        raise ContractViolation(f"both neighbours of {center} are unmeasured")
    if not right.defined:
        h = (left.mean, mid.mean, 2.0 * mid.mean - left.mean)
        return LocalModel(center, h, LocalCase.RIGHT_UNMEASURED)
    if not left.defined:
        h = (2.0 * mid.mean - right.mean, mid.mean, right.mean)
        return LocalModel(center, h, LocalCase.LEFT_UNMEASURED)

    scale = (params.nu * params.rho) ** 2
    s = np.array([left.variance, mid.variance, right.variance]) / scale
    mu = np.array([left.mean, mid.mean, right.mean])
    residual = mu[0] - 2.0 * mu[1] + mu[2]
    gain = residual / (1.0 + s[0] + 4.0 * s[1] + s[2])
    h = mu - gain * np.array([s[0], -2.0 * s[1], s[2]])
    return LocalModel(center, (float(h[0]), float(h[1]), float(h[2])), LocalCase.ALL_MEASURED)


def solve_local_theta(
    center: int,
    states: Sequence[PointState],
    op: WeightingOperator,
    params: LocalModelParams,
) -> LocalModel:
    """Same model written directly in the belief vectors (no division per point).

    Kept as an independent check on :func:`solve_local`.
    """
    a = [float(op.cA @ s.xi) for s in states]  # weighted measurement sums
    w = [float(op.cA @ s.phi) for s in states]  # weight sums
    n2 = params.nu**2
    denom = n2 * w[0] * w[1] * w[2] + w[1] * w[2] + 4.0 * w[0] * w[2] + w[0] * w[1]
    if not denom > 0:
        raise ContractViolation(f"local-model denominator is {denom} at center {center}")
    t_left = a[0] * (n2 * w[1] * w[2] + w[1] + 4.0 * w[2]) + 2.0 * a[1] * w[2] - a[2] * w[1]
    t_mid = a[1] * (n2 * w[0] * w[2] + w[0] + w[2]) + 2.0 * a[0] * w[2] + 2.0 * a[2] * w[0]
    t_right = a[2] * (n2 * w[0] * w[1] + 4.0 * w[0] + w[1]) - a[0] * w[1] + 2.0 * a[1] * w[0]
    if w[2] == 0:
        case = LocalCase.RIGHT_UNMEASURED
    elif w[0] == 0:
        case = LocalCase.LEFT_UNMEASURED
    else:
        case = LocalCase.ALL_MEASURED
    return LocalModel(center, (t_left / denom, t_mid / denom, t_right / denom), case)
