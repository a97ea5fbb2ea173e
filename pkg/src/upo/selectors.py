"""Input selectors: belief-driven P&O (``upo``) and the baselines it is compared with.

Every selector moves at most one grid step per time step. They share the
same bootstrap: measure at ``u0`` and move to ``u0 + direction * spacing``.
From then on each selector measures at its current index and picks the
next one.
"""

from __future__ import annotations

import enum
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from upo.belief import BeliefState, Estimate, WeightingOperator
from upo.grid import InputGrid, Objective, measure
from upo.local_model import LocalModel, LocalModelParams, solve_local

logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def norm_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


class SelectorKind(str, enum.Enum):
    UPO = "upo"
    STANDARD_PO = "standard_po"
    HEI = "hei"
    THOMPSON = "thompson"


@dataclass(frozen=True)
class SelectorConfig:
    kind: SelectorKind = SelectorKind.UPO
    tau: float = 0.01
    nu: float = 3.0
    alpha: float = 1e-4
    lam: float = math.exp(-0.5)
    M: int = 1
    rho: float = 5.0
    variance_floor_phi: float = 1e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SelectorKind(self.kind))
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not self.nu > 0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must be in (0, 1), got {self.lam}")
        if self.M < 0 or int(self.M) != self.M:
            raise ValueError(f"M must be a nonnegative integer, got {self.M}")
        if not self.rho > 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if not self.variance_floor_phi > 0:
            raise ValueError("variance_floor_phi must be > 0")

    @classmethod
    def case_study_default(cls, kind: SelectorKind | str) -> SelectorConfig:
        """Tunings used in the PV case study for each selector."""
        kind = SelectorKind(kind)
        if kind in (SelectorKind.HEI, SelectorKind.THOMPSON):
            return cls(kind=kind, lam=0.95, M=0)
        return cls(kind=kind)


@dataclass(frozen=True)
class Decision:
    next_index: int
    case: str
    values: tuple[float, float, float] | None = None


def _offset_name(offset: int) -> str:
    return {-1: "left", 0: "stay", 1: "right"}[offset]


def _ranked_argmax(values: Sequence[float], p: Sequence[int], allowed: Sequence[bool]) -> int:
    """Offset in {-1, 0, 1} of the largest allowed value.

    Ties go to staying, then to the less recently measured neighbour, then left.
    """
    order = [0, -1, 1] if p[0] <= p[2] else [0, 1, -1]
    best = None
    for off in order:
        if not allowed[off + 1]:
            continue
        if best is None or values[off + 1] > values[best + 1]:
            best = off
    return best


def _allowed(grid: InputGrid | None, current: int) -> tuple[bool, bool, bool]:
    if grid is None:
        return (True, True, True)
    return (grid.contains(current - 1), True, grid.contains(current + 1))


def upo_select(
    current: int,
    local: LocalModel,
    p: Sequence[int],
    tau: float,
    grid: InputGrid | None = None,
) -> Decision:
    """Stay on the best local value, but probe the stale side when the lead is thin.

    ``p`` holds the last measurement times of ``current - 1, current, current + 1``
    (-1 when never measured). Out-of-bounds neighbours are never selected: a
    forced probe toward one is redirected to the other neighbour.
    """
    h = local.h
    allowed = _allowed(grid, current)
    if p[0] < p[2] and 0.0 <= h[1] - h[2] <= tau:
        off, case = -1, "forced_left"
    elif p[0] > p[2] and 0.0 <= h[1] - h[0] <= tau:
        off, case = 1, "forced_right"
    else:
        if p[0] == p[2]:
            logger.warning("equal last-measured times %s at index %d; using argmax", p, current)
        off = _ranked_argmax(h, p, (True, True, True))
        case = f"argmax_{_offset_name(off)}"
        if not allowed[off + 1]:
            return Decision(current, case + "_clamped", h)
        return Decision(current + off, case, h)
    if not allowed[off + 1]:
        off = -off
        case += "_redirected"
        if not allowed[off + 1]:
            return Decision(current, case, h)
    return Decision(current + off, case, h)


def standard_po_step(y_prev: float, g: int, y: float) -> int:
    """Next direction: keep it while the measurement does not drop."""
    if g not in (-1, 1):
        raise ValueError(f"direction must be -1 or +1, got {g}")
    return g if y >= y_prev else -g


def expected_improvement(mean: float, incumbent: float, variance: float, alpha: float) -> float:
    sd = math.sqrt(variance)
    gap = mean - incumbent - alpha
    z = gap / sd
    return gap * norm_cdf(z) + sd * norm_pdf(z)


def fill_unmeasured(estimates: Sequence[Estimate], rho: float, floor_phi: float) -> list[Estimate]:
    """Stand-in estimates for unmeasured neighbours: straight-line extrapolation, huge variance."""
    left, mid, right = estimates
    if not mid.defined:
        raise ValueError("center estimate must be defined")
    big = rho * rho / floor_phi
    if not left.defined and not right.defined:
        return [Estimate(mid.mean, big), mid, Estimate(mid.mean, big)]
    if not left.defined:
        left = Estimate(2.0 * mid.mean - right.mean, big)
    if not right.defined:
        right = Estimate(2.0 * mid.mean - left.mean, big)
    return [left, mid, right]


def hei_select(
    current: int,
    estimates: Sequence[Estimate],
    alpha: float,
    p: Sequence[int] = (-1, 0, -1),
    grid: InputGrid | None = None,
) -> Decision:
    """Neighbour with the highest expected improvement over the current estimate."""
    incumbent = estimates[1].mean
    ei = tuple(expected_improvement(e.mean, incumbent, e.variance, alpha) for e in estimates)
    off = _ranked_argmax(ei, p, _allowed(grid, current))
    return Decision(current + off, f"hei_{_offset_name(off)}", ei)


def thompson_select(
    current: int,
    estimates: Sequence[Estimate],
    rng: np.random.Generator,
    p: Sequence[int] = (-1, 0, -1),
    grid: InputGrid | None = None,
) -> Decision:
    """Neighbour whose posterior sample is largest."""
    means = np.array([e.mean for e in estimates])
    sds = np.sqrt([e.variance for e in estimates])
    draws = means + sds * rng.standard_normal(3)
    samples = tuple(float(s) for s in draws)
    off = _ranked_argmax(samples, p, _allowed(grid, current))
    return Decision(current + off, f"thompson_{_offset_name(off)}", samples)


# Closed-loop runners -----------------------------------------------------------


class Selector:
    """Closed-loop runner: measure at the current index, then choose the next one."""

    name = "selector"

    def __init__(self, config: SelectorConfig, grid: InputGrid, u0: int, direction: int = 1, seed: int = 0):
        if direction not in (-1, 1):
            raise ValueError(f"initial direction must be -1 or +1, got {direction}")
        grid.check(u0)
        self.config = config
        self.grid = grid
        self.index = u0
        self.direction = direction
        self.seed = seed

    def _first_move(self) -> Decision:
        nxt = self.index + self.direction
        if not self.grid.contains(nxt):
            self.direction = -self.direction
            nxt = self.index + self.direction
        return Decision(nxt, "init")

    def step(self, obj: Objective, k: int) -> tuple[float, Decision]:
        y = measure(obj, k, self.index)
        decision = self._first_move() if k == 0 else self.decide(k, y)
        self.observe(k, y)
        self.index = decision.next_index
        return y, decision

    def observe(self, k: int, y: float) -> None:
        """Hook for bookkeeping that must run after the decision."""

    def decide(self, k: int, y: float) -> Decision:
        raise NotImplementedError


class _BeliefSelector(Selector):
    def __init__(self, config, grid, u0, direction=1, seed=0):
        super().__init__(config, grid, u0, direction, seed)
        self.belief = BeliefState(WeightingOperator(config.lam, config.M), config.rho)

    def step(self, obj: Objective, k: int) -> tuple[float, Decision]:
        y = measure(obj, k, self.index)
        self.belief.update(k, self.index, y)
        decision = self._first_move() if k == 0 else self.decide(k, y)
        self.index = decision.next_index
        return y, decision

    def neighbourhood(self) -> tuple[list[Estimate], list[int]]:
        i = self.index
        est = [self.belief.estimate(j) for j in (i - 1, i, i + 1)]
        p = [self.belief.last_measured(j) for j in (i - 1, i, i + 1)]
        return est, p


class UPOSelector(_BeliefSelector):
    name = "upo"

    def __init__(self, config, grid, u0, direction=1, seed=0):
        super().__init__(config, grid, u0, direction, seed)
        self.params = LocalModelParams(config.nu, config.rho)
        self.last_local: LocalModel | None = None

    def decide(self, k: int, y: float) -> Decision:
        est, p = self.neighbourhood()
        local = solve_local(self.index, est, self.params)
        self.last_local = local
        return upo_select(self.index, local, p, self.config.tau, self.grid)


class HEISelector(_BeliefSelector):
    name = "hei"

    def decide(self, k: int, y: float) -> Decision:
        est, p = self.neighbourhood()
        est = fill_unmeasured(est, self.config.rho, self.config.variance_floor_phi)
        return hei_select(self.index, est, self.config.alpha, p, self.grid)


class ThompsonSelector(_BeliefSelector):
    name = "thompson"

    def __init__(self, config, grid, u0, direction=1, seed=0):
        super().__init__(config, grid, u0, direction, seed)
        # separate stream from the measurement noise
        self.rng = np.random.default_rng([seed, 0x75])

    def decide(self, k: int, y: float) -> Decision:
        est, p = self.neighbourhood()
        est = fill_unmeasured(est, self.config.rho, self.config.variance_floor_phi)
        return thompson_select(self.index, est, self.rng, p, self.grid)


class StandardPOSelector(Selector):
    """Classic P&O. Reflects off grid bounds so that it keeps perturbing."""

    name = "standard_po"

    def __init__(self, config, grid, u0, direction=1, seed=0):
        super().__init__(config, grid, u0, direction, seed)
        self.g = direction
        self.y_prev: float | None = None

    def _first_move(self) -> Decision:
        decision = super()._first_move()
        self.g = self.direction
        return decision

    def decide(self, k: int, y: float) -> Decision:
        g = standard_po_step(self.y_prev, self.g, y)
        case = "po_keep" if g == self.g else "po_reverse"
        if not self.grid.contains(self.index + g):
            g = -g
            case += "_reflected"
        self.g = g
        return Decision(self.index + g, case)

    def observe(self, k: int, y: float) -> None:
        self.y_prev = y


SELECTORS: dict[SelectorKind, type[Selector]] = {
    SelectorKind.UPO: UPOSelector,
    SelectorKind.STANDARD_PO: StandardPOSelector,
    SelectorKind.HEI: HEISelector,
    SelectorKind.THOMPSON: ThompsonSelector,
}


def make_selector(config: SelectorConfig, grid: InputGrid, u0: int, direction: int = 1, seed: int = 0) -> Selector:
    return SELECTORS[config.kind](config, grid, u0, direction, seed)

