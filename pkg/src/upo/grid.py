"""Input grid, noisy time-varying objectives and their assumption constants."""

from __future__ import annotations

import enum
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np


class BoundsError(IndexError):
    """Grid index outside the grid bounds."""


class NonUniqueMaximizerError(ValueError):
    """More than one grid point attains the maximum."""

    def __init__(self, k: int, indices: list[int]):
        super().__init__(f"maximizer at k={k} is not unique: indices {indices}")
        self.k = k
        self.indices = indices


class AssumptionViolation(ValueError):
    """A sampled point violates the curvature or drift assumption."""

    def __init__(self, message: str, witness: tuple):
        super().__init__(f"{message} (witness {witness})")
        self.witness = witness


@dataclass(frozen=True)
class InputGrid:
    """Equidistant grid ``u = i * spacing`` with optional inclusive index bounds."""

    spacing: float
    bounds: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if not self.spacing > 0:
            raise ValueError(f"grid spacing must be > 0, got {self.spacing}")
        if self.bounds is not None:
            lo, hi = self.bounds
            if not lo < hi:
                raise ValueError(f"grid bounds must satisfy lo < hi, got {self.bounds}")

    def u(self, i: int) -> float:
        return i * self.spacing

    def index(self, u: float) -> int:
        """Nearest grid index to ``u``."""
        return int(round(u / self.spacing))

    def contains(self, i: int) -> bool:
        return self.bounds is None or self.bounds[0] <= i <= self.bounds[1]

    def check(self, i: int) -> None:
        if not self.contains(i):
            raise BoundsError(f"grid index {i} outside bounds {self.bounds}")

    def clamp(self, i: int) -> int:
        if self.bounds is None:
            return i
        return min(max(i, self.bounds[0]), self.bounds[1])

    def midpoint(self) -> int:
        if self.bounds is None:
            return 0
        return (self.bounds[0] + self.bounds[1]) // 2

    def indices(self, interval: tuple[int, int] | None = None) -> range:
        interval = interval or self.bounds
        if interval is None:
            raise ValueError("an index interval is required on an unbounded grid")
        lo, hi = interval
        if lo > hi:
            raise ValueError(f"empty index interval {interval}")
        return range(lo, hi + 1)


class NoiseKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    BOUNDED = "bounded"


class NoiseStream:
    """Seeded noise sequence indexed by time step.

    Draws are generated in fixed-size chunks, so ``stream[k]`` does not depend
    on the order in which indices are requested. ``BOUNDED`` draws standard
    normals and rejects any with ``|e| > 1``.
    """

    CHUNK = 4096

    def __init__(self, seed: int, kind: NoiseKind = NoiseKind.GAUSSIAN):
        self.seed = seed
        self.kind = NoiseKind(kind)
        self._rng = np.random.default_rng(seed)
        self._buf = np.empty(0)

    def _extend(self) -> None:
        if self.kind is NoiseKind.GAUSSIAN:
            chunk = self._rng.standard_normal(self.CHUNK)
        else:
            parts, have = [], 0
            while have < self.CHUNK:
                draw = self._rng.standard_normal(self.CHUNK)
                draw = draw[np.abs(draw) <= 1.0]
                parts.append(draw)
                have += draw.size
            chunk = np.concatenate(parts)[: self.CHUNK]
        self._buf = np.concatenate([self._buf, chunk])

    def __getitem__(self, k: int) -> float:
        if k < 0:
            raise IndexError(f"noise index must be >= 0, got {k}")
        while k >= self._buf.size:
            self._extend()
        return float(self._buf[k])

    def take(self, n: int) -> np.ndarray:
        if n > 0:
            self[n - 1]
        return self._buf[:n].copy()


@dataclass(frozen=True)
class Objective:
    """Time-varying truth ``f_k(u)`` on a grid plus the measurement noise channel.

    Measurements are ``y_k = f_k(u_k) + noise_scale * e_k`` where ``e_k`` is the
    k-th draw of the objective's noise stream. Every selector evaluated against
    the same objective therefore sees the same noise realization.
    """

    truth: Callable[[int, float], float]
    grid: InputGrid
    noise_scale: float = 1.0
    noise_kind: NoiseKind = NoiseKind.GAUSSIAN
    seed: int = 0
    cache: bool = True
    name: str = "custom"
    _values: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _noise: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.noise_scale < 0:
            raise ValueError(f"noise scale must be >= 0, got {self.noise_scale}")
        object.__setattr__(self, "noise_kind", NoiseKind(self.noise_kind))

    @property
    def noise(self) -> NoiseStream:
        stream = self._noise.get("stream")
        if stream is None:
            stream = self._noise["stream"] = NoiseStream(self.seed, self.noise_kind)
        return stream

    def value(self, k: int, i: int) -> float:
        """Noiseless ``f_k`` at grid index ``i``."""
        if not self.cache:
            return float(self.truth(k, self.grid.u(i)))
        key = (k, i)
        v = self._values.get(key)
        if v is None:
            v = self._values[key] = float(self.truth(k, self.grid.u(i)))
        return v

    def with_seed(self, seed: int) -> Objective:
        """Same truth (and shared truth cache), fresh noise stream."""
        clone = Objective(
            truth=self.truth,
            grid=self.grid,
            noise_scale=self.noise_scale,
            noise_kind=self.noise_kind,
            seed=seed,
            cache=self.cache,
            name=self.name,
        )
        object.__setattr__(clone, "_values", self._values)
        return clone


def measure(obj: Objective, k: int, i: int) -> float:
    obj.grid.check(i)
    return obj.value(k, i) + obj.noise_scale * obj.noise[k]


def true_maximizer(obj: Objective, k: int, interval: tuple[int, int] | None = None) -> int:
    """Exhaustive-scan argmax of ``f_k`` over the interval (default: grid bounds)."""
    idx = obj.grid.indices(interval)
    values = [obj.value(k, i) for i in idx]
    best = max(values)
    winners = [i for i, v in zip(idx, values) if v == best]
    if len(winners) > 1:
        raise NonUniqueMaximizerError(k, winners)
    return winners[0]


@dataclass(frozen=True)
class AssumptionConstants:
    L_b: float  # curvature lower bound
    L_k: float  # per-step drift bound
    horizon: int

    def __post_init__(self) -> None:
        if not self.L_b > 0:
            raise ValueError(f"L_b must be > 0, got {self.L_b}")
        if self.L_k < 0:
            raise ValueError(f"L_k must be >= 0, got {self.L_k}")


def curvature_ratios(obj: Objective, k: int, interval: tuple[int, int]) -> list[tuple[int, float]]:
    """Admissible curvature constant for each neighbouring pair ``(i, i+1)`` at time k.

    With ``m = u^(i+1/2) - u*_k`` the curvature inequality reads
    ``L_b m^2 <= (f(u_i) - f(u_{i+1})) m``, so the largest admissible constant
    for the pair is ``(f(u_i) - f(u_{i+1})) / m``.
    """
    grid = obj.grid
    i_star = true_maximizer(obj, k, interval)
    u_star = grid.u(i_star)
    out = []
    lo, hi = interval
    for i in range(lo, hi):
        m = (i + 0.5) * grid.spacing - u_star
        out.append((i, (obj.value(k, i) - obj.value(k, i + 1)) / m))
    return out


def estimate_assumption_constants(
    obj: Objective, interval: tuple[int, int] | None = None, horizon: int = 1
) -> AssumptionConstants:
    """Sample ``L_b`` and ``L_k`` from the noiseless truth.

    ``L_k`` is the largest one-step change ``|f_{k+1}(u) - f_k(u)|`` for
    ``k < horizon``; ``L_b`` is the smallest admissible curvature ratio over all
    neighbouring pairs and all ``k < horizon``.
    """
    interval = interval or obj.grid.bounds
    if interval is None:
        raise ValueError("an index interval is required on an unbounded grid")
    idx = obj.grid.indices(interval)
    L_k = 0.0
    L_b = math.inf
    witness = None
    for k in range(horizon):
        for i in idx:
            L_k = max(L_k, abs(obj.value(k + 1, i) - obj.value(k, i)))
        for i, ratio in curvature_ratios(obj, k, interval):
            if ratio < L_b:
                L_b, witness = ratio, (k, i)
    if not L_b > 0:
        raise AssumptionViolation(f"curvature assumption fails, admissible L_b = {L_b}", witness)
    return AssumptionConstants(L_b=L_b, L_k=L_k, horizon=horizon)


# Synthetic objectives --------------------------------------------------------


def parabola(
    grid: InputGrid,
    curvature: float = 1.0,
    center: float = 0.0,
    velocity: float = 0.0,
    offset_rate: float = 0.0,
    amplitude: float = 0.0,
    period: float = 100.0,
    rho: float = 0.0,
    seed: int = 0,
    noise_kind: NoiseKind = NoiseKind.GAUSSIAN,
) -> Objective:
    """``f_k(u) = -a (u - c_k)^2 + offset_rate * k`` with a drifting or oscillating center.

    ``c_k = center + velocity * k + amplitude * sin(2 pi k / period)``.
    """

    def truth(k: int, u: float) -> float:
        c = center + velocity * k + amplitude * math.sin(2.0 * math.pi * k / period)
        return -curvature * (u - c) ** 2 + offset_rate * k

    return Objective(
        truth=truth,
        grid=grid,
        noise_scale=rho,
        noise_kind=noise_kind,
        seed=seed,
        name="parabola",
    )
