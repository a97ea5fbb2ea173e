"""Per-grid-point belief about a drifting function from exponentially forgotten data.

Each measured grid point keeps two short vectors, ``xi`` (weighted sums of
measurements) and ``phi`` (sums of weights). One shared lower-triangular
operator ``A`` ages both vectors by one time step; a new measurement is
injected into the first entry. The readout ``c^T A xi / c^T A phi`` is the
weighted mean predicted for the next step, and ``rho^2 / c^T A phi`` its
variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNDERFLOW = 1e-300


def _check_lambda(lam: float) -> None:
    if not 0.0 < lam < 1.0:
        raise ValueError(f"forgetting factor must be in (0, 1), got {lam}")


def zeta(j: int, k: int, q: int, lam: float) -> float:
    """Weight kernel term ``(ln(1/lam) (k-j))^q / q! * lam^(k-j)``, with ``0^0 = 1``."""
    _check_lambda(lam)
    if k < j:
        raise ValueError(f"need k >= j, got j={j}, k={k}")
    if q < 0:
        raise ValueError(f"order index must be >= 0, got {q}")
    age = k - j
    if q == 0:
        return lam**age
    return (math.log(1.0 / lam) * age) ** q / math.factorial(q) * lam**age


def omega(j: int, k: int, lam: float, M: int) -> float:
    """Information weight at time ``k`` of a measurement taken at time ``j``."""
    return sum(zeta(j, k, q, lam) for q in range(M + 1))


@dataclass(frozen=True)
class WeightingOperator:
    lam: float
    M: int
    A: np.ndarray = field(init=False, repr=False, compare=False)
    b: np.ndarray = field(init=False, repr=False, compare=False)
    c: np.ndarray = field(init=False, repr=False, compare=False)
    cA: np.ndarray = field(init=False, repr=False, compare=False)
    _powers: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        _check_lambda(self.lam)
        if self.M < 0 or int(self.M) != self.M:
            raise ValueError(f"weight order must be a nonnegative integer, got {self.M}")
        n = self.M + 1
        log_inv = math.log(1.0 / self.lam)
        A = np.zeros((n, n))
        for r in range(n):
            for s in range(r + 1):
                A[r, s] = self.lam / math.factorial(r - s) * log_inv ** (r - s)
        b = np.zeros(n)
        b[0] = 1.0
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", np.ones(n))
        object.__setattr__(self, "cA", self.c @ A)

    @property
    def size(self) -> int:
        return self.M + 1

    def power(self, n: int) -> np.ndarray:
        """``A^n``, cached."""
        P = self._powers.get(n)
        if P is None:
            P = np.linalg.matrix_power(self.A, n)
            if len(self._powers) < 4096:
                self._powers[n] = P
        return P


@dataclass
class PointState:
    xi: np.ndarray
    phi: np.ndarray
    last_measured: int = -1
    last_update: int = -1  # time step the vectors are valid for

    @classmethod
    def empty(cls, size: int) -> PointState:
        return cls(xi=np.zeros(size), phi=np.zeros(size))

    @property
    def measured(self) -> bool:
        return self.last_measured >= 0


@dataclass(frozen=True)
class Estimate:
    """Predicted mean and variance; both ``None`` for a never-measured point."""

    mean: float | None
    variance: float | None

    @property
    def defined(self) -> bool:
        return self.variance is not None


UNDEFINED = Estimate(None, None)


def advance(state: PointState, op: WeightingOperator, t: int) -> PointState:
    """Age ``state`` to time ``t`` by applying ``A^(t - last_update)``."""
    steps = t - state.last_update
    if steps < 0:
        raise ValueError(f"cannot move state backwards from {state.last_update} to {t}")
    if steps == 0 or not state.measured:
        return PointState(state.xi.copy(), state.phi.copy(), state.last_measured, t)
    P = op.power(steps)
    xi = P @ state.xi
    phi = P @ state.phi
    tiny = np.abs(phi) < UNDERFLOW
    xi[tiny] = 0.0
    phi[tiny] = 0.0
    if not phi.any():
        # fully forgotten: back to never measured
        return PointState(np.zeros(op.size), np.zeros(op.size), -1, t)
    return PointState(xi, phi, state.last_measured, t)


def estimate(state: PointState, op: WeightingOperator, rho: float) -> Estimate:
    """Mean and variance for the step after ``state.last_update``."""
    if not state.measured:
        return UNDEFINED
    den = float(op.cA @ state.phi)
    if not den > 0:
        return UNDEFINED
    return Estimate(mean=float(op.cA @ state.xi) / den, variance=rho * rho / den)


class BeliefState:
    """Sparse map of grid index to :class:`PointState`, aged lazily.

    Only points that have been measured are stored. All stored points are
    logically at time ``self.time``; physically each point remembers when it
    was last touched and is aged on read.
    """

    def __init__(self, op: WeightingOperator, rho: float):
        if not rho > 0:
            raise ValueError(f"rho must be > 0, got {rho}")
        self.op = op
        self.rho = rho
        self.time = -1
        self.points: dict[int, PointState] = {}

    def update(self, t: int, index: int, y: float) -> None:
        """Ingest measurement ``y`` taken at grid ``index`` at time ``t``."""
        if t <= self.time:
            raise ValueError(f"update time must increase: {t} after {self.time}")
        self.time = t
        state = self.points.get(index)
        if state is None or not state.measured:
            state = PointState.empty(self.op.size)
            state.last_update = t
        else:
            state = advance(state, self.op, t)
        state.xi[0] += y
        state.phi[0] += 1.0
        state.last_measured = t
        self.points[index] = state

    def state(self, index: int) -> PointState:
        """State of ``index`` at the current time (a fresh object)."""
        s = self.points.get(index)
        if s is None:
            empty = PointState.empty(self.op.size)
            empty.last_update = self.time
            return empty
        s = advance(s, self.op, self.time)
        if not s.measured:
            del self.points[index]
        return s

    def estimate(self, index: int) -> Estimate:
        return estimate(self.state(index), self.op, self.rho)

    def last_measured(self, index: int) -> int:
        """Last measurement time of ``index``, or -1."""
        s = self.points.get(index)
        return -1 if s is None else s.last_measured

    def snapshot(self) -> dict:
        return {
            "lam": self.op.lam,
            "M": self.op.M,
            "rho": self.rho,
            "time": self.time,
            "points": [
                {
                    "index": i,
                    "xi": s.xi.tolist(),
                    "phi": s.phi.tolist(),
                    "last_measured": s.last_measured,
                    "last_update_time": s.last_update,
                }
                for i, s in sorted(self.points.items())
            ],
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> BeliefState:
        belief = cls(WeightingOperator(snap["lam"], snap["M"]), snap["rho"])
        belief.time = snap["time"]
        for p in snap["points"]:
            belief.points[p["index"]] = PointState(
                xi=np.asarray(p["xi"], dtype=float),
                phi=np.asarray(p["phi"], dtype=float),
                last_measured=p["last_measured"],
                last_update=p["last_update_time"],
            )
        return belief
