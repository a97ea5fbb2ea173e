"""Brute-force and closed-form checks for the estimator and the tracking bounds.

Nothing here is used by the selectors. The functions recompute quantities
the hard way (direct weighted sums, exhaustive maximizer scans) or evaluate
the explicit convergence constants so that finite traces can be checked
against them.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

from scipy.optimize import brentq

from upo.belief import omega
from upo.grid import AssumptionConstants, AssumptionViolation, Objective, estimate_assumption_constants, true_maximizer

LAMBDA_CAP = 0.5  # largest forgetting factor the explicit bounds are derived for


def direct_estimate(
    history: Sequence[tuple[int, float]], lam: float, M: int, rho: float, k_next: int
) -> tuple[float, float]:
    """Mean and variance at ``k_next`` from explicit weighted sums over ``(j, y_j)``."""
    if not history:
        raise ValueError("history must be nonempty")
    weights = [omega(j, k_next, lam, M) for j, _ in history]
    total = math.fsum(weights)
    mean = math.fsum(w * y for w, (_, y) in zip(weights, history)) / total
    return mean, rho * rho / total


# Explicit tracking constants ----------------------------------------------------------


def _log_term(lam: float) -> float:
    return 1.0 / (math.log(1.0 / lam) * math.e)


def alpha1(lam: float, *, nu_max: float, rho: float, L_k: float, L_b: float, spacing: float) -> float:
    """Offset part of the bound on the gap between the local model and the noiseless line."""
    g = _log_term(lam)
    inner = (
        12.0 * rho
        + 120.0 * L_k
        + 3.0 * L_b * spacing
        + (44.0 * L_k + 2.0 * rho + L_b * spacing / 2.0) * g
        + 16.0 * L_k * g * g
    )
    return lam / (1.0 - lam) ** 2 * (nu_max**2 + 5.0) * inner


def alpha2(lam: float, *, nu_max: float, L_b: float) -> float:
    """Slope part of the same bound (multiplies the distance to the maximizer)."""
    return lam / (1.0 - lam) ** 2 * (nu_max**2 + 5.0) * (6.0 + _log_term(lam)) * L_b


def _inverse(fn, target: float) -> float:
    """Largest ``lam`` in (0, LAMBDA_CAP] with ``fn(lam) <= target`` (``fn`` increasing)."""
    if target <= 0:
        raise ValueError(f"target must be > 0, got {target}")
    if fn(LAMBDA_CAP) <= target:
        return LAMBDA_CAP
    lo = 1e-300
    if fn(lo) > target:
        raise ArithmeticError(f"bound cannot be met for target {target}")
    # search in log space: the functions vary over hundreds of decades near zero
    x = brentq(lambda t: fn(math.exp(t)) - target, math.log(lo), math.log(LAMBDA_CAP), xtol=1e-14, rtol=1e-14)
    lam = math.exp(x)
    while fn(lam) > target:
        lam = math.nextafter(lam, 0.0)
    return lam


@dataclass(frozen=True)
class ConvergenceConstants:
    L_star: float
    N_window: int
    gamma: float
    b_dead: float
    c1: float
    c2: float
    d: float
    lambda_star: float
    k0: int
    spacing: float


def convergence_constants(
    assumptions: AssumptionConstants,
    spacing: float,
    tau: float,
    rho: float,
    nu_max: float = 3.0,
    k0: int = 1,
) -> ConvergenceConstants:
    """Tracking envelopes and the forgetting-factor threshold for given assumption constants."""
    L_b, L_k = assumptions.L_b, assumptions.L_k
    if not L_b > 0:
        raise AssumptionViolation("curvature constant must be positive", (L_b,))
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    L_star = 2.0 * math.sqrt(L_k * spacing / L_b)
    N = math.ceil(L_star / spacing + 1.0) ** 2
    d = rho + 20.0 * L_k
    a1 = lambda lam: alpha1(lam, nu_max=nu_max, rho=rho, L_k=L_k, L_b=L_b, spacing=spacing)  # noqa: E731
    a2 = lambda lam: alpha2(lam, nu_max=nu_max, L_b=L_b)  # noqa: E731
    b = 4.0 / L_b * (a1(LAMBDA_CAP) + d + tau) + spacing
    gamma = L_star * math.sqrt(N) + (N - 1) * spacing + b
    c1 = gamma + L_star * math.sqrt(N) + (k0 + N) * spacing
    c2 = gamma + L_star * math.sqrt(N) + N * spacing
    lam_star = min(_inverse(a1, tau / 8.0), _inverse(a2, tau / (8.0 * b)), _inverse(a2, L_b / 4.0), LAMBDA_CAP)
    return ConvergenceConstants(L_star, N, gamma, b, c1, c2, d, lam_star, k0, spacing)


# Maximizer drift ----------------------------------------------------------------------


@dataclass(frozen=True)
class DriftReport:
    holds: bool
    worst_margin: float  # min over (k, N) of bound - drift
    witness: tuple[int, int] | None  # (k, N) of the worst margin, or of the first violation
    constants: AssumptionConstants


def check_drift_bound(
    obj: Objective,
    interval: tuple[int, int] | None = None,
    k_max: int = 200,
    n_max: int = 50,
    constants: AssumptionConstants | None = None,
) -> DriftReport:
    """Check ``|u*_{k+N} - u*_k| <= 2 sqrt(L_k spacing N / L_b)`` for all ``k <= k_max, 1 <= N <= n_max``.

    Without explicit ``constants`` they are estimated from the truth over the
    whole scanned window, in which case the bound must hold.
    """
    interval = interval or obj.grid.bounds
    if constants is None:
        constants = estimate_assumption_constants(obj, interval, k_max + n_max)
    spacing = obj.grid.spacing
    star = [obj.grid.u(true_maximizer(obj, k, interval)) for k in range(k_max + n_max + 1)]
    scale = 2.0 * math.sqrt(constants.L_k * spacing / constants.L_b)
    worst, witness, first_bad = math.inf, None, None
    for k in range(k_max + 1):
        for n in range(1, n_max + 1):
            margin = scale * math.sqrt(n) - abs(star[k + n] - star[k])
            if margin < worst:
                worst, witness = margin, (k, n)
            # grid values are exact multiples of spacing; allow rounding only
            if margin < -1e-12 * spacing and first_bad is None:
                first_bad = (k, n)
    return DriftReport(first_bad is None, worst, first_bad or witness, constants)


# Trace checks -----------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeReport:
    holds: bool
    sup_distance: float
    sup_bound: float
    tail_distance: float
    tail_bound: float
    first_violation: int | None


def _distances(indices: Sequence[int], opt: Sequence[int], spacing: float) -> list[float]:
    return [abs(i - j) * spacing for i, j in zip(indices, opt)]


def check_envelopes(
    indices: Sequence[int], opt_indices: Sequence[int], constants: ConvergenceConstants, tail: float = 0.2
) -> EnvelopeReport:
    """Whole-trace and trailing-window distance to the maximizer against ``c1`` and ``c2``."""
    if len(indices) != len(opt_indices) or not indices:
        raise ValueError("indices and optimum indices must be nonempty and equally long")
    if len(indices) < 10 * constants.N_window:
        raise ValueError(f"horizon {len(indices)} shorter than 10 windows of {constants.N_window}")
    dist = _distances(indices, opt_indices, constants.spacing)
    sup_bound = dist[0] + constants.c1
    first = next((k for k, x in enumerate(dist) if x > sup_bound), None)
    start = len(dist) - max(1, int(round(tail * len(dist))))
    tail_dist = max(dist[start:])
    if first is None and tail_dist > constants.c2:
        first = start + dist[start:].index(tail_dist)
    return EnvelopeReport(first is None, max(dist), sup_bound, tail_dist, constants.c2, first)


def check_always_perturb(indices: Sequence[int]) -> int | None:
    """First ``k`` with ``index[k+1] == index[k]``, or None if every step moves."""
    return next((k for k, (a, b) in enumerate(zip(indices, indices[1:])) if a == b), None)


def check_descent(
    indices: Sequence[int], opt_indices: Sequence[int], b_dead: float, spacing: float, k0: int = 1
) -> tuple[int, int | None]:
    """Whenever ``|u_k - u*_{k+1}| >= b`` the next input must be one step closer to ``u*_{k+1}``.

    Returns the number of steps where the condition applied and the first
    failing ``k`` (None when all pass).
    """
    applied = 0
    for k in range(max(k0, 1), len(indices) - 1):
        gap = abs(indices[k] - opt_indices[k + 1])
        if gap * spacing >= b_dead:
            applied += 1
            if abs(indices[k + 1] - opt_indices[k + 1]) != gap - 1:
                return applied, k
    return applied, None
