"""Photovoltaic array feeding a buck converter, steady-state only.

The plant maps a duty cycle ``u`` to the power delivered by an array of
``n_s`` series cells (single-diode model) through an ideal buck converter
driving a resistive load. Temperature and irradiance vary over a simulated
day, so the power curve ``P(u)`` and its maximizer drift with time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from upo.grid import InputGrid, NoiseKind, Objective


@dataclass(frozen=True)
class PvParams:
    """Array and converter parameters. Defaults are the reference module."""

    T_r: float = 298.15  # reference temperature [K]
    I_s: float = 5.61  # short-circuit current at T_r [A]
    I_0: float = 1.13e-6  # reverse saturation current at T_r [A]
    k_i: float = 1.96e-3  # short-circuit temperature coefficient [A/K]
    N_ideality: float = 1.81
    E_g: float = 1.16  # band gap [eV]
    k_B: float = 1.38e-23  # [J/K]
    q_e: float = 1.60e-19  # [C]
    n_s: int = 72
    R_s: float = 2.83e-3  # series resistance [Ohm]
    R_p: float = 8.7  # parallel resistance [Ohm]
    C_c: float = 1e-3  # converter capacitance [F]
    L_c: float = 5e-3  # converter inductance [H]
    R_c: float = 2.0  # converter load resistance [Ohm]

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"PvParams.{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class Conditions:
    T: float  # cell temperature [K]
    S: float  # irradiance [W/m^2]

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise ValueError(f"temperature must be > 0 K, got {self.T}")
        if self.S < 0:
            raise ValueError(f"irradiance must be >= 0, got {self.S}")


@dataclass(frozen=True)
class SteadyState:
    power: float
    v: float
    i: float


@dataclass(frozen=True)
class DayProfile:
    """Clear-day temperature and irradiance over ``horizon`` steps.

    Both curves are bells ``sin(pi * (k + 1/2) / horizon) ** p``; the half-step
    offset keeps the irradiance strictly positive at ``k = 0`` so that every
    step has a unique power maximizer.
    """

    horizon: int = 300
    S_peak: float = 1000.0
    T_base: float = 293.15
    delta_T: float = 20.0
    p_S: float = 1.5
    p_T: float = 1.5

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def _bell(self, k: float, p: float) -> float:
        s = math.sin(math.pi * (k + 0.5) / self.horizon)
        return max(s, 0.0) ** p

    def irradiance(self, k: float) -> float:
        return self.S_peak * self._bell(k, self.p_S)

    def temperature(self, k: float) -> float:
        return self.T_base + self.delta_T * self._bell(k, self.p_T)

    def conditions(self, k: float) -> Conditions:
        return Conditions(T=self.temperature(k), S=self.irradiance(k))


def thermal_voltage(params: PvParams, cond: Conditions) -> float:
    return params.k_B * cond.T / params.q_e


def light_current(params: PvParams, cond: Conditions) -> float:
    return (params.I_s + params.k_i * (cond.T - params.T_r)) * cond.S / 1000.0


def saturation_current(params: PvParams, cond: Conditions) -> float:
    """Reverse saturation current at temperature ``cond.T``.

    The band gap is carried in eV; ``E_g * q_e / (N k_B T)`` is the
    dimensionless exponent coefficient.
    """
    ratio = cond.T / params.T_r
    coeff = params.E_g * params.q_e / (params.N_ideality * params.k_B * cond.T)
    return params.I_0 * ratio**3 * math.exp(coeff * (ratio - 1.0))


def _diode_scale(params: PvParams, cond: Conditions) -> float:
    return params.N_ideality * thermal_voltage(params, cond) * params.n_s


def array_current_residual(params: PvParams, cond: Conditions, v: float, i: float) -> float:
    """``rhs - i`` of the implicit single-diode equation; zero at the solution."""
    i_s = light_current(params, cond)
    i_0 = saturation_current(params, cond)
    w = v + i * params.R_s * params.n_s
    rhs = i_s - i_0 * math.expm1(w / _diode_scale(params, cond)) - w / (params.R_p * params.n_s)
    return rhs - i


def array_current(params: PvParams, cond: Conditions, v: float) -> float:
    """Array output current at terminal voltage ``v`` (implicit equation in i)."""
    if v < 0:
        raise ValueError(f"voltage must be >= 0, got {v}")
    i_s = light_current(params, cond)
    # residual is strictly decreasing in i; widen the bracket until it changes sign
    lo, hi = -max(i_s, 1.0), 2.0 * max(i_s, 1.0)
    r_lo = array_current_residual(params, cond, v, lo)
    while r_lo < 0:
        lo *= 2.0
        r_lo = array_current_residual(params, cond, v, lo)
        if lo < -1e9:
            raise ArithmeticError(f"no bracket for array current at v={v}")
    if array_current_residual(params, cond, v, hi) > 0:
        raise ArithmeticError(f"no bracket for array current at v={v}")
    tol = 1e-13 * max(1.0, i_s)
    return brentq(lambda i: array_current_residual(params, cond, v, i), lo, hi, xtol=tol, rtol=1e-15)


def _voltage_ceiling(params: PvParams, cond: Conditions) -> float:
    # open-circuit voltage ignoring the shunt; the true v_oc lies below it
    i_s = light_current(params, cond)
    i_0 = saturation_current(params, cond)
    return _diode_scale(params, cond) * math.log1p(i_s / i_0)


def open_circuit_voltage(params: PvParams, cond: Conditions) -> float:
    i_s = light_current(params, cond)
    if i_s == 0.0:
        return 0.0
    i_0 = saturation_current(params, cond)
    scale = _diode_scale(params, cond)
    shunt = params.R_p * params.n_s

    def current_at(v: float) -> float:
        return i_s - i_0 * math.expm1(v / scale) - v / shunt

    return brentq(current_at, 0.0, _voltage_ceiling(params, cond), xtol=1e-13, rtol=1e-15)


def steady_state_power(params: PvParams, cond: Conditions, u: float) -> SteadyState:
    """Operating point of array + buck converter at duty cycle ``u``.

    At steady state the inductor current is ``v u / R_c`` and the array current
    is ``u`` times that, so the array sees the load line ``i = v u^2 / R_c``.
    Substituting the load line into the diode equation leaves one monotone
    equation in ``v`` on ``[0, v_oc]``.
    """
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"duty cycle must be in [0, 1], got {u}")
    if u == 0.0:
        return SteadyState(power=0.0, v=open_circuit_voltage(params, cond), i=0.0)
    i_s = light_current(params, cond)
    if i_s == 0.0:
        return SteadyState(power=0.0, v=0.0, i=0.0)
    g = u * u / params.R_c

    def load_residual(v: float) -> float:
        return -array_current_residual(params, cond, v, v * g)

    v = brentq(load_residual, 0.0, _voltage_ceiling(params, cond), xtol=1e-13, rtol=1e-15)
    i = v * g
    return SteadyState(power=v * i, v=v, i=i)


def power_curve(params: PvParams, cond: Conditions, duty_cycles) -> np.ndarray:
    return np.array([steady_state_power(params, cond, float(u)).power for u in duty_cycles])


def duty_cycle_grid(spacing: float = 0.05) -> InputGrid:
    """Grid over the open interval (0, 1): indices 1 .. round(1/spacing) - 1."""
    n = int(round(1.0 / spacing))
    if not math.isclose(n * spacing, 1.0, rel_tol=1e-9):
        raise ValueError(f"spacing must divide 1 evenly, got {spacing}")
    return InputGrid(spacing=spacing, bounds=(1, n - 1))


def day_objective(
    params: PvParams | None = None,
    profile: DayProfile | None = None,
    grid: InputGrid | None = None,
    rho: float = 5.0,
    seed: int = 0,
    noise_kind: NoiseKind = NoiseKind.GAUSSIAN,
    cache: bool = True,
) -> Objective:
    """Produced power over the day as a noisy time-varying objective of ``u``."""
    params = params or PvParams()
    profile = profile or DayProfile()
    grid = grid or duty_cycle_grid()

    def truth(k: int, u: float) -> float:
        return steady_state_power(params, profile.conditions(k), u).power

    return Objective(
        truth=truth,
        grid=grid,
        noise_scale=rho,
        noise_kind=noise_kind,
        seed=seed,
        cache=cache,
        name="pv-day",
    )
