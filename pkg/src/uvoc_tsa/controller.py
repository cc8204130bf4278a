"""uVOC control law, current limiter, virtual impedance and fault FSM.

Space vectors in the stationary frame are plain Python ``complex`` numbers
(``re`` = alpha, ``im`` = beta) in peak volts / peak amps.  All functions
are pure; state lives in the small frozen dataclasses below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .params import SystemParams

__all__ = [
    "DegenerateVoltageError",
    "Setpoints",
    "FaultFsmState",
    "ControllerState",
    "Gains",
    "current_reference",
    "circular_limit",
    "saturated_reference",
    "gain_schedule",
    "oscillator_rhs",
    "virtual_impedance_step",
    "virtual_impedance_output",
    "modulation_voltage",
    "fsm_update",
    "ramp_value",
]

V_FLOOR = 1e-6  # volts


class DegenerateVoltageError(ArithmeticError):
    """Oscillator voltage too close to the origin to define a reference."""


@dataclass(frozen=True)
class Setpoints:
    """Power references in W / var.

    ``s_boost`` is the apparent power the reactive reference is raised to
    on fault detection (``Q0 = sqrt(s_boost^2 - P0^2)``); ``None`` disables
    the boost regardless of the scenario toggle.
    """

    p0: float
    q0: float = 0.0
    s_boost: float | None = None

    def __post_init__(self):
        if self.s_boost is not None and self.s_boost < abs(self.p0):
            raise ValueError("s_boost must be at least |p0|")

    @property
    def s0(self) -> float:
        return math.hypot(self.p0, self.q0)

    def boosted_q0(self) -> float:
        if self.s_boost is None:
            return self.q0
        return math.sqrt(self.s_boost**2 - self.p0**2)

    @classmethod
    def from_pu(cls, params: SystemParams, p0: float, q0: float = 0.0, s_boost: float | None = None):
        sb = params.base.s_base
        return cls(p0 * sb, q0 * sb, None if s_boost is None else s_boost * sb)


@dataclass(frozen=True)
class FaultFsmState:
    x_f: int = 0
    x_r: float = 0.0
    clear_time: float | None = None

    def __post_init__(self):
        if self.x_f not in (0, 1):
            raise ValueError("x_f must be 0 or 1")
        if not 0.0 <= self.x_r <= 1.0:
            raise ValueError("x_r must lie in [0, 1]")
        if self.x_f == 1 and self.x_r != 1.0:
            raise ValueError("x_f = 1 requires x_r = 1")

    @classmethod
    def latched(cls) -> "FaultFsmState":
        return cls(1, 1.0, None)


@dataclass(frozen=True)
class ControllerState:
    v: complex
    zv_r_state: complex = 0j
    zv_l_state: complex = 0j
    fsm: FaultFsmState = field(default_factory=FaultFsmState)


@dataclass(frozen=True)
class Gains:
    eta: float
    mu: float
    q0: float
    r0: float  # active resistance in ohms, zero unless latched


def current_reference(v: complex, sp: Setpoints, n: int, q0: float | None = None, v_floor: float = V_FLOOR) -> complex:
    """Instantaneous-power current reference ``2 (P0 - jQ0) v / (N |v|^2)``."""
    mag2 = v.real * v.real + v.imag * v.imag
    if mag2 < v_floor * v_floor:
        raise DegenerateVoltageError(f"|v| = {math.sqrt(mag2):.3g} V below floor {v_floor:g} V")
    q = sp.q0 if q0 is None else q0
    return 2.0 * complex(sp.p0, -q) * v / (n * mag2)


def circular_limit(i0: complex, i_m_peak: float) -> complex:
    mag = abs(i0)
    if mag <= i_m_peak:
        return i0
    return i0 * (i_m_peak / mag)


def gain_schedule(fsm: FaultFsmState, params: SystemParams, sp: Setpoints, q0_boost: bool = False) -> Gains:
    ctrl = params.control
    eta = ctrl.eta0 * (1.0 + fsm.x_r / ctrl.tau_f)
    mu = (1.0 - fsm.x_r) * ctrl.mu0
    q0 = sp.boosted_q0() if (q0_boost and fsm.x_f == 1) else sp.q0
    r0 = params.r0 if fsm.x_f == 1 else 0.0
    return Gains(eta, mu, q0, r0)


def saturated_reference(v: complex, sp: Setpoints, params: SystemParams, gains: Gains, limiter: bool = True) -> complex:
    i0 = current_reference(v, sp, params.n, gains.q0)
    return circular_limit(i0, params.i_m_peak) if limiter else i0


def oscillator_rhs(
    state: ControllerState,
    i_meas: complex,
    sp: Setpoints,
    params: SystemParams,
    gains: Gains | None = None,
    limiter: bool = True,
    q0_boost: bool = False,
) -> complex:
    """``dv/dt = j w0 v + j eta (i0_sat - i) + mu (V0^2 - |v|^2) v`` (peak units)."""
    g = gains or gain_schedule(state.fsm, params, sp, q0_boost)
    v = state.v
    i0s = saturated_reference(v, sp, params, g, limiter)
    mag2 = v.real * v.real + v.imag * v.imag
    return 1j * params.omega0 * v + 1j * g.eta * (i0s - i_meas) + g.mu * (params.v0_peak**2 - mag2) * v


# -- virtual impedance ------------------------------------------------------
#
#   Z_v(s) = Rv0 / (s/wb + 1) + x_r * s Lv0 / (s/wb + 1)
#
# resistive branch state  y_r:  y_r' = wb (Rv0 i - y_r)           (output y_r)
# inductive branch state  y_l:  y_l' = wb (wb Lv0 i - y_l)        (output wb Lv0 i - y_l)


def virtual_impedance_output(state: ControllerState, i_meas: complex, params: SystemParams, x_r: float) -> complex:
    wb = params.control.omega_b
    return state.zv_r_state + x_r * (wb * params.lv0 * i_meas - state.zv_l_state)


def virtual_impedance_derivs(state: ControllerState, i_meas: complex, params: SystemParams) -> tuple[complex, complex]:
    wb = params.control.omega_b
    return wb * (params.rv0 * i_meas - state.zv_r_state), wb * (wb * params.lv0 * i_meas - state.zv_l_state)


def virtual_impedance_step(
    state: ControllerState,
    i_meas: complex,
    dt: float,
    x_r: float,
    params: SystemParams,
    i_prev: complex | None = None,
) -> tuple[ControllerState, complex]:
    """Advance both filter states by ``dt`` with the trapezoidal (Tustin) rule.

    ``i_prev`` is the current at the start of the interval (defaults to
    ``i_meas``, i.e. a held sample).  The inductive state advances whatever
    ``x_r`` is; only its output is scaled.  Returns the new state and the
    voltage drop ``Z_v i`` at the end of the interval.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    wb = params.control.omega_b
    ip = i_meas if i_prev is None else i_prev
    a = wb * dt / 2.0
    yr = ((1.0 - a) * state.zv_r_state + a * params.rv0 * (ip + i_meas)) / (1.0 + a)
    yl = ((1.0 - a) * state.zv_l_state + a * wb * params.lv0 * (ip + i_meas)) / (1.0 + a)
    new = replace(state, zv_r_state=yr, zv_l_state=yl)
    return new, virtual_impedance_output(new, i_meas, params, x_r)


def modulation_voltage(
    state: ControllerState,
    i_meas: complex,
    sp: Setpoints,
    params: SystemParams,
    gains: Gains | None = None,
    limiter: bool = True,
    q0_boost: bool = False,
) -> complex:
    """PWM reference ``v + R0 (i0_sat - i) - Z_v i``; R0 only while latched."""
    g = gains or gain_schedule(state.fsm, params, sp, q0_boost)
    drop = virtual_impedance_output(state, i_meas, params, state.fsm.x_r)
    vr = state.v - drop
    if g.r0:
        vr += g.r0 * (saturated_reference(state.v, sp, params, g, limiter) - i_meas)
    return vr


# -- fault management --------------------------------------------------------


def ramp_value(clear_time: float | None, t: float, t_ramp: float) -> float:
    if clear_time is None:
        return 0.0
    return min(1.0, max(0.0, 1.0 - (t - clear_time) / t_ramp))


def fsm_update(
    fsm: FaultFsmState,
    i_norm: float,
    v_poc_norm: float,
    t: float,
    params: SystemParams,
    peak: bool = True,
) -> FaultFsmState:
    """One evaluation of the latch/ramp logic.

    ``i_norm`` and ``v_poc_norm`` are space-vector norms (peak) when
    ``peak`` is true, RMS otherwise; thresholds are scaled to match.
    """
    k = math.sqrt(2.0) if peak else 1.0
    if i_norm > k * params.i_thresh:
        return FaultFsmState.latched()
    if fsm.x_f == 1:
        if v_poc_norm > k * params.v_thresh:
            return FaultFsmState(0, 1.0, t)
        return fsm
    if fsm.x_r > 0.0:
        if fsm.clear_time is None:
            return FaultFsmState(0, 0.0, None)
        return FaultFsmState(0, ramp_value(fsm.clear_time, t, params.control.t_ramp), fsm.clear_time)
    return fsm
