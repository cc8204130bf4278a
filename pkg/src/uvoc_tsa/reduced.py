"""Reduced-order synchronous-frame model of a uVOC converter on a Thevenin grid.

State is ``(V, delta)`` or ``(V, delta, I_d, I_q)``: L-N RMS oscillator
voltage in volts, power angle in radians relative to the Thevenin source,
RMS output current in amps.  The frame rotates at ``omega_g`` and is
aligned with ``v_TH``.

Everything here is vectorised over numpy arrays where it makes sense so the
phase-plane sampler can evaluate whole grids at once.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .controller import DegenerateVoltageError, FaultFsmState, Gains, Setpoints, gain_schedule
from .params import GridThevenin, SystemParams

__all__ = [
    "Mode",
    "CurrentModel",
    "ModelMode",
    "NetworkAggregate",
    "SingularNetworkError",
    "effective_virtual_impedance",
    "network_aggregate",
    "quasi_static_pq_unconstrained",
    "quasi_static_pq_constrained",
    "saturated_reference_dq",
    "rhs_unconstrained",
    "rhs_constrained",
    "rhs_current_dynamic",
    "steady_state_current",
    "feasibility_bound",
    "ReducedModel",
    "constrained_setpoints",
    "mode_model",
    "wrap_angle",
]


class Mode(str, enum.Enum):
    UNCONSTRAINED = "unconstrained"
    CONSTRAINED = "constrained"


class CurrentModel(str, enum.Enum):
    QUASI_STATIC = "quasi-static"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class ModelMode:
    mode: Mode = Mode.UNCONSTRAINED
    current_model: CurrentModel = CurrentModel.QUASI_STATIC

    @property
    def fsm(self) -> FaultFsmState:
        return FaultFsmState.latched() if self.mode is Mode.CONSTRAINED else FaultFsmState()


class SingularNetworkError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class NetworkAggregate:
    """Lumped series loop seen by the oscillator voltage (ohms, henries).

    ``r_e`` includes the active resistance when it is engaged: the PWM
    reference subtracts ``R0 i`` as well as adding ``R0 i0_sat``.
    """

    r_e: float
    l_e: float
    omega_g: float

    @property
    def x_e(self) -> float:
        return self.omega_g * self.l_e

    @property
    def z(self) -> complex:
        return complex(self.r_e, self.x_e)


def effective_virtual_impedance(params: SystemParams, x_r: float) -> tuple[float, float]:
    """``(R_v [ohm], L_v [H])`` from ``Z_v(j w0)`` with the inductive branch scaled by ``x_r``."""
    wb = params.control.omega_b
    s = 1j * params.omega0
    zv = (params.rv0 + x_r * s * params.lv0) / (s / wb + 1.0)
    return zv.real, zv.imag / params.omega0


def network_aggregate(params: SystemParams, grid: GridThevenin, x_r: float = 0.0, r0_active: bool = False) -> NetworkAggregate:
    r_v, l_v = effective_virtual_impedance(params, x_r)
    _, r_th, l_th = params.grid_si(grid)
    r_e = r_v + params.r12 + r_th + (params.r0 if r0_active else 0.0)
    return NetworkAggregate(r_e, l_v + params.l12 + l_th, grid.omega_g)


def _den(net: NetworkAggregate) -> float:
    d = net.r_e**2 + net.x_e**2
    if d == 0:
        raise SingularNetworkError("zero total loop impedance")
    return d


def quasi_static_pq_unconstrained(v_mag, delta, v_th: float, net: NetworkAggregate, n: int):
    """Steady-state (P, Q) from the oscillator terminal into an R-L loop."""
    re, xe = net.r_e, net.x_e
    den = _den(net)
    c, s = np.cos(delta), np.sin(delta)
    p = n * (v_mag**2 * re - v_mag * v_th * (re * c - xe * s)) / den
    q = n * (v_mag**2 * xe - v_mag * v_th * (xe * c + re * s)) / den
    return p, q


def quasi_static_pq_constrained(v_mag, delta, sp: Setpoints, v_th: float, net: NetworkAggregate, r0: float, i_m: float, n: int):
    """Steady-state (P, Q) with the saturated reference and active resistance.

    ``sp`` carries the effective (possibly boosted) reactive reference.
    """
    s0 = sp.s0
    if s0 == 0:
        raise ZeroDivisionError("S0 = 0: saturated current direction undefined")
    p, q = quasi_static_pq_unconstrained(v_mag, delta, v_th, net, n)
    re, xe = net.r_e, net.x_e
    k = n * v_mag * r0 * i_m / (s0 * _den(net))
    return p + k * (re * sp.p0 - xe * sp.q0), q + k * (xe * sp.p0 + re * sp.q0)


def saturated_reference_dq(delta, sp: Setpoints, i_m: float):
    """RMS dq components of the saturated reference."""
    k = i_m / sp.s0
    c, s = np.cos(delta), np.sin(delta)
    return k * (sp.p0 * c + sp.q0 * s), k * (sp.p0 * s - sp.q0 * c)


def rhs_current_dynamic(v_mag, delta, i_d, i_q, v_th: float, net: NetworkAggregate, r0: float = 0.0, i0_dq=(0.0, 0.0)):
    """``(dI_d/dt, dI_q/dt)`` of the series R-L loop.

    ``r0`` and ``i0_dq`` are the active resistance forcing; pass zeros for
    unconstrained operation.  ``net.r_e`` must already contain ``r0``.
    """
    if net.l_e <= 0:
        raise SingularNetworkError("l_e must be positive")
    a = net.r_e / net.l_e
    w = net.omega_g
    fd = (v_mag * np.cos(delta) + r0 * i0_dq[0] - v_th) / net.l_e
    fq = (v_mag * np.sin(delta) + r0 * i0_dq[1]) / net.l_e
    return -a * i_d + w * i_q + fd, -w * i_d - a * i_q + fq


def steady_state_current(v_mag, delta, v_th: float, net: NetworkAggregate, r0: float = 0.0, i0_dq=(0.0, 0.0)):
    """Complex RMS current at which :func:`rhs_current_dynamic` vanishes."""
    e = v_mag * np.exp(1j * delta) + r0 * (i0_dq[0] + 1j * i0_dq[1]) - v_th
    return e / net.z


def _check_v(v_mag, floor: float):
    if np.any(np.asarray(v_mag) < floor):
        raise DegenerateVoltageError(f"V below floor {floor:g} V")


def _power_dq(v_mag, delta, i_d, i_q, n):
    vd, vq = v_mag * np.cos(delta), v_mag * np.sin(delta)
    return n * (vd * i_d + vq * i_q), n * (vq * i_d - vd * i_q)


def rhs_unconstrained(state, sp: Setpoints, v_th: float, net: NetworkAggregate, params: SystemParams, gains: Gains, v_floor: float | None = None):
    """Droop dynamics in the grid frame.

    ``state`` is ``(V, delta)`` (quasi-static currents) or
    ``(V, delta, I_d, I_q)`` (dynamic currents, four derivatives returned).
    """
    v, d = state[0], state[1]
    _check_v(v, params.v0 * 0.01 if v_floor is None else v_floor)
    n = params.n
    if len(state) == 2:
        p, q = quasi_static_pq_unconstrained(v, d, v_th, net, n)
    else:
        p, q = _power_dq(v, d, state[2], state[3], n)
    dv = 2.0 * gains.mu * v * (params.v0**2 - v**2) + gains.eta * (sp.q0 - q) / (n * v)
    dd = params.omega0 - net.omega_g + gains.eta * (sp.p0 - p) / (n * v**2)
    if len(state) == 2:
        return np.array([dv, dd])
    did, diq = rhs_current_dynamic(v, d, state[2], state[3], v_th, net)
    return np.array([dv, dd, did, diq])


def rhs_constrained(state, sp: Setpoints, v_th: float, net: NetworkAggregate, params: SystemParams, gains: Gains, v_floor: float | None = None):
    """Current-constrained dynamics: references scaled by ``N V I_m / S0``, mu = 0.

    ``net`` should be built with ``r0_active=True`` and ``x_r=1``.
    """
    v, d = state[0], state[1]
    _check_v(v, params.v0 * 0.01 if v_floor is None else v_floor)
    n, i_m, r0 = params.n, params.i_m, params.r0
    if len(state) == 2:
        p, q = quasi_static_pq_constrained(v, d, sp, v_th, net, r0, i_m, n)
    else:
        p, q = _power_dq(v, d, state[2], state[3], n)
    scale = n * v * i_m / sp.s0
    dv = gains.eta * (scale * sp.q0 - q) / (n * v)
    dd = params.omega0 - net.omega_g + gains.eta * (scale * sp.p0 - p) / (n * v**2)
    if len(state) == 2:
        return np.array([dv, dd])
    i0 = saturated_reference_dq(d, sp, i_m)
    did, diq = rhs_current_dynamic(v, d, state[2], state[3], v_th, net, r0, i0)
    return np.array([dv, dd, did, diq])


def feasibility_bound(v_th: float, z_th_mag: float, i_lim: float) -> float:
    """Largest terminal voltage reachable with ``|i| <= i_lim`` (any phase)."""
    if min(v_th, z_th_mag, i_lim) < 0:
        raise ValueError("inputs must be non-negative")
    return v_th + z_th_mag * i_lim


class ReducedModel:
    """Scheduled reduced model: gains, limiter and loop follow the FSM state.

    With ``fsm`` latched and ``saturated=True`` (the reference is always on
    the limiter circle) this is exactly :func:`rhs_constrained`; with ``x_r = 0`` and no saturation it is
    :func:`rhs_unconstrained`.  In between (the ``x_r`` ramp, or a
    saturated reference outside the latch) it interpolates the way the
    controller does.
    """

    def __init__(
        self,
        params: SystemParams,
        grid: GridThevenin,
        sp: Setpoints,
        fsm: FaultFsmState = FaultFsmState(),
        current_model: CurrentModel = CurrentModel.QUASI_STATIC,
        limiter: bool = True,
        q0_boost: bool = False,
        v_floor: float | None = None,
        saturated: bool = False,
    ):
        self.params = params
        self.grid = grid
        self.sp = sp
        self.fsm = fsm
        self.current_model = CurrentModel(current_model)
        self.limiter = limiter
        self.q0_boost = q0_boost
        self.saturated = saturated
        self.v_floor = params.v0 * 0.01 if v_floor is None else v_floor
        self.v_th, self.r_th, self.l_th = params.grid_si(grid)
        self.gains = gain_schedule(fsm, params, sp, q0_boost)
        self.net = network_aggregate(params, grid, fsm.x_r, r0_active=fsm.x_f == 1)

    @property
    def dynamic(self) -> bool:
        return self.current_model is CurrentModel.DYNAMIC

    @property
    def n_states(self) -> int:
        return 4 if self.dynamic else 2

    def with_fsm(self, fsm: FaultFsmState) -> "ReducedModel":
        return ReducedModel(self.params, self.grid, self.sp, fsm, self.current_model, self.limiter, self.q0_boost, self.v_floor, self.saturated)

    def with_grid(self, grid: GridThevenin) -> "ReducedModel":
        return ReducedModel(self.params, grid, self.sp, self.fsm, self.current_model, self.limiter, self.q0_boost, self.v_floor, self.saturated)

    def reference(self, v_mag, delta):
        """Complex RMS current reference after the (optional) limiter."""
        n = self.params.n
        i0 = complex(self.sp.p0, -self.gains.q0) * np.exp(1j * delta) / (n * v_mag)
        if self.saturated:
            return i0 * (self.params.i_m / np.abs(i0))
        if self.limiter:
            mag = np.abs(i0)
            i_m = self.params.i_m
            i0 = np.where(mag > i_m, i0 * (i_m / np.maximum(mag, 1e-300)), i0)
        return i0

    def current(self, y):
        """Complex RMS output current for a state vector."""
        if self.dynamic:
            return complex(y[2], y[3])
        v, d = y[0], y[1]
        i0 = self.reference(v, d)
        e = v * np.exp(1j * d) + self.gains.r0 * i0 - self.v_th
        return e / self.net.z

    def v_poc(self, y) -> complex:
        return self.v_th + complex(self.r_th, self.grid.omega_g * self.l_th) * self.current(y)

    def rates(self, v_mag, delta, current=None):
        """``(dV/dt, ddelta/dt)``; vectorised over ``v_mag``/``delta`` for quasi-static currents."""
        p = self.params
        g = self.gains
        i0 = self.reference(v_mag, delta)
        if current is None:
            e = v_mag * np.exp(1j * delta) + g.r0 * i0 - self.v_th
            current = e / self.net.z
        err = (i0 - current) * np.exp(-1j * delta)
        dv = 2.0 * g.mu * v_mag * (p.v0**2 - v_mag**2) - g.eta * err.imag
        dd = p.omega0 - self.grid.omega_g + g.eta * err.real / v_mag
        return dv, dd

    def rhs(self, t, y):
        v, d = y[0], y[1]
        if v < self.v_floor:
            raise DegenerateVoltageError(f"V = {v:.4g} V below floor")
        if not self.dynamic:
            dv, dd = self.rates(v, d)
            return np.array([dv, dd])
        i = complex(y[2], y[3])
        dv, dd = self.rates(v, d, i)
        i0 = self.reference(v, d)
        net = self.net
        di = (v * np.exp(1j * d) + self.gains.r0 * i0 - self.v_th - net.z * i) / net.l_e
        return np.array([dv, dd, di.real, di.imag])

    def initial_currents(self, v_mag: float, delta: float) -> np.ndarray:
        """Dynamic-model state with the currents at their algebraic steady state."""
        i0 = self.reference(v_mag, delta)
        i = (v_mag * np.exp(1j * delta) + self.gains.r0 * i0 - self.v_th) / self.net.z
        return np.array([v_mag, delta, i.real, i.imag])


def constrained_setpoints(sp: Setpoints, q0_boost: bool) -> Setpoints:
    """Setpoints as seen while latched (reactive reference boosted if enabled)."""
    return Setpoints(sp.p0, sp.boosted_q0() if q0_boost else sp.q0, sp.s_boost)


def mode_model(params: SystemParams, grid: GridThevenin, sp: Setpoints, mode: ModelMode, q0_boost: bool = False) -> ReducedModel:
    """Fixed-mode model used for phase-plane work.

    Constrained mode assumes the reference sits on the limiter circle;
    unconstrained mode has no limiter at all.
    """
    constrained = mode.mode is Mode.CONSTRAINED
    return ReducedModel(
        params, grid, sp, mode.fsm, mode.current_model,
        limiter=False, q0_boost=q0_boost, saturated=constrained,
    )


def wrap_angle(a):
    return (np.asarray(a) + math.pi) % (2 * math.pi) - math.pi
