"""Stationary-frame averaged simulation of the full controller.

The controller functions from :mod:`uvoc_tsa.controller` drive an R-L plant
fed by a rotating Thevenin source.  Nothing here shares code with the
reduced synchronous-frame equations, which is what makes it a useful
cross-check.  State vector (all peak, alpha/beta interleaved)::

    [v_a, v_b, i_a, i_b, yr_a, yr_b, yl_a, yl_b]
"""

from __future__ import annotations

import math

import numpy as np

from .controller import (
    ControllerState,
    FaultFsmState,
    Setpoints,
    gain_schedule,
    modulation_voltage,
    oscillator_rhs,
    ramp_value,
    virtual_impedance_derivs,
)
from .hybrid import HybridSim, Toggles
from .params import GridThevenin, SystemParams
from .solver import IntegratorConfig

__all__ = [
    "AlphaBetaSim",
    "PhysicalLoop",
    "physical_loop",
    "full_rhs",
    "measure_vpoc",
    "state_from_phasors",
    "rotating_quantities",
]

SQRT2 = math.sqrt(2.0)


class PhysicalLoop:
    """Series R-L between the converter bridge and the Thevenin source.

    The virtual impedance is excluded: it lives inside the PWM reference.
    """

    __slots__ = ("r", "l", "v_th_peak", "omega_g", "r_th", "l_th")

    def __init__(self, params: SystemParams, grid: GridThevenin):
        v_th, r_th, l_th = params.grid_si(grid)
        self.r = params.r12 + r_th
        self.l = params.l12 + l_th
        if self.l <= 0:
            raise ValueError("physical loop inductance must be positive")
        self.v_th_peak = SQRT2 * v_th
        self.omega_g = grid.omega_g
        self.r_th = r_th
        self.l_th = l_th

    def source(self, t: float) -> complex:
        return self.v_th_peak * complex(math.cos(self.omega_g * t), math.sin(self.omega_g * t))


def physical_loop(params: SystemParams, grid: GridThevenin) -> PhysicalLoop:
    return PhysicalLoop(params, grid)


def _unpack(y) -> tuple[complex, complex, complex, complex]:
    return complex(y[0], y[1]), complex(y[2], y[3]), complex(y[4], y[5]), complex(y[6], y[7])


def full_rhs(
    t: float,
    y,
    sp: Setpoints,
    params: SystemParams,
    loop: PhysicalLoop,
    fsm: FaultFsmState,
    limiter: bool = True,
    q0_boost: bool = False,
) -> np.ndarray:
    """Coupled controller + plant derivative for a fixed FSM state."""
    v, i, yr, yl = _unpack(y)
    state = ControllerState(v, yr, yl, fsm)
    gains = gain_schedule(fsm, params, sp, q0_boost)
    dv = oscillator_rhs(state, i, sp, params, gains, limiter)
    vr = modulation_voltage(state, i, sp, params, gains, limiter)
    di = (vr - loop.source(t) - loop.r * i) / loop.l
    dyr, dyl = virtual_impedance_derivs(state, i, params)
    return np.array([dv.real, dv.imag, di.real, di.imag, dyr.real, dyr.imag, dyl.real, dyl.imag])


def measure_vpoc(t: float, y, loop: PhysicalLoop) -> complex:
    """Terminal voltage ``v_TH + Z_TH i`` with the reactance taken at ``omega_g``."""
    i = complex(y[2], y[3])
    return loop.source(t) + complex(loop.r_th, loop.omega_g * loop.l_th) * i


def state_from_phasors(params: SystemParams, v_mag: float, delta: float, i_rms: complex, omega: float, t: float = 0.0) -> np.ndarray:
    """Oracle state for a sinusoidal steady state given RMS grid-frame phasors.

    Filter states are set to their periodic steady state at ``omega``.
    """
    rot = complex(math.cos(omega * t), math.sin(omega * t))
    v = SQRT2 * v_mag * complex(math.cos(delta), math.sin(delta)) * rot
    i = SQRT2 * i_rms * rot
    wb = params.control.omega_b
    yr = wb * params.rv0 * i / (1j * omega + wb)
    yl = wb * wb * params.lv0 * i / (1j * omega + wb)
    return np.array([v.real, v.imag, i.real, i.imag, yr.real, yr.imag, yl.real, yl.imag])


def rotating_quantities(t, y, omega_g: float) -> dict[str, np.ndarray]:
    """``V`` (RMS), unwrapped ``delta`` and ``|i|`` (RMS) from oracle samples."""
    t = np.asarray(t, dtype=float)
    y = np.atleast_2d(y)
    v = y[:, 0] + 1j * y[:, 1]
    i = y[:, 2] + 1j * y[:, 3]
    delta = np.unwrap(np.angle(v) - omega_g * t)
    return {"v": np.abs(v) / SQRT2, "delta": delta, "i": np.abs(i) / SQRT2}


class AlphaBetaSim(HybridSim):
    """Hybrid driver specialised to the stationary-frame plant."""

    def __init__(self, params: SystemParams, sp: Setpoints, toggles: Toggles, config: IntegratorConfig | None = None, **kw):
        super().__init__(params, sp, toggles, config, **kw)
        self._loops: dict[GridThevenin, PhysicalLoop] = {}

    def loop(self, grid: GridThevenin) -> PhysicalLoop:
        lp = self._loops.get(grid)
        if lp is None:
            lp = self._loops[grid] = PhysicalLoop(self.params, grid)
        return lp

    def make_rhs(self, fsm, grid, ramp_clear):
        lp = self.loop(grid)
        tg = self.toggles
        if ramp_clear is None:
            return lambda t, y: full_rhs(t, y, self.sp, self.params, lp, fsm, tg.limiter_enabled, tg.q0_boost)
        t_ramp = self.params.control.t_ramp

        def rhs(t, y):
            f = FaultFsmState(0, ramp_value(ramp_clear, t, t_ramp), ramp_clear)
            return full_rhs(t, y, self.sp, self.params, lp, f, tg.limiter_enabled, tg.q0_boost)

        return rhs

    def current_norm(self, t, y, fsm, grid):
        return math.hypot(y[2], y[3])

    def vpoc_norm(self, t, y, fsm, grid):
        return abs(measure_vpoc(t, y, self.loop(grid)))

    def voltage_norm(self, y):
        return math.hypot(y[0], y[1])

    def thresholds(self):
        p = self.params
        return SQRT2 * p.i_thresh, SQRT2 * p.v_thresh, SQRT2 * 0.01 * p.v0

    def observe_state(self, t, y, fsm, grid):
        p = self.params
        v = complex(y[0], y[1])
        delta = math.atan2(v.imag, v.real) - grid.omega_g * t
        return {
            "v": abs(v) / SQRT2 / p.v0,
            "delta": (delta + math.pi) % (2 * math.pi) - math.pi,
            "i": math.hypot(y[2], y[3]) / SQRT2 / p.base.i_base,
            "v_poc": abs(measure_vpoc(t, y, self.loop(grid))) / SQRT2 / p.v0,
        }
