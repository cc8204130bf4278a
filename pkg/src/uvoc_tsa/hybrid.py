"""Time-domain simulation with grid steps and the fault-management FSM.

The FSM state and the grid phase are piecewise-constant auxiliary data
(``x_r`` is piecewise-linear during the ramp).  They change only at located
events, never inside a trial step, so rejected steps cannot corrupt the
latch.  Two plants share this driver: the reduced synchronous-frame model
(:class:`ReducedSim`) and the stationary-frame oracle
(:class:`uvoc_tsa.oracle.AlphaBetaSim`).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .controller import FaultFsmState, Setpoints, ramp_value
from .params import GridThevenin, SystemParams
from .reduced import CurrentModel, ReducedModel
from .solver import EventSpec, IntegrationError, IntegratorConfig, Trajectory, integrate

__all__ = ["Toggles", "SwitchRecord", "HybridResult", "HybridSim", "ReducedSim", "FSM_DWELL"]

# One period of a 37.5 kHz digital controller.  After any latch or release
# the FSM is not re-evaluated before this much time has passed; without it a
# current hovering at the threshold produces an infinite switching sequence.
FSM_DWELL = 1.0 / 37.5e3


@dataclass(frozen=True)
class Toggles:
    limiter_enabled: bool = True
    fsm_enabled: bool = True
    q0_boost: bool = False


@dataclass(frozen=True)
class SwitchRecord:
    t: float
    fsm: FaultFsmState
    grid_index: int
    reason: str


@dataclass
class HybridResult:
    traj: Trajectory
    switches: list[SwitchRecord]
    grids: list[GridThevenin]
    status: str
    sim: "HybridSim" = field(repr=False)

    @property
    def t(self) -> np.ndarray:
        return self.traj.t

    @property
    def y(self) -> np.ndarray:
        return self.traj.y

    def record_at(self, t: float, before: bool = False) -> SwitchRecord:
        times = [s.t for s in self.switches]
        k = (bisect.bisect_left(times, t) if before else bisect.bisect_right(times, t)) - 1
        return self.switches[max(k, 0)]

    def fsm_at(self, t: float, before: bool = False) -> FaultFsmState:
        rec = self.record_at(t, before)
        fsm = rec.fsm
        if fsm.x_f == 0 and fsm.clear_time is not None:
            xr = ramp_value(fsm.clear_time, t, self.sim.params.control.t_ramp)
            return FaultFsmState(0, xr, fsm.clear_time if xr > 0 else None)
        return fsm

    def grid_at(self, t: float, before: bool = False) -> GridThevenin:
        return self.grids[self.record_at(t, before).grid_index]

    def state_at(self, t: float) -> np.ndarray:
        return self.traj(t)

    def table(self) -> dict[str, np.ndarray]:
        """Observables at every stored sample.

        At a switching instant the time appears twice; the first copy is
        reported with the pre-switch FSM state and grid.
        """
        t, y = self.traj.t, self.traj.y
        n = len(t)
        cols: dict[str, list] = {k: [] for k in ("t", "v", "delta", "i", "v_poc", "x_f", "x_r", "v_th")}
        for k in range(n):
            before = k + 1 < n and t[k + 1] == t[k]
            tk = float(t[k])
            fsm = self.fsm_at(tk, before)
            grid = self.grid_at(tk, before)
            obs = self.sim.observe_state(tk, y[k], fsm, grid)
            cols["t"].append(tk)
            for key in ("v", "delta", "i", "v_poc"):
                cols[key].append(float(obs[key]))
            cols["x_f"].append(fsm.x_f)
            cols["x_r"].append(fsm.x_r)
            cols["v_th"].append(grid.v_th)
        return {k: np.asarray(v) for k, v in cols.items()}

    def n_latches(self) -> int:
        return sum(1 for s in self.switches if s.reason == "over-current")


class HybridSim:
    """Event-driven driver; subclasses supply the plant.

    ``schedule`` lists ``(t, grid)`` pairs; the first entry must be at or
    before ``t0``.  Norms returned by :meth:`current_norm` /
    :meth:`vpoc_norm` are compared against :meth:`thresholds`.
    """

    def __init__(
        self,
        params: SystemParams,
        sp: Setpoints,
        toggles: Toggles,
        config: IntegratorConfig | None = None,
        fsm_dwell: float = FSM_DWELL,
    ):
        if fsm_dwell < 0:
            raise ValueError("fsm_dwell must be non-negative")
        self.params = params
        self.sp = sp
        self.toggles = toggles
        self.config = config or IntegratorConfig()
        self.fsm_dwell = fsm_dwell

    # -- plant interface -------------------------------------------------
    def make_rhs(self, fsm: FaultFsmState, grid: GridThevenin, ramp_clear: float | None):
        raise NotImplementedError

    def current_norm(self, t: float, y: np.ndarray, fsm: FaultFsmState, grid: GridThevenin) -> float:
        raise NotImplementedError

    def vpoc_norm(self, t: float, y: np.ndarray, fsm: FaultFsmState, grid: GridThevenin) -> float:
        raise NotImplementedError

    def voltage_norm(self, y: np.ndarray) -> float:
        raise NotImplementedError

    def thresholds(self) -> tuple[float, float, float]:
        """``(i_thresh, v_thresh, v_floor)`` in the units of the norms."""
        raise NotImplementedError

    def observe_state(self, t: float, y: np.ndarray, fsm: FaultFsmState, grid: GridThevenin) -> dict:
        """Per-unit observables ``v, delta, i, v_poc`` for one state."""
        raise NotImplementedError

    def observe(self, res: "HybridResult", t: float, before: bool = False) -> dict:
        """Observables at time ``t`` from the dense output."""
        fsm = res.fsm_at(t, before)
        grid = res.grid_at(t, before)
        out = {"t": float(t)}
        out.update(self.observe_state(t, res.state_at(t), fsm, grid))
        out.update({"x_f": fsm.x_f, "x_r": fsm.x_r, "v_th": grid.v_th})
        return out

    # -- driver ------------------------------------------------------------
    def run(
        self,
        y0,
        schedule: list[tuple[float, GridThevenin]],
        t_end: float,
        fsm0: FaultFsmState = FaultFsmState(),
        t0: float | None = None,
    ) -> HybridResult:
        times = [float(t) for t, _ in schedule]
        grids = [g for _, g in schedule]
        if t0 is None:
            t0 = times[0]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("grid schedule must be time-ordered")
        i_th, v_th, v_floor = self.thresholds()
        t_ramp = self.params.control.t_ramp
        fsm_on = self.toggles.fsm_enabled

        gidx = max(bisect.bisect_right(times, t0) - 1, 0)
        st = {"fsm": fsm0 if fsm_on else FaultFsmState(), "grid": gidx, "hold": -math.inf}
        switches: list[SwitchRecord] = []

        def ramping() -> bool:
            f = st["fsm"]
            return f.x_f == 0 and f.clear_time is not None

        def set_fsm(t, fsm):
            st["fsm"] = fsm
            st["hold"] = t + self.fsm_dwell

        def level_update(t, y, reason):
            # level-triggered FSM decision at a switching instant
            if not fsm_on or t < st["hold"]:
                return reason
            f, g = st["fsm"], grids[st["grid"]]
            i_n = self.current_norm(t, y, self._fsm_now(f, t), g)
            if f.x_f == 0 and i_n > i_th:
                set_fsm(t, FaultFsmState.latched())
                return "over-current"
            if f.x_f == 1 and i_n < i_th and self.vpoc_norm(t, y, f, g) > v_th:
                set_fsm(t, FaultFsmState(0, 1.0, t))
                return "release"
            return reason

        def build(t):
            f, g = st["fsm"], grids[st["grid"]]
            rhs = self.make_rhs(f, g, f.clear_time if ramping() else None)
            evs = []
            nxt = st["grid"] + 1
            if nxt < len(times):
                tb = times[nxt]
                evs.append(EventSpec(lambda tt, yy, tb=tb: tt - tb, "rising", "mode-switch", on_grid, "grid"))
            if fsm_on and t < st["hold"]:
                th = st["hold"]
                evs.append(EventSpec(lambda tt, yy, th=th: tt - th, "rising", "mode-switch", on_dwell, "dwell-end"))
            elif fsm_on:
                if f.x_f == 0:
                    evs.append(EventSpec(lambda tt, yy: self.current_norm(tt, yy, self._fsm_now(st["fsm"], tt), grids[st["grid"]]) - i_th,
                                         "rising", "mode-switch", on_latch, "over-current"))
                else:
                    def g_rel(tt, yy):
                        gr = grids[st["grid"]]
                        return min(self.vpoc_norm(tt, yy, st["fsm"], gr) - v_th, i_th - self.current_norm(tt, yy, st["fsm"], gr))
                    evs.append(EventSpec(g_rel, "rising", "mode-switch", on_release, "release"))
            if fsm_on and ramping():
                te = f.clear_time + t_ramp
                evs.append(EventSpec(lambda tt, yy, te=te: tt - te, "rising", "mode-switch", on_ramp_end, "ramp-end"))
            evs.append(EventSpec(lambda tt, yy: self.voltage_norm(yy) - v_floor, "falling", "stop", None, "voltage-collapse"))
            return rhs, evs

        def finish(t, y, reason):
            reason = level_update(t, y, reason)
            switches.append(SwitchRecord(t, st["fsm"], st["grid"], reason))
            rhs, evs = build(t)
            return rhs, None, evs

        def on_grid(t, y):
            st["grid"] += 1
            return finish(t, y, "grid")

        def on_latch(t, y):
            set_fsm(t, FaultFsmState.latched())
            return finish(t, y, "over-current")

        def on_release(t, y):
            set_fsm(t, FaultFsmState(0, 1.0, t))
            return finish(t, y, "release")

        def on_dwell(t, y):
            return finish(t, y, "dwell-end")

        def on_ramp_end(t, y):
            st["fsm"] = FaultFsmState(0, 0.0, None)
            return finish(t, y, "ramp-end")

        y0 = np.asarray(y0, dtype=float)
        reason = level_update(t0, y0, "start")
        switches.append(SwitchRecord(t0, st["fsm"], st["grid"], reason))
        rhs, evs = build(t0)
        try:
            traj = integrate(rhs, y0, (t0, t_end), self.config, evs)
        except IntegrationError as exc:
            if exc.trajectory is None:
                raise
            return HybridResult(exc.trajectory, switches, grids, f"failed: {exc}", self)
        status = "voltage-collapse" if traj.status == "stopped" else "success"
        return HybridResult(traj, switches, grids, status, self)

    def _fsm_now(self, f: FaultFsmState, t: float) -> FaultFsmState:
        if f.x_f == 0 and f.clear_time is not None:
            return FaultFsmState(0, ramp_value(f.clear_time, t, self.params.control.t_ramp), f.clear_time)
        return f


class ReducedSim(HybridSim):
    """Hybrid simulation of :class:`ReducedModel` (RMS quantities)."""

    def __init__(self, params, sp, toggles, current_model=CurrentModel.DYNAMIC, config=None):
        super().__init__(params, sp, toggles, config)
        self.current_model = CurrentModel(current_model)
        self._cache: dict = {}

    def model(self, fsm: FaultFsmState, grid: GridThevenin) -> ReducedModel:
        key = (fsm, grid)
        m = self._cache.get(key)
        if m is None:
            m = ReducedModel(self.params, grid, self.sp, fsm, self.current_model,
                             limiter=self.toggles.limiter_enabled, q0_boost=self.toggles.q0_boost)
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[key] = m
        return m

    def make_rhs(self, fsm, grid, ramp_clear):
        if ramp_clear is None:
            return self.model(fsm, grid).rhs
        t_ramp = self.params.control.t_ramp

        def rhs(t, y):
            xr = ramp_value(ramp_clear, t, t_ramp)
            return ReducedModel(self.params, grid, self.sp, FaultFsmState(0, xr, ramp_clear), self.current_model,
                                limiter=self.toggles.limiter_enabled, q0_boost=self.toggles.q0_boost).rhs(t, y)

        return rhs

    def _model_now(self, fsm, grid):
        if fsm.x_f == 0 and 0.0 < fsm.x_r < 1.0:
            return ReducedModel(self.params, grid, self.sp, fsm, self.current_model,
                                limiter=self.toggles.limiter_enabled, q0_boost=self.toggles.q0_boost)
        return self.model(fsm, grid)

    def current_norm(self, t, y, fsm, grid):
        return abs(self._model_now(fsm, grid).current(y))

    def vpoc_norm(self, t, y, fsm, grid):
        return abs(self._model_now(fsm, grid).v_poc(y))

    def voltage_norm(self, y):
        return y[0]

    def thresholds(self):
        p = self.params
        return p.i_thresh, p.v_thresh, 0.01 * p.v0

    def observe_state(self, t, y, fsm, grid):
        m = self._model_now(fsm, grid)
        p = self.params
        return {
            "v": y[0] / p.v0,
            "delta": wrap_to_pi(y[1]),
            "i": abs(m.current(y)) / p.base.i_base,
            "v_poc": abs(m.v_poc(y)) / p.v0,
        }


def wrap_to_pi(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi
