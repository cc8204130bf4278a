"""Scenario-level simulation: initial equilibrium, engines, metrics, sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import (
    Domain,
    Equilibrium,
    Kind,
    LimitCycle,
    PlaneRates,
    SurfaceGrid,
    SweepReport,
    WindingSection,
    classify_stability,
    clearing_sweep,
    cycle_from_trajectory,
    find_equilibria,
    newton_refine,
    sample_surfaces,
    wrap,
)
from .controller import FaultFsmState
from .hybrid import HybridResult, HybridSim, ReducedSim
from .oracle import AlphaBetaSim, state_from_phasors
from .params import SystemParams
from .reduced import CurrentModel, ModelMode, ReducedModel
from .scenarios import Scenario
from .solver import IntegratorConfig

__all__ = [
    "ENGINES",
    "SimulationRun",
    "prefault_equilibrium",
    "make_sim",
    "simulate",
    "fault_steady_state",
    "FaultCycle",
    "fault_limit_cycle",
    "PostFaultRun",
    "run_clearing_sweep",
    "phase_plane",
    "oracle_comparison",
    "NoOperatingPointError",
]

ENGINES = ("reduced", "oracle")


class NoOperatingPointError(RuntimeError):
    """The pre-fault plane has no stable equilibrium near nominal voltage."""


def prefault_equilibrium(params: SystemParams, scenario: Scenario) -> Equilibrium:
    """Stable pre-fault operating point, refined from a nominal-voltage guess."""
    sp = scenario.setpoints(params)
    tg = scenario.toggles
    model = ReducedModel(params, scenario.pre_fault, sp, current_model=CurrentModel.QUASI_STATIC,
                         limiter=tg.limiter_enabled, q0_boost=tg.q0_boost)
    rates = PlaneRates(model)
    scale = np.array([abs(float(rates(0.0, 1.0)[0])) or 1.0, abs(float(rates(0.0, 1.0)[1])) or 1.0])

    def f(x):
        return np.array(rates(x[0], x[1]), dtype=float) / scale

    for d0 in (0.0, 0.3, 0.6, -0.3, 1.0):
        x, res, ok = newton_refine(f, (d0, 1.0), (1e-7, 1e-7), tol=1e-13)
        if ok:
            eq = classify_stability(Equilibrium(float(wrap(x[0])), float(x[1]), Kind.CENTER, (0j, 0j), res), model, probe=False)
            if eq.kind is Kind.STABLE:
                return eq
    raise NoOperatingPointError(f"no stable pre-fault equilibrium found for {scenario.name}")


def make_sim(
    params: SystemParams,
    scenario: Scenario,
    engine: str = "reduced",
    current_model: CurrentModel = CurrentModel.DYNAMIC,
    config: IntegratorConfig | None = None,
) -> HybridSim:
    sp = scenario.setpoints(params)
    if engine == "reduced":
        return ReducedSim(params, sp, scenario.toggles, current_model, config)
    if engine == "oracle":
        return AlphaBetaSim(params, sp, scenario.toggles, config)
    raise ValueError(f"engine must be one of {ENGINES}")


def initial_state(params: SystemParams, scenario: Scenario, sim: HybridSim, eq: Equilibrium) -> np.ndarray:
    v = eq.v_mag * params.v0
    sp = scenario.setpoints(params)
    tg = scenario.toggles
    model = ReducedModel(params, scenario.pre_fault, sp, current_model=CurrentModel.DYNAMIC,
                         limiter=tg.limiter_enabled, q0_boost=tg.q0_boost)
    y = model.initial_currents(v, eq.delta)
    if isinstance(sim, AlphaBetaSim):
        return state_from_phasors(params, y[0], y[1], complex(y[2], y[3]), scenario.pre_fault.omega_g)
    if isinstance(sim, ReducedSim) and sim.current_model is not CurrentModel.DYNAMIC:
        return y[:2]
    return y


@dataclass
class SimulationRun:
    scenario: Scenario
    engine: str
    current_model: CurrentModel
    equilibrium: Equilibrium
    sim: HybridSim
    result: HybridResult

    @property
    def ok(self) -> bool:
        return self.result.status == "success"


def simulate(
    params: SystemParams,
    scenario: Scenario,
    engine: str = "reduced",
    current_model: CurrentModel = CurrentModel.DYNAMIC,
    config: IntegratorConfig | None = None,
    with_clear: bool = True,
    t_end: float | None = None,
) -> SimulationRun:
    """Run the scenario from its pre-fault equilibrium through the grid schedule."""
    eq = prefault_equilibrium(params, scenario)
    sim = make_sim(params, scenario, engine, current_model, config)
    y0 = initial_state(params, scenario, sim, eq)
    end = scenario.t_end if t_end is None else t_end
    res = sim.run(y0, scenario.schedule(with_clear), end)
    return SimulationRun(scenario, engine, CurrentModel(current_model), eq, sim, res)


def fault_steady_state(run: SimulationRun) -> dict:
    """Observables just before the clearing instant (or at the end of the run)."""
    sc = run.scenario
    res = run.result
    t_end = res.traj.t_final
    if sc.clear_time is not None and sc.clear_time <= t_end:
        return run.sim.observe(res, sc.clear_time, before=True)
    return run.sim.observe(res, t_end)


def peak_current_after(run: SimulationRun, t_from: float) -> float:
    """Largest sampled current magnitude (pu) at or after ``t_from``."""
    tab = run.result.table()
    sel = tab["t"] >= t_from
    return float(np.max(tab["i"][sel])) if sel.any() else math.nan


@dataclass
class FaultCycle:
    cycle: LimitCycle | None
    run: SimulationRun
    fsm: FaultFsmState | None  # FSM state over the last period when constant

    @property
    def period(self) -> float | None:
        return None if self.cycle is None else self.cycle.period


def fault_limit_cycle(
    params: SystemParams,
    scenario: Scenario,
    current_model: CurrentModel = CurrentModel.DYNAMIC,
    duration: float | None = None,
    config: IntegratorConfig | None = None,
) -> FaultCycle:
    """Hold the fault and look for a winding orbit in ``(delta, V)``."""
    if duration is None:
        duration = (scenario.clear_time or scenario.t_end) - scenario.fault_time
    run = simulate(params, scenario, "reduced", current_model, config, with_clear=False,
                   t_end=scenario.fault_time + duration)
    if not run.ok:
        return FaultCycle(None, run, None)
    cycle = cycle_from_trajectory(run.result.traj, WindingSection(1), return_index=0,
                                  return_scale=1.0 / params.v0, t_min=scenario.fault_time)
    fsm = None
    if cycle is not None:
        t0, t1 = cycle.t_start, cycle.t_start + cycle.period
        inside = [s for s in run.result.switches if t0 <= s.t <= t1]
        if not inside:
            fsm = run.result.fsm_at(t0)
    return FaultCycle(cycle, run, fsm)


@dataclass(frozen=True)
class PostFaultRun:
    """Picklable post-fault job: pre-fault grid restored at ``t = 0``."""

    params: SystemParams
    scenario: Scenario
    fsm: FaultFsmState
    current_model: CurrentModel = CurrentModel.DYNAMIC
    horizon: float = 6.0

    def __call__(self, y) -> tuple[np.ndarray, str]:
        sim = make_sim(self.params, self.scenario, "reduced", self.current_model)
        res = sim.run(np.asarray(y, dtype=float), [(0.0, self.scenario.pre_fault)], self.horizon, fsm0=self.fsm)
        return res.traj.y_final, res.status


def run_clearing_sweep(
    params: SystemParams,
    scenario: Scenario,
    m: int = 12,
    current_model: CurrentModel = CurrentModel.QUASI_STATIC,
    tol: float = 1e-3,
    horizon: float = 6.0,
    workers: int | None = None,
) -> tuple[SweepReport, FaultCycle, Equilibrium]:
    """Clear the fault from ``m`` points on the fault limit cycle.

    The cycle and the post-fault runs share ``current_model``.  The default is
    the quasi-static plane model; with dynamic currents the post-fault FSM can
    re-latch repeatedly during the ramp and the verdicts change.
    """
    fc = fault_limit_cycle(params, scenario, current_model)
    if fc.cycle is None:
        raise RuntimeError(f"no converged fault limit cycle for {scenario.name}")
    if fc.fsm is None:
        raise RuntimeError("the FSM switches along the fault cycle; clearing states are ambiguous")
    target = prefault_equilibrium(params, scenario)
    job = PostFaultRun(params, scenario, fc.fsm, current_model, horizon)
    v0 = params.v0

    def to_plane(y):
        return float(wrap(y[1])), float(y[0]) / v0

    report = clearing_sweep(fc.cycle, job, to_plane, (target.delta, target.v_mag), m, tol, workers)
    return report, fc, target


def phase_plane(
    params: SystemParams,
    scenario: Scenario,
    phase: str,
    mode: ModelMode | None = None,
    domain: Domain = Domain(),
    resolution: int = 256,
    probe: bool = True,
) -> tuple[SurfaceGrid, list[Equilibrium]]:
    """Surfaces and classified equilibria of one scenario phase."""
    model = scenario.plane_model(params, phase, mode)
    surface = sample_surfaces(model, domain, resolution)
    return surface, find_equilibria(surface, model, domain, probe)


_COMPARED = ("v", "delta", "i")


def oracle_comparison(params: SystemParams, scenario: Scenario, config: IntegratorConfig | None = None) -> dict:
    """Fault steady state from the reduced dynamic model and the oracle.

    ``rel`` holds ``|oracle - reduced| / |reduced|`` for V, delta and |i|.
    """
    runs = {e: simulate(params, scenario, e, CurrentModel.DYNAMIC, config) for e in ENGINES}
    out: dict = {"scenario": scenario.name, "status": {e: r.result.status for e, r in runs.items()}}
    states = {e: fault_steady_state(r) for e, r in runs.items()}
    for e, st in states.items():
        out[e] = {k: float(st[k]) for k in (*_COMPARED, "v_poc")}
    red, ora = states["reduced"], states["oracle"]
    out["rel"] = {
        k: abs(float(wrap(ora[k] - red[k])) if k == "delta" else ora[k] - red[k]) / max(abs(red[k]), 1e-12)
        for k in _COMPARED
    }
    out["max_rel"] = max(out["rel"].values())
    return out
