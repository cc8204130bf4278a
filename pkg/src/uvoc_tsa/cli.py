"""Command-line front end.

Every command reads a built-in case (``--case``) or a config document
(``--config``) and writes into ``<out>/<scenario name>/``.  Exit status is
0 when all requested artifacts were written and their checks held, 1 when
a run failed or an invariant was violated, and 2 for usage or config
errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import export
from .analysis import Domain, DroopComparison, Kind, plane_distance
from .params import ConfigError, SystemParams, ValidationError, dump_config, load_params
from .reduced import CurrentModel, Mode, ModelMode
from .scenarios import BUILTINS, PHASES, Scenario, builtin, load_scenario
from .simulate import (
    ENGINES,
    NoOperatingPointError,
    fault_limit_cycle,
    fault_steady_state,
    oracle_comparison,
    phase_plane,
    run_clearing_sweep,
    simulate,
)

__all__ = ["RunReport", "run_scenario", "build_parser", "main"]

log = logging.getLogger("uvoc_tsa")

EQ_RESIDUAL_TOL = 1e-8
RETURN_TOL = 1e-3


@dataclass
class RunReport:
    out_dir: Path
    trajectory: Path | None = None
    surfaces: dict[str, Path] = field(default_factory=dict)
    equilibria: dict[str, Path] = field(default_factory=dict)
    limit_cycle: Path | None = None
    plots: list[Path] = field(default_factory=list)
    summary_path: Path | None = None
    summary: dict = field(default_factory=dict)
    ok: bool = True

    def paths(self) -> list[Path]:
        out = [self.trajectory, self.limit_cycle, self.summary_path, *self.surfaces.values(), *self.equilibria.values(), *self.plots]
        return [p for p in out if p is not None]


def _eq_ok(eqs) -> bool:
    return all(e.residual < EQ_RESIDUAL_TOL for e in eqs)


def _write_phase(params, scenario, phase, out, domain, resolution, mode=None):
    surface, eqs = phase_plane(params, scenario, phase, mode, domain, resolution)
    model = (mode or scenario.mode(phase)).mode.value
    s = export.surface_csv(surface, out / f"surface_{phase}.csv")
    e = export.equilibria_json(eqs, out / f"equilibria_{phase}.json", scenario=scenario.name, phase=phase, model=model,
                               resolution=resolution, domain={"delta": list(domain.delta), "v": list(domain.v)})
    p = export.plot_script("surface", s, out / f"surface_{phase}.gp")
    return surface, eqs, s, e, p


def run_scenario(
    scenario: Scenario,
    params: SystemParams,
    out_dir: str | Path,
    engine: str = "reduced",
    current_model: CurrentModel = CurrentModel.DYNAMIC,
    resolution: int = 256,
    domain: Domain = Domain(),
) -> RunReport:
    """Simulate, export the trajectory, both phase planes and summary metrics.

    A fault limit cycle is searched for when the fault plane has no stable
    equilibrium.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = RunReport(out)
    run = simulate(params, scenario, engine, current_model)
    res = run.result
    rep.trajectory = export.trajectory_csv(res, out / "trajectory.csv")
    rep.plots.append(export.plot_script("trajectory", rep.trajectory, out / "trajectory.gp"))
    fault_ss = fault_steady_state(run)
    summary: dict = {
        "scenario": scenario.name,
        "engine": engine,
        "current_model": CurrentModel(current_model).value,
        "status": res.status,
        "prefault_equilibrium": {"delta": run.equilibrium.delta, "v": run.equilibrium.v_mag},
        "fault_steady_state": {k: fault_ss[k] for k in ("t", "v", "delta", "i", "v_poc", "x_f", "x_r")},
        "final_state": run.sim.observe(res, res.traj.t_final),
        "n_latches": res.n_latches(),
    }
    fin = summary["final_state"]
    eq = run.equilibrium
    summary["returned_to_prefault"] = bool(
        run.ok and fin["x_r"] == 0 and plane_distance((fin["delta"], fin["v"]), (eq.delta, eq.v_mag)) < RETURN_TOL
    )
    rep.ok = run.ok

    stable_fault = False
    summary["equilibria"] = {}
    for phase in PHASES:
        _, eqs, s, e, p = _write_phase(params, scenario, phase, out, domain, resolution)
        rep.surfaces[phase], rep.equilibria[phase] = s, e
        rep.plots.append(p)
        summary["equilibria"][phase] = [[q.kind.value, q.delta, q.v_mag] for q in eqs]
        rep.ok &= _eq_ok(eqs)
        if phase == "fault":
            stable_fault = any(q.kind is Kind.STABLE for q in eqs)

    summary["limit_cycle_period_s"] = None
    if not stable_fault:
        fc = fault_limit_cycle(params, scenario, current_model)
        if fc.cycle is not None:
            rep.limit_cycle, _ = export.limit_cycle_files(
                fc.cycle, 1.0 / params.v0, out / "limit_cycle.csv", out / "limit_cycle.json",
                scenario=scenario.name, current_model=CurrentModel(current_model).value)
            rep.plots.append(export.plot_script("limit-cycle", rep.limit_cycle, out / "limit_cycle.gp"))
            summary["limit_cycle_period_s"] = fc.period
        else:
            rep.ok = False
    rep.summary = summary
    rep.summary_path = export.write_json(out / "summary.json", summary)
    rep.ok &= all(p.exists() for p in rep.paths())
    return rep


# --------------------------------------------------------------------------
# argument handling


def _scenario(args) -> tuple[SystemParams, Scenario]:
    if args.config:
        return load_scenario(args.config)
    return SystemParams(), builtin(args.case)


def _domain(args) -> Domain:
    if args.domain is None:
        return Domain()
    d0, d1, v0, v1 = args.domain
    try:
        return Domain((d0, d1), (v0, v1))
    except ValueError as exc:
        raise ConfigError(f"--domain: {exc}") from None


def _out(args, scenario: Scenario) -> Path:
    return Path(args.out) / scenario.name


def _mode(args, scenario: Scenario, phase: str) -> ModelMode:
    if args.model is None:
        return scenario.mode(phase)
    return ModelMode(Mode(args.model))


def cmd_params(args) -> int:
    if args.config:
        conv, ctrl, grid = load_params(args.config)
    else:
        from .params import ControlParams, ConverterParams, GridThevenin

        conv, ctrl, grid = ConverterParams(), ControlParams(), GridThevenin()
    print(dump_config(conv, ctrl, grid), end="")
    derived = SystemParams(conv, ctrl).to_dict()
    print("# derived (SI)")
    for line in json.dumps(derived, indent=2, sort_keys=True).splitlines():
        print(f"# {line}")
    return 0


def cmd_simulate(args) -> int:
    params, sc = _scenario(args)
    t0 = time.perf_counter()
    rep = run_scenario(sc, params, _out(args, sc), args.engine, CurrentModel(args.current), args.resolution, _domain(args))
    ss = rep.summary["fault_steady_state"]
    print(f"{sc.name}: status {rep.summary['status']}, fault steady state |i| = {ss['i']:.4f} pu, "
          f"|v_poc| = {ss['v_poc']:.4f} pu")
    if rep.summary["limit_cycle_period_s"] is not None:
        print(f"fault limit cycle period {rep.summary['limit_cycle_period_s'] * 1e3:.2f} ms")
    print(f"wrote {len(rep.paths())} files to {rep.out_dir} in {time.perf_counter() - t0:.1f} s")
    return 0 if rep.ok else 1


def cmd_surface(args) -> int:
    params, sc = _scenario(args)
    out = _out(args, sc)
    surface, eqs, s, _, p = _write_phase(params, sc, args.phase, out, _domain(args), args.resolution, _mode(args, sc, args.phase))
    print(f"{s} ({surface.shape[1]}x{surface.shape[0]} nodes, {len(surface.sign_change_cells())} sign-change cells); plot: {p}")
    return 0


def cmd_equilibria(args) -> int:
    params, sc = _scenario(args)
    out = _out(args, sc)
    _, eqs, _, e, _ = _write_phase(params, sc, args.phase, out, _domain(args), args.resolution, _mode(args, sc, args.phase))
    print(f"{len(eqs)} equilibria ({sc.name}, {args.phase})")
    for q in eqs:
        eig = ", ".join(f"{z.real:.4g}{z.imag:+.4g}j" for z in q.jacobian_eigs)
        print(f"  {q.kind.value:<16} delta = {q.delta:+.6f} rad  V = {q.v_mag:.6f} pu  eigs [{eig}]")
    print(f"wrote {e}")
    return 0 if _eq_ok(eqs) else 1


def cmd_limit_cycle(args) -> int:
    params, sc = _scenario(args)
    out = _out(args, sc)
    fc = fault_limit_cycle(params, sc, CurrentModel(args.current), args.duration)
    if fc.cycle is None:
        print(f"no converged fault limit cycle ({fc.run.result.status})", file=sys.stderr)
        return 1
    c, j = export.limit_cycle_files(fc.cycle, 1.0 / params.v0, out / "limit_cycle.csv", out / "limit_cycle.json",
                                    scenario=sc.name, current_model=args.current)
    export.plot_script("limit-cycle", c, out / "limit_cycle.gp")
    print(f"period {fc.period * 1e3:.3f} ms (convergence ratio {fc.cycle.convergence_ratio:.2e}); wrote {c}, {j}")
    return 0


def cmd_sweep(args) -> int:
    if args.droop:
        report = DroopComparison().sweep(args.points, args.tol, args.workers)
        out = Path(args.out) / "droop"
        path = export.sweep_json(report, out / "sweep.json", model="droop")
    else:
        params, sc = _scenario(args)
        report, fc, _ = run_clearing_sweep(params, sc, args.points, CurrentModel(args.current), args.tol, args.horizon, args.workers)
        path = export.sweep_json(report, _out(args, sc) / "sweep.json", scenario=sc.name, current_model=args.current,
                                 period_s=fc.period, horizon_s=args.horizon)
    print(f"{report.n_converged}/{len(report.points)} converged; wrote {path}")
    return 0


def cmd_oracle_diff(args) -> int:
    params, sc = _scenario(args)
    cmp = oracle_comparison(params, sc)
    path = export.write_json(_out(args, sc) / "oracle_diff.json", cmp)
    for k, v in cmp["rel"].items():
        print(f"  {k:<6} reduced {cmp['reduced'][k]:.6f}  oracle {cmp['oracle'][k]:.6f}  rel {v:.2e}")
    print(f"wrote {path}")
    return 0 if all(s == "success" for s in cmp["status"].values()) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uvoc-tsa", description="Transient stability analysis of a uVOC grid-forming converter.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--case", default="case1", choices=sorted(BUILTINS), help="built-in scenario")
        src.add_argument("--config", help="INI document with [converter]/[control]/[grid]/[scenario]")
        if out:
            p.add_argument("--out", default="out", help="output root (default: out)")

    def plane(p):
        p.add_argument("--resolution", type=int, default=256, help="grid nodes per axis (default 256)")
        p.add_argument("--domain", type=float, nargs=4, metavar=("DMIN", "DMAX", "VMIN", "VMAX"),
                       help="delta range [rad] and voltage range [pu]")

    def current(p, default):
        p.add_argument("--current", default=default, choices=[c.value for c in CurrentModel], help="current model")

    p = sub.add_parser("params", help="print parameters")
    p.add_argument("action", choices=["print"])
    p.add_argument("--config", help="INI document")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("simulate", help="run a scenario and export everything")
    common(p)
    plane(p)
    current(p, CurrentModel.DYNAMIC.value)
    p.add_argument("--engine", default="reduced", choices=ENGINES)
    p.set_defaults(func=cmd_simulate)

    for name, func in (("surface", cmd_surface), ("equilibria", cmd_equilibria)):
        p = sub.add_parser(name, help=f"phase-plane {name}")
        common(p)
        plane(p)
        p.add_argument("--phase", default="fault", choices=PHASES)
        p.add_argument("--model", choices=[m.value for m in Mode], help="override the phase's operating mode")
        p.set_defaults(func=func)

    p = sub.add_parser("limit-cycle", help="fault limit cycle and its period")
    common(p)
    current(p, CurrentModel.DYNAMIC.value)
    p.add_argument("--duration", type=float, help="fault hold time [s] (default: until clearing)")
    p.set_defaults(func=cmd_limit_cycle)

    p = sub.add_parser("sweep", help="clearing sweep over the fault limit cycle")
    common(p)
    current(p, CurrentModel.QUASI_STATIC.value)
    p.add_argument("--points", type=int, default=12)
    p.add_argument("--tol", type=float, default=1e-3, help="convergence distance in (delta, V)")
    p.add_argument("--horizon", type=float, default=6.0, help="post-fault horizon [s]")
    p.add_argument("--workers", type=int, help="worker processes (capped by UVOC_TSA_THREADS)")
    p.add_argument("--droop", action="store_true", help="sweep the second-order droop comparison model instead")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-diff", help="reduced model vs stationary-frame oracle")
    common(p)
    p.set_defaults(func=cmd_oracle_diff)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "resolution", None) is not None and args.resolution < 16:
        ap.error("--resolution must be at least 16")
    if getattr(args, "points", None) is not None and args.points < 4:
        ap.error("--points must be at least 4")
    try:
        return args.func(args)
    except (ConfigError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NoOperatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
