"""Fault scenarios: grid schedule, set-points, toggles and analysis modes.

Four cases are built in.  A config document can start from one of them
(``base = case3``) and override individual fields in its ``[scenario]``
section; ``[grid]`` then describes the pre-fault grid.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from pathlib import Path

from .controller import Setpoints
from .hybrid import Toggles
from .params import (
    ConfigError,
    ControlParams,
    ConverterParams,
    GridThevenin,
    SystemParams,
    ValidationError,
    read_config,
    section_kwargs,
)
from .reduced import CurrentModel, Mode, ModelMode, ReducedModel, mode_model

__all__ = ["Scenario", "BUILTINS", "builtin", "load_scenario", "PHASES"]

PHASES = ("pre", "fault")


@dataclass(frozen=True)
class Scenario:
    """A step sag at ``fault_time`` and an optional recovery at ``clear_time``.

    Set-points are per-unit on the rated-power base.  ``fault_mode`` selects
    the phase-plane model used for the fault surfaces (the pre-fault plane is
    always unconstrained).
    """

    name: str
    pre_fault: GridThevenin
    fault: GridThevenin
    p0: float
    q0: float = 0.0
    s_boost: float = 1.2
    fault_time: float = 0.5
    clear_time: float | None = None
    t_end: float = 4.0
    toggles: Toggles = field(default_factory=Toggles)
    fault_mode: ModelMode = field(default_factory=ModelMode)
    description: str = ""

    def __post_init__(self):
        if self.fault_time < 0:
            raise ValidationError("fault_time", "must be non-negative")
        if self.clear_time is not None and not self.fault_time < self.clear_time:
            raise ValidationError("clear_time", "must be later than fault_time")
        last = self.clear_time if self.clear_time is not None else self.fault_time
        if not self.t_end > last:
            raise ValidationError("t_end", "must be later than every scheduled event")
        if self.s_boost < abs(self.p0):
            raise ValidationError("s_boost", "must be at least |p0|")

    def setpoints(self, params: SystemParams) -> Setpoints:
        return Setpoints.from_pu(params, self.p0, self.q0, self.s_boost)

    def schedule(self, with_clear: bool = True) -> list[tuple[float, GridThevenin]]:
        out = [(0.0, self.pre_fault), (self.fault_time, self.fault)]
        if with_clear and self.clear_time is not None:
            out.append((self.clear_time, self.pre_fault))
        return out

    def grid(self, phase: str) -> GridThevenin:
        if phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}")
        return self.pre_fault if phase == "pre" else self.fault

    def mode(self, phase: str) -> ModelMode:
        return ModelMode() if phase == "pre" else self.fault_mode

    def plane_model(self, params: SystemParams, phase: str, mode: ModelMode | None = None) -> ReducedModel:
        """Quasi-static fixed-mode model for surfaces and equilibria."""
        m = self.mode(phase) if mode is None else mode
        m = ModelMode(m.mode, CurrentModel.QUASI_STATIC)
        return mode_model(params, self.grid(phase), self.setpoints(params), m, self.toggles.q0_boost)


def _case(name, z, p0, v_fault, toggles, mode, clear, t_end, desc):
    pre = GridThevenin(v_th=1.0, z_th_mag=z, x_over_r=20.0)
    return Scenario(
        name=name,
        pre_fault=pre,
        fault=replace(pre, v_th=v_fault),
        p0=p0,
        toggles=toggles,
        fault_mode=ModelMode(mode),
        clear_time=clear,
        t_end=t_end,
        description=desc,
    )


BUILTINS: dict[str, Scenario] = {
    s.name: s
    for s in (
        _case("case1", 0.52, 0.38, 0.6, Toggles(True, False, False), Mode.UNCONSTRAINED, 3.0, 4.0,
              "current-unconstrained sag on a weak grid"),
        _case("case2-unprotected", 0.1, 0.27, 0.5, Toggles(False, False, False), Mode.UNCONSTRAINED, 3.0, 4.0,
              "deep sag on a stiff grid without limiter or latch"),
        _case("case2-protected", 0.1, 0.27, 0.5, Toggles(True, True, True), Mode.CONSTRAINED, 3.0, 4.0,
              "deep sag on a stiff grid with the full ride-through logic"),
        _case("case3", 0.52, 0.8, 0.5, Toggles(True, True, True), Mode.CONSTRAINED, 6.0, 10.0,
              "current-constrained sag without a fault equilibrium"),
    )
}


def builtin(name: str) -> Scenario:
    try:
        return BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; built-ins are {sorted(BUILTINS)}") from None


def _bool(raw: str, key: str, lines: dict) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[scenario] {key} = {raw!r} is not a boolean", lines.get(("scenario", key)))


_FLOATS = {"p0_pu": "p0", "q0_pu": "q0", "s_boost_pu": "s_boost", "fault_time": "fault_time", "t_end": "t_end"}
_BOOLS = ("limiter_enabled", "fsm_enabled", "q0_boost")
_OTHER = ("name", "base", "clear_time", "fault_v_th_pu", "fault_z_th_mag_pu", "fault_mode", "description")


def load_scenario(source: str | Path | io.TextIOBase) -> tuple[SystemParams, Scenario]:
    """Read parameters and a ``[scenario]`` section from one document."""
    cp, lines = read_config(source)
    known = {"converter", "control", "grid", "scenario"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, "")))
    params = SystemParams(
        ConverterParams(**section_kwargs(cp, lines, "converter")),
        ControlParams(**section_kwargs(cp, lines, "control")),
    )
    sc = dict(cp.items("scenario")) if cp.has_section("scenario") else {}
    for key in sc:
        if key not in _FLOATS and key not in _BOOLS and key not in _OTHER:
            raise ConfigError(f"unknown key {key!r} in [scenario]", lines.get(("scenario", key)))

    def num(key):
        try:
            return float(sc[key])
        except ValueError:
            raise ConfigError(f"[scenario] {key} = {sc[key]!r} is not a number", lines.get(("scenario", key))) from None

    base_name = sc.get("base", "case1")
    try:
        base = builtin(base_name)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), lines.get(("scenario", "base"))) from None

    pre = replace(base.pre_fault, **section_kwargs(cp, lines, "grid"))
    fault = replace(
        pre,
        v_th=num("fault_v_th_pu") if "fault_v_th_pu" in sc else base.fault.v_th,
        z_th_mag=num("fault_z_th_mag_pu") if "fault_z_th_mag_pu" in sc else pre.z_th_mag,
    )
    changes: dict = {"pre_fault": pre, "fault": fault, "name": sc.get("name", base.name if not sc else "custom")}
    for key, name in _FLOATS.items():
        if key in sc:
            changes[name] = num(key)
    if "clear_time" in sc:
        changes["clear_time"] = None if sc["clear_time"].strip().lower() in ("", "none") else num("clear_time")
    if any(k in sc for k in _BOOLS):
        t = base.toggles
        changes["toggles"] = Toggles(
            *(_bool(sc[k], k, lines) if k in sc else getattr(t, k) for k in _BOOLS)
        )
    if "fault_mode" in sc:
        try:
            changes["fault_mode"] = ModelMode(Mode(sc["fault_mode"].strip().lower()))
        except ValueError:
            raise ConfigError(f"fault_mode must be one of {[m.value for m in Mode]}", lines.get(("scenario", "fault_mode"))) from None
    if "description" in sc:
        changes["description"] = sc["description"]
    return params, replace(base, **changes)
