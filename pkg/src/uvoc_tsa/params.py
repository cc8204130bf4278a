"""Converter, controller and grid parameter sets.

Everything user-facing is per-unit on the ``P_rated`` / ``V0`` base; the
models work in SI.  :class:`SystemParams` bundles a converter and a control
parameter set and exposes the SI quantities the simulators consume.
"""

from __future__ import annotations

import configparser
import io
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

__all__ = [
    "ConfigError",
    "ValidationError",
    "ConverterParams",
    "ControlParams",
    "GridThevenin",
    "PerUnitBase",
    "SystemParams",
    "load_params",
    "read_config",
    "pu_to_si",
    "si_to_pu",
    "thevenin_split",
]

OMEGA_60HZ = 2.0 * math.pi * 60.0


class ConfigError(ValueError):
    """Malformed configuration document."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ValueError):
    """A parameter violates its invariant."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _require(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ValidationError(name, msg)


@dataclass(frozen=True)
class ConverterParams:
    """Voltage source converter ratings; filter elements in per-unit.

    ``l1`` is the effective converter-side inductance: two interleaved
    0.04 pu legs in parallel give 0.02 pu.
    """

    s_rated: float = 9000.0
    p_rated: float = 7500.0
    v0: float = 120.0
    omega0: float = OMEGA_60HZ
    n_phases: int = 3
    l1: float = 0.02
    l2: float = 0.005
    r1: float = 0.0
    r2: float = 0.0

    def __post_init__(self):
        _require(self.n_phases in (1, 3), "n_phases", "must be 1 or 3")
        for name in ("s_rated", "p_rated", "v0", "omega0"):
            _require(getattr(self, name) > 0, name, "must be positive")
        for name in ("l1", "l2", "r1", "r2"):
            _require(getattr(self, name) >= 0, name, "must be non-negative")
        _require(self.p_rated <= self.s_rated, "p_rated", "must not exceed s_rated")

    @property
    def v0_peak(self) -> float:
        return math.sqrt(2.0) * self.v0


@dataclass(frozen=True)
class ControlParams:
    """uVOC gains and fault-ride-through settings (per-unit where noted)."""

    eta0: float = 19.95
    mu0: float = 7.1e-4
    tau_f: float = 0.11
    r0: float = 0.43
    lv0: float = 0.29
    rv0: float = 0.04
    omega_b: float = 2.0 * math.pi * 600.0
    i_m: float = 1.2
    i_thresh: float | None = None
    v_thresh: float = 0.9
    t_ramp: float = 0.05

    def __post_init__(self):
        for name in ("eta0", "mu0", "tau_f", "i_m", "omega_b", "t_ramp"):
            _require(getattr(self, name) > 0, name, "must be positive")
        for name in ("r0", "lv0", "rv0", "v_thresh"):
            _require(getattr(self, name) >= 0, name, "must be non-negative")
        if self.i_thresh is None:
            object.__setattr__(self, "i_thresh", self.i_m)
        _require(self.i_thresh > 0, "i_thresh", "must be positive")
        if self.i_thresh > self.i_m:
            warnings.warn(
                f"i_thresh={self.i_thresh} pu exceeds i_m={self.i_m} pu; "
                "over-current detection fires above the current limit",
                stacklevel=3,
            )


@dataclass(frozen=True)
class GridThevenin:
    """Thevenin source seen from the point of coupling (per-unit)."""

    v_th: float = 1.0
    omega_g: float = OMEGA_60HZ
    z_th_mag: float = 0.52
    x_over_r: float = 20.0

    def __post_init__(self):
        _require(self.v_th >= 0, "v_th", "must be non-negative")
        _require(self.omega_g > 0, "omega_g", "must be positive")
        _require(self.z_th_mag >= 0, "z_th_mag", "must be non-negative")
        _require(self.x_over_r > 0, "x_over_r", "must be positive")

    @property
    def scr(self) -> float:
        return math.inf if self.z_th_mag == 0 else 1.0 / self.z_th_mag


@dataclass(frozen=True)
class PerUnitBase:
    s_base: float
    v_base: float
    n_phases: int = 3

    @property
    def z_base(self) -> float:
        return self.n_phases * self.v_base**2 / self.s_base

    @property
    def i_base(self) -> float:
        return self.s_base / (self.n_phases * self.v_base)

    @classmethod
    def from_converter(cls, conv: ConverterParams) -> "PerUnitBase":
        return cls(s_base=conv.p_rated, v_base=conv.v0, n_phases=conv.n_phases)


_KINDS = ("voltage", "current", "impedance", "power")


def _base_value(kind: str, base: PerUnitBase) -> float:
    if kind == "voltage":
        return base.v_base
    if kind == "current":
        return base.i_base
    if kind == "impedance":
        return base.z_base
    if kind == "power":
        return base.s_base
    raise ValueError(f"unknown quantity kind {kind!r}; expected one of {_KINDS}")


def pu_to_si(value, kind: str, base: PerUnitBase):
    return value * _base_value(kind, base)


def si_to_pu(value, kind: str, base: PerUnitBase):
    return value / _base_value(kind, base)


def thevenin_split(grid: GridThevenin) -> tuple[float, float]:
    """Split ``|Z_TH|`` into ``(r_th, x_th)`` honoring the X/R ratio."""
    r = grid.z_th_mag / math.sqrt(1.0 + grid.x_over_r**2)
    return r, r * grid.x_over_r


@dataclass(frozen=True)
class SystemParams:
    """Converter + controller parameters resolved to SI.

    Currents are RMS unless the name says ``_peak``.
    """

    converter: ConverterParams = field(default_factory=ConverterParams)
    control: ControlParams = field(default_factory=ControlParams)

    @property
    def base(self) -> PerUnitBase:
        return PerUnitBase.from_converter(self.converter)

    @property
    def n(self) -> int:
        return self.converter.n_phases

    @property
    def v0(self) -> float:
        return self.converter.v0

    @property
    def v0_peak(self) -> float:
        return self.converter.v0_peak

    @property
    def omega0(self) -> float:
        return self.converter.omega0

    def ohms(self, z_pu: float) -> float:
        return z_pu * self.base.z_base

    def henries(self, x_pu: float) -> float:
        # per-unit reactance at nominal frequency
        return x_pu * self.base.z_base / self.omega0

    @property
    def r12(self) -> float:
        return self.ohms(self.converter.r1 + self.converter.r2)

    @property
    def l12(self) -> float:
        return self.henries(self.converter.l1 + self.converter.l2)

    @property
    def r0(self) -> float:
        return self.ohms(self.control.r0)

    @property
    def rv0(self) -> float:
        return self.ohms(self.control.rv0)

    @property
    def lv0(self) -> float:
        return self.henries(self.control.lv0)

    @property
    def i_m(self) -> float:
        return self.control.i_m * self.base.i_base

    @property
    def i_m_peak(self) -> float:
        return math.sqrt(2.0) * self.i_m

    @property
    def i_thresh(self) -> float:
        return self.control.i_thresh * self.base.i_base

    @property
    def v_thresh(self) -> float:
        return self.control.v_thresh * self.v0

    @property
    def s_rated(self) -> float:
        return self.converter.s_rated

    def grid_si(self, grid: GridThevenin) -> tuple[float, float, float]:
        """``(v_th [V RMS], r_th [ohm], l_th [H])`` for a Thevenin grid."""
        r, x = thevenin_split(grid)
        return grid.v_th * self.v0, self.ohms(r), self.henries(x)

    def to_dict(self) -> dict[str, Any]:
        base = self.base
        return {
            "base": {
                "s_base": base.s_base,
                "v_base": base.v_base,
                "z_base": base.z_base,
                "i_base": base.i_base,
            },
            "si": {
                "v0": self.v0,
                "v0_peak": self.v0_peak,
                "omega0": self.omega0,
                "r12": self.r12,
                "l12": self.l12,
                "r0": self.r0,
                "rv0": self.rv0,
                "lv0": self.lv0,
                "i_m": self.i_m,
                "i_m_peak": self.i_m_peak,
                "i_thresh": self.i_thresh,
                "v_thresh": self.v_thresh,
            },
        }


# --------------------------------------------------------------------------
# config documents

# section -> {config key: (dataclass field, type)}
_SCHEMA: dict[str, dict[str, tuple[str, type]]] = {
    "converter": {
        "s_rated": ("s_rated", float),
        "p_rated": ("p_rated", float),
        "v0": ("v0", float),
        "omega0": ("omega0", float),
        "n_phases": ("n_phases", int),
        "l1_pu": ("l1", float),
        "l2_pu": ("l2", float),
        "r1_pu": ("r1", float),
        "r2_pu": ("r2", float),
    },
    "control": {
        "eta0": ("eta0", float),
        "mu0": ("mu0", float),
        "tau_f": ("tau_f", float),
        "r0_pu": ("r0", float),
        "lv0_pu": ("lv0", float),
        "rv0_pu": ("rv0", float),
        "omega_b": ("omega_b", float),
        "i_m_pu": ("i_m", float),
        "i_thresh_pu": ("i_thresh", float),
        "v_thresh_pu": ("v_thresh", float),
        "t_ramp": ("t_ramp", float),
    },
    "grid": {
        "v_th_pu": ("v_th", float),
        "omega_g": ("omega_g", float),
        "z_th_mag_pu": ("z_th_mag", float),
        "x_over_r": ("x_over_r", float),
    },
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*[=:]")


def _line_index(text: str) -> dict[tuple[str, str], int]:
    index: dict[tuple[str, str], int] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, ""), lineno)
            continue
        m = _KEY_RE.match(line)
        if m:
            index.setdefault((section, m.group(1).lower()), lineno)
    return index


def read_config(source: str | Path | io.TextIOBase) -> tuple[configparser.ConfigParser, dict]:
    """Parse an INI-style document; returns the parser and a line index."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).is_file()):
        text = Path(source).read_text()
    elif isinstance(source, io.TextIOBase):
        text = source.read()
    else:
        text = str(source)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("unparseable line", lineno) from None
    return cp, _line_index(text)


def _parse_value(raw: str, typ: type, section: str, key: str, lines: dict):
    try:
        val = typ(raw) if typ is not int else int(float(raw))
        if typ is int and float(raw) != int(float(raw)):
            raise ValueError
        return val
    except ValueError:
        raise ConfigError(
            f"[{section}] {key} = {raw!r} is not a valid {typ.__name__}",
            lines.get((section, key)),
        ) from None


def section_kwargs(cp: configparser.ConfigParser, lines: dict, section: str) -> dict:
    schema = _SCHEMA[section]
    kwargs = {}
    if not cp.has_section(section):
        return kwargs
    for key, raw in cp.items(section):
        if key not in schema:
            raise ConfigError(
                f"unknown key {key!r} in [{section}]; expected one of {sorted(schema)}",
                lines.get((section, key)),
            )
        name, typ = schema[key]
        kwargs[name] = _parse_value(raw, typ, section, key, lines)
    return kwargs


def load_params(
    source: str | Path | io.TextIOBase = "",
) -> tuple[ConverterParams, ControlParams, GridThevenin]:
    """Load ``[converter]``, ``[control]`` and ``[grid]`` from a config document.

    Omitted keys fall back to the default rating/controller tables.  A
    ``[scenario]`` section is tolerated here and read by
    :func:`uvoc_tsa.scenarios.load_scenario`.
    """
    cp, lines = read_config(source)
    known = set(_SCHEMA) | {"scenario"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, "")))
    conv = ConverterParams(**section_kwargs(cp, lines, "converter"))
    ctrl = ControlParams(**section_kwargs(cp, lines, "control"))
    grid = GridThevenin(**section_kwargs(cp, lines, "grid"))
    return conv, ctrl, grid


def dump_config(conv: ConverterParams, ctrl: ControlParams, grid: GridThevenin) -> str:
    """Inverse of :func:`load_params` (17 significant digits)."""
    objs = {"converter": conv, "control": ctrl, "grid": grid}
    out = []
    for section, schema in _SCHEMA.items():
        out.append(f"[{section}]")
        obj = objs[section]
        for key, (name, typ) in schema.items():
            val = getattr(obj, name)
            out.append(f"{key} = {val:d}" if typ is int else f"{key} = {val:.17g}")
        out.append("")
    return "\n".join(out)
