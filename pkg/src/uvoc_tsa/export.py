"""CSV/JSON writers and plain-text plot scripts.

Floats go to CSV at 17 significant digits.  JSON uses Python's shortest
round-trip float repr, which is lossless.  Both are byte-stable for
identical inputs.

CSV schemas (one header row, comma separated):

``trajectory.csv``
    t [s], v [pu], delta [rad, wrapped], i [pu], v_poc [pu], x_f [0/1],
    x_r [-], v_th [pu]
``surface_<phase>.csv``
    delta [rad], v [pu], ddelta_norm [-], dv_norm [-], valid [0/1];
    rows run over delta fastest, then v.  Invalid nodes carry ``nan``.
``limit_cycle.csv``
    tau [s], delta [rad, unwrapped], v [pu]
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analysis import Equilibrium, LimitCycle, SurfaceGrid, SweepReport
from .hybrid import HybridResult

__all__ = [
    "fmt",
    "write_csv",
    "write_json",
    "trajectory_csv",
    "surface_csv",
    "equilibria_json",
    "limit_cycle_files",
    "sweep_json",
    "plot_script",
    "TRAJECTORY_COLUMNS",
    "SURFACE_COLUMNS",
    "CYCLE_COLUMNS",
]

TRAJECTORY_COLUMNS = ("t", "v", "delta", "i", "v_poc", "x_f", "x_r", "v_th")
SURFACE_COLUMNS = ("delta", "v", "ddelta_norm", "dv_norm", "valid")
CYCLE_COLUMNS = ("tau", "delta", "v")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path: str | Path, header: Sequence[str], columns: Sequence[Iterable]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [list(c) for c in columns]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns must have equal length")
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(fmt(x) for x in row) + "\n")
    return path


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: str | Path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")
    return path


def trajectory_csv(result: HybridResult, path: str | Path) -> Path:
    tab = result.table()
    return write_csv(path, TRAJECTORY_COLUMNS, [tab[c] for c in TRAJECTORY_COLUMNS])


def surface_csv(surface: SurfaceGrid, path: str | Path) -> Path:
    dd, vv = np.meshgrid(surface.delta_axis, surface.v_axis)
    ok = surface.valid
    a = np.where(ok, surface.ddelta, np.nan)
    b = np.where(ok, surface.dv, np.nan)
    return write_csv(path, SURFACE_COLUMNS, [dd.ravel(), vv.ravel(), a.ravel(), b.ravel(), ok.ravel()])


def equilibria_json(eqs: Sequence[Equilibrium], path: str | Path, **meta) -> Path:
    return write_json(path, {**meta, "count": len(eqs), "equilibria": [e.as_record() for e in eqs]})


def limit_cycle_files(cycle: LimitCycle, v_scale: float, csv_path: str | Path, json_path: str | Path, **meta) -> tuple[Path, Path]:
    """Orbit samples over one period plus a period summary.

    ``v_scale`` converts the stored voltage state to pu.
    """
    orbit = np.asarray(cycle.orbit)
    c = write_csv(csv_path, CYCLE_COLUMNS, [cycle.orbit_t, orbit[:, 1], orbit[:, 0] * v_scale])
    j = write_json(json_path, {
        **meta,
        "period_s": cycle.period,
        "convergence_ratio": cycle.convergence_ratio,
        "periods_s": cycle.periods,
    })
    return c, j


def sweep_json(report: SweepReport, path: str | Path, **meta) -> Path:
    return write_json(path, {**meta, **report.as_record()})


_PLOTS = {
    "trajectory": """\
set datafile separator ','
set key autotitle columnhead
set xlabel 't [s]'
set multiplot layout 3,1
plot '{csv}' using 1:2 with lines title 'V [pu]', '' using 1:5 with lines title '|v_poc| [pu]'
plot '{csv}' using 1:4 with lines title '|i| [pu]'
plot '{csv}' using 1:3 with lines title 'delta [rad]', '' using 1:7 with lines title 'x_r'
unset multiplot
""",
    "surface": """\
set datafile separator ','
set xlabel 'delta [rad]'
set ylabel 'V [pu]'
set view map
set contour base
set cntrparam levels discrete 0
unset surface
set table '{stem}_zero.dat'
splot '{csv}' every ::1 using 1:2:3 with lines title 'ddelta = 0', '' every ::1 using 1:2:4 with lines title 'dV = 0'
unset table
plot '{stem}_zero.dat' with lines title 'zero contours'
""",
    "limit-cycle": """\
set datafile separator ','
set key autotitle columnhead
set xlabel 'delta [rad]'
set ylabel 'V [pu]'
plot '{csv}' using 2:3 with lines title 'orbit'
""",
}


def plot_script(kind: str, csv_path: str | Path, path: str | Path) -> Path:
    """Write a gnuplot script rendering ``csv_path``; paths are relative to the script."""
    if kind not in _PLOTS:
        raise ValueError(f"plot kind must be one of {sorted(_PLOTS)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    csv_name = Path(csv_path).name
    stem = Path(csv_path).stem
    path.write_text(_PLOTS[kind].format(csv=csv_name, stem=stem))
    return path
