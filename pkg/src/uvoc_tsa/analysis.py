"""Phase-plane tools: normalized rate surfaces, equilibria, limit cycles, sweeps.

Plane coordinates are ``(delta [rad], V [pu])``.  Rates are ``ddelta/dt``
in rad/s and ``dV/dt`` in pu/s; eigenvalues do not depend on the voltage
scaling, so they come out in 1/s either way.
"""

from __future__ import annotations

import enum
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .reduced import ReducedModel
from .solver import IntegrationError, IntegratorConfig, Trajectory, integrate

log = logging.getLogger(__name__)

__all__ = [
    "Domain",
    "PlaneRates",
    "SurfaceGrid",
    "sample_surfaces",
    "Kind",
    "Equilibrium",
    "find_equilibria",
    "newton_refine",
    "classify_eigs",
    "classify_stability",
    "WindingSection",
    "CoordinateSection",
    "LimitCycle",
    "CycleFailure",
    "cycle_from_trajectory",
    "detect_limit_cycle",
    "SweepPoint",
    "SweepReport",
    "clearing_sweep",
    "plane_distance",
    "worker_count",
    "parallel_map",
    "DroopComparison",
]

TWO_PI = 2.0 * math.pi
MARGINAL_TOL = 1e-6


def wrap(a):
    return (np.asarray(a) + math.pi) % TWO_PI - math.pi


# --------------------------------------------------------------------------
# the plane


@dataclass(frozen=True)
class Domain:
    delta: tuple[float, float] = (-math.pi, math.pi)
    v: tuple[float, float] = (0.05, 1.3)

    def __post_init__(self):
        if not (self.delta[1] > self.delta[0] and self.v[1] > self.v[0]):
            raise ValueError("domain bounds must be increasing")
        if self.v[0] <= 0:
            raise ValueError("voltage range must be positive")

    @property
    def full_turn(self) -> bool:
        return self.delta[1] - self.delta[0] >= TWO_PI - 1e-12

    def contains(self, delta: float, v: float) -> bool:
        d = delta if not self.full_turn else float(wrap(delta - self.delta[0] - math.pi)) + self.delta[0] + math.pi
        return self.delta[0] - 1e-12 <= d <= self.delta[1] + 1e-12 and self.v[0] <= v <= self.v[1]


class PlaneRates:
    """``(ddelta/dt, dV/dt)`` of a quasi-static :class:`ReducedModel` in plane units."""

    def __init__(self, model: ReducedModel):
        if model.dynamic:
            raise ValueError("phase-plane work needs the quasi-static current model")
        self.model = model
        self.v0 = model.params.v0
        self.v_floor_pu = model.v_floor / self.v0

    def __call__(self, delta, v_pu):
        dv, dd = self.model.rates(np.asarray(v_pu) * self.v0, np.asarray(delta))
        return dd, dv / self.v0

    def rhs(self, t, x):
        """Plane-coordinate rhs for ``x = (delta, V_pu)``."""
        if x[1] < self.v_floor_pu:
            raise IntegrationError("voltage below floor", t, x)
        dd, dv = self(x[0], x[1])
        return np.array([float(dd), float(dv)])


@dataclass
class SurfaceGrid:
    delta_axis: np.ndarray
    v_axis: np.ndarray
    ddelta: np.ndarray  # shape (len(v_axis), len(delta_axis))
    dv: np.ndarray
    norm_ddelta: float
    norm_dv: float
    valid: np.ndarray
    equilibria: list["Equilibrium"] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ddelta.shape

    def sign_change_cells(self) -> list[tuple[int, int]]:
        """Cells ``(row, col)`` where both normalized surfaces change sign."""
        out = []
        dd, dv, ok = self.ddelta, self.dv, self.valid

        def changes(a):
            c = np.stack([a[:-1, :-1], a[1:, :-1], a[:-1, 1:], a[1:, 1:]])
            return (c.min(axis=0) <= 0) & (c.max(axis=0) >= 0)

        okc = ok[:-1, :-1] & ok[1:, :-1] & ok[:-1, 1:] & ok[1:, 1:]
        rows, cols = np.nonzero(changes(dd) & changes(dv) & okc)
        for r, c in zip(rows.tolist(), cols.tolist()):
            out.append((r, c))
        return out

    def zero_contour(self, which: str) -> np.ndarray:
        """Points where the chosen surface crosses zero along grid edges (linear interpolation)."""
        a = {"ddelta": self.ddelta, "dv": self.dv}[which]
        pts = []
        d, v, ok = self.delta_axis, self.v_axis, self.valid
        # horizontal edges
        s = a[:, :-1] * a[:, 1:]
        r, c = np.nonzero((s <= 0) & ok[:, :-1] & ok[:, 1:] & (a[:, :-1] != a[:, 1:]))
        f = a[r, c] / (a[r, c] - a[r, c + 1])
        pts.append(np.column_stack([d[c] + f * (d[c + 1] - d[c]), v[r]]))
        # vertical edges
        s = a[:-1, :] * a[1:, :]
        r, c = np.nonzero((s <= 0) & ok[:-1, :] & ok[1:, :] & (a[:-1, :] != a[1:, :]))
        f = a[r, c] / (a[r, c] - a[r + 1, c])
        pts.append(np.column_stack([d[c], v[r] + f * (v[r + 1] - v[r])]))
        return np.vstack(pts)

    def cell_of(self, delta: float, v: float) -> tuple[int, int]:
        c = int(np.clip(np.searchsorted(self.delta_axis, delta) - 1, 0, len(self.delta_axis) - 2))
        r = int(np.clip(np.searchsorted(self.v_axis, v) - 1, 0, len(self.v_axis) - 2))
        return r, c

    def cell_size(self) -> tuple[float, float]:
        return float(self.delta_axis[1] - self.delta_axis[0]), float(self.v_axis[1] - self.v_axis[0])


def _normalise(a: np.ndarray, ok: np.ndarray) -> tuple[np.ndarray, float]:
    m = float(np.max(np.abs(a[ok]))) if ok.any() else 0.0
    if m == 0.0:
        return np.where(ok, 0.0, np.nan), 0.0
    return np.where(ok, a / m, np.nan), m


def sample_surfaces(model: ReducedModel, domain: Domain = Domain(), resolution: int | tuple[int, int] = 256) -> SurfaceGrid:
    """Evaluate and normalize both rate surfaces on a regular grid.

    Nodes below the voltage floor or with non-finite rates are marked
    invalid and excluded from the normalizers.
    """
    nd, nv = (resolution, resolution) if isinstance(resolution, int) else resolution
    if min(nd, nv) < 16:
        raise ValueError("resolution must be at least 16 per axis")
    rates = PlaneRates(model)
    d_axis = np.linspace(*domain.delta, nd)
    v_axis = np.linspace(*domain.v, nv)
    dd_grid, vv_grid = np.meshgrid(d_axis, v_axis)
    with np.errstate(all="ignore"):
        dd, dv = rates(dd_grid, vv_grid)
    ok = np.isfinite(dd) & np.isfinite(dv) & (vv_grid >= rates.v_floor_pu)
    ndd, m_dd = _normalise(dd, ok)
    ndv, m_dv = _normalise(dv, ok)
    return SurfaceGrid(d_axis, v_axis, ndd, ndv, m_dd, m_dv, ok)


# --------------------------------------------------------------------------
# equilibria


class Kind(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    SADDLE = "Saddle"
    CENTER = "Center-marginal"

    @property
    def unstable(self) -> bool:
        return self in (Kind.UNSTABLE, Kind.SADDLE)


@dataclass
class Equilibrium:
    delta: float
    v_mag: float  # pu
    kind: Kind
    jacobian_eigs: tuple[complex, complex]
    residual: float = 0.0  # normalized rate norm at the root
    seed_cell: tuple[int, int] | None = None
    probe_agrees: bool | None = None

    def as_record(self) -> dict:
        return {
            "delta": self.delta,
            "v": self.v_mag,
            "kind": self.kind.value,
            "eigs": [[e.real, e.imag] for e in self.jacobian_eigs],
            "residual": self.residual,
            "probe_agrees": self.probe_agrees,
        }


def fd_jacobian(f: Callable, x: np.ndarray, steps: Sequence[float]) -> np.ndarray:
    """Central-difference Jacobian of ``f: R^n -> R^n``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    jac = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = steps[k]
        jac[:, k] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * steps[k])
    return jac


def newton_refine(
    f: Callable,
    x0,
    steps: Sequence[float],
    max_iter: int = 50,
    tol: float = 1e-12,
) -> tuple[np.ndarray, float, bool]:
    """Damped Newton on ``f(x) = 0`` with a finite-difference Jacobian.

    Returns ``(x, |f(x)|, converged)``.
    """
    x = np.asarray(x0, dtype=float)
    fx = np.asarray(f(x), dtype=float)
    r = float(np.linalg.norm(fx))
    for _ in range(max_iter):
        if not np.isfinite(r):
            return x, r, False
        if r < tol:
            return x, r, True
        jac = fd_jacobian(f, x, steps)
        try:
            dx = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            return x, r, False
        lam = 1.0
        for _ in range(30):
            xn = x + lam * dx
            with np.errstate(all="ignore"):
                fn = np.asarray(f(xn), dtype=float)
            rn = float(np.linalg.norm(fn))
            if np.isfinite(rn) and rn < r:
                break
            lam *= 0.5
        else:
            # no descent: accept if already small, otherwise give up
            return x, r, r < 1e3 * tol
        x, fx, r = xn, fn, rn
        if float(np.linalg.norm(lam * dx)) < 1e-15 * (1.0 + float(np.linalg.norm(x))):
            return x, r, r < 1e3 * tol
    return x, r, r < tol


def classify_eigs(eigs) -> Kind:
    re = [complex(e).real for e in eigs]
    if any(abs(r) <= MARGINAL_TOL for r in re):
        log.warning("eigenvalue real part within %g of zero; classified as marginal", MARGINAL_TOL)
        return Kind.CENTER
    if all(r < 0 for r in re):
        return Kind.STABLE
    if all(r > 0 for r in re):
        return Kind.UNSTABLE
    return Kind.SADDLE


def plane_distance(a, b) -> float:
    """Distance in ``(delta, V_pu)`` with delta taken modulo 2 pi."""
    return math.hypot(float(wrap(a[0] - b[0])), a[1] - b[1])


def _probe(rates: PlaneRates, x: np.ndarray, eigs, amp: float = 1e-3) -> bool | None:
    """Perturbation check: do small displacements shrink (True) or not (False)?"""
    slow = min(abs(complex(e).real) for e in eigs)
    if slow <= MARGINAL_TOL:
        return None
    horizon = min(max(3.0 / slow, 0.01), 5.0)
    cfg = IntegratorConfig(rtol=1e-9, atol=1e-12)
    shrink = []
    for dx in ((amp, 0.0), (-amp, 0.0), (0.0, amp), (0.0, -amp)):
        x0 = x + np.array(dx)
        try:
            tr = integrate(rates.rhs, x0, (0.0, horizon), cfg)
            shrink.append(plane_distance(tr.y_final, x) < plane_distance(x0, x))
        except IntegrationError:
            shrink.append(False)
    return all(shrink)


def classify_stability(eq: Equilibrium, model: ReducedModel, probe: bool = True) -> Equilibrium:
    """Fill ``kind``/``jacobian_eigs`` (and the perturbation verdict) for a root."""
    rates = PlaneRates(model)
    x = np.array([eq.delta, eq.v_mag])
    jac = fd_jacobian(lambda z: np.array(rates(z[0], z[1]), dtype=float), x, (1e-6 * TWO_PI, 1e-6))
    eigs = tuple(complex(e) for e in np.linalg.eigvals(jac))
    eq.jacobian_eigs = eigs
    eq.kind = classify_eigs(eigs)
    if probe:
        verdict = _probe(rates, x, eigs)
        eq.probe_agrees = None if verdict is None else verdict == (eq.kind is Kind.STABLE)
    return eq


def find_equilibria(
    surface: SurfaceGrid,
    model: ReducedModel,
    domain: Domain | None = None,
    probe: bool = True,
    merge_tol: float = 1e-6,
    residual_tol: float = 1e-8,
) -> list[Equilibrium]:
    """Refine every sign-change cell with Newton and classify the distinct roots."""
    rates = PlaneRates(model)
    nd, nv = surface.norm_ddelta or 1.0, surface.norm_dv or 1.0
    d_span = float(surface.delta_axis[-1] - surface.delta_axis[0])
    v_span = float(surface.v_axis[-1] - surface.v_axis[0])
    if domain is None:
        domain = Domain((float(surface.delta_axis[0]), float(surface.delta_axis[-1])), (float(surface.v_axis[0]), float(surface.v_axis[-1])))

    def f(x):
        dd, dv = rates(x[0], x[1])
        return np.array([dd / nd, dv / nv], dtype=float)

    found: list[Equilibrium] = []
    for r, c in surface.sign_change_cells():
        x0 = np.array([
            0.5 * (surface.delta_axis[c] + surface.delta_axis[c + 1]),
            0.5 * (surface.v_axis[r] + surface.v_axis[r + 1]),
        ])
        with np.errstate(all="ignore"):
            x, res, ok = newton_refine(f, x0, (1e-6 * d_span, 1e-6 * v_span))
        if not ok or res >= residual_tol:
            log.debug("cell (%d, %d): Newton did not converge (|f| = %.3g)", r, c, res)
            continue
        if domain.full_turn:
            x[0] = float(wrap(x[0]))
        if not domain.contains(x[0], x[1]):
            continue
        if any(plane_distance(x, (e.delta, e.v_mag)) < merge_tol for e in found):
            continue
        eq = Equilibrium(float(x[0]), float(x[1]), Kind.CENTER, (0j, 0j), res, (r, c))
        found.append(classify_stability(eq, model, probe))
    found.sort(key=lambda e: (e.delta, e.v_mag))
    surface.equilibria = found
    return found


# --------------------------------------------------------------------------
# limit cycles


@dataclass(frozen=True)
class WindingSection:
    """Section at ``y[angle_index] = phi0 + 2 pi k``; one period per full turn."""

    angle_index: int = 1
    phi0: float | None = None  # defaults to the initial angle + pi


@dataclass(frozen=True)
class CoordinateSection:
    index: int
    value: float
    direction: str = "rising"

    def __post_init__(self):
        if self.direction not in ("rising", "falling"):
            raise ValueError("direction must be rising or falling")


@dataclass
class LimitCycle:
    period: float
    convergence_ratio: float
    periods: list[float]
    t_start: float  # start of the last measured period
    orbit_t: np.ndarray
    orbit: np.ndarray  # full states over the last period
    traj: Trajectory = field(repr=False)

    def state_at(self, tau: float) -> np.ndarray:
        """State at phase ``tau`` in ``[0, period]`` along the last period."""
        return self.traj(self.t_start + float(tau) % self.period)

    def points(self, m: int) -> list[tuple[float, np.ndarray]]:
        """``m`` temporally uniform ``(tau, state)`` samples on the orbit."""
        return [(k * self.period / m, self.state_at(k * self.period / m)) for k in range(m)]


@dataclass
class CycleFailure:
    reason: str  # "divergence" | "equilibrium" | "inconclusive"
    periods: list[float]
    t_final: float
    y_final: np.ndarray


def _crossings(traj: Trajectory, g: Callable[[float, np.ndarray], float], direction: str | None, t_min: float) -> list[float]:
    t = traj.t
    out = []
    prev_t, prev_g = None, None
    for k in range(len(t)):
        tk = float(t[k])
        if tk < t_min:
            continue
        gk = g(tk, traj.y[k])
        if prev_t is not None and tk > prev_t:
            up = prev_g < 0 <= gk
            down = prev_g > 0 >= gk
            if (direction in (None, "rising") and up) or (direction in (None, "falling") and down):
                if gk == 0.0:
                    out.append(tk)
                else:
                    out.append(brentq(lambda s: g(s, traj(s)), prev_t, tk, xtol=1e-13, rtol=4 * np.finfo(float).eps))
        prev_t, prev_g = tk, gk
    return out


def cycle_from_trajectory(
    traj: Trajectory,
    section: WindingSection | CoordinateSection = WindingSection(),
    return_index: int = 0,
    return_scale: float = 1.0,
    return_tol: float = 1e-4,
    ratio_tol: float = 1e-3,
    n_agree: int = 3,
    t_min: float | None = None,
) -> LimitCycle | None:
    """Measure a periodic orbit on a finished trajectory, or ``None``.

    ``return_scale`` converts ``y[return_index]`` to the units of
    ``return_tol`` (for example ``1/V0`` for a voltage in volts).
    """
    t_min = float(traj.t[0]) if t_min is None else t_min
    times: list[float] = []
    if isinstance(section, WindingSection):
        ai = section.angle_index
        phi0 = float(traj.y[0][ai]) + math.pi if section.phi0 is None else section.phi0
        # sin((phi - phi0)/2) vanishes once per turn and is continuous in phi
        raw = _crossings(traj, lambda s, y: math.sin(0.5 * (y[ai] - phi0)), None, t_min)
        # keep only crossings that continue a monotone winding
        last_k, step = None, 0
        for tc in raw:
            k = round((traj(tc)[ai] - phi0) / TWO_PI)
            if last_k is None:
                times.append(tc)
            elif k != last_k:
                s = 1 if k > last_k else -1
                if step in (0, s):
                    times.append(tc)
                else:
                    times = [tc]
                step = s
            last_k = k
    else:
        idx, val = section.index, section.value
        times = _crossings(traj, lambda s, y: y[idx] - val, section.direction, t_min)

    if len(times) < n_agree + 1:
        return None
    periods = list(np.diff(times))
    recent = periods[-n_agree:]
    ratio = max(abs(a - b) for a, b in zip(recent[1:], recent[:-1])) / recent[-1] if n_agree > 1 else 0.0
    back = [float(traj(tc)[return_index]) * return_scale for tc in times[-n_agree - 1:]]
    returns_ok = all(abs(a - b) < return_tol for a, b in zip(back[1:], back[:-1]))
    if ratio >= ratio_tol or not returns_ok:
        return None
    t0, t1 = times[-2], times[-1]
    orbit_t = np.linspace(t0, t1, 257)
    orbit = np.array([traj(s) for s in orbit_t])
    return LimitCycle(
        period=float(t1 - t0),
        convergence_ratio=float(abs(recent[-1] - recent[-2]) / recent[-1]) if n_agree > 1 else 0.0,
        periods=[float(p) for p in periods],
        t_start=float(t0),
        orbit_t=orbit_t - t0,
        orbit=orbit,
        traj=traj,
    )


def _concat(parts: list[Trajectory]) -> Trajectory:
    if len(parts) == 1:
        return parts[0]
    first = parts[0]
    steps, starts, ts, ys, evs = [], [], [first.t[:1]], [first.y[:1]], []
    nfev = acc = rej = 0
    for p in parts:
        steps.extend(p._steps)
        starts.extend(p._starts)
        ts.append(p.t[1:])
        ys.append(p.y[1:])
        evs.extend(p.events)
        nfev += p.nfev
        acc += p.n_accepted
        rej += p.n_rejected
    return Trajectory(np.concatenate(ts), np.vstack(ys), evs, parts[-1].status, nfev, acc, rej, steps, starts)


def detect_limit_cycle(
    rhs: Callable,
    y0,
    t0: float = 0.0,
    section: WindingSection | CoordinateSection = WindingSection(),
    config: IntegratorConfig | None = None,
    t_max: float = 30.0,
    chunk: float = 2.0,
    return_index: int = 0,
    return_scale: float = 1.0,
    return_tol: float = 1e-4,
    ratio_tol: float = 1e-3,
    settle_tol: float = 1e-4,
) -> LimitCycle | CycleFailure:
    """Integrate until a periodic orbit is confirmed or the budget runs out.

    A chunk ending with ``|rhs| / max(|y|, 1) < settle_tol`` in every
    component counts as settled on an equilibrium.  The default sits well
    above the rate noise left by the integrator tolerances.
    """
    cfg = config or IntegratorConfig()
    y = np.asarray(y0, dtype=float)
    parts: list[Trajectory] = []
    t = t0
    while t < t0 + t_max - 1e-12:
        t_next = min(t + chunk, t0 + t_max)
        try:
            part = integrate(rhs, y, (t, t_next), cfg)
        except IntegrationError as exc:
            tr = exc.trajectory
            return CycleFailure("divergence", [], exc.t, exc.y if tr is None else tr.y_final)
        parts.append(part)
        traj = _concat(parts)
        if part.status == "stopped":
            return CycleFailure("divergence", [], part.t_final, part.y_final)
        found = cycle_from_trajectory(traj, section, return_index, return_scale, return_tol, ratio_tol)
        if found is not None:
            return found
        # settled onto an equilibrium?
        f_end = np.asarray(rhs(part.t_final, part.y_final))
        scale = np.maximum(np.abs(part.y_final), 1.0)
        if np.max(np.abs(f_end) / scale) < settle_tol:
            return CycleFailure("equilibrium", [], part.t_final, part.y_final)
        t, y = part.t_final, part.y_final
    traj = _concat(parts)
    return CycleFailure("inconclusive", [], traj.t_final, traj.y_final)


# --------------------------------------------------------------------------
# clearing sweeps


@dataclass
class SweepPoint:
    index: int
    tau: float
    start: tuple[float, float]  # (delta, V_pu)
    final: tuple[float, float]
    distance: float
    converged: bool
    status: str = "success"


@dataclass
class SweepReport:
    points: list[SweepPoint]
    target: tuple[float, float]
    tol: float

    @property
    def n_converged(self) -> int:
        return sum(p.converged for p in self.points)

    @property
    def all_converged(self) -> bool:
        return self.n_converged == len(self.points)

    def as_record(self) -> dict:
        return {
            "target": {"delta": self.target[0], "v": self.target[1]},
            "tol": self.tol,
            "n_points": len(self.points),
            "n_converged": self.n_converged,
            "points": [
                {
                    "index": p.index,
                    "tau": p.tau,
                    "delta0": p.start[0],
                    "v0": p.start[1],
                    "delta_final": p.final[0],
                    "v_final": p.final[1],
                    "distance": p.distance,
                    "converged": p.converged,
                    "status": p.status,
                }
                for p in self.points
            ],
        }


def worker_count(requested: int | None = None) -> int:
    """Worker processes to use; ``UVOC_TSA_THREADS`` caps the value."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    env = os.environ.get("UVOC_TSA_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ValueError(f"UVOC_TSA_THREADS must be an integer, got {env!r}") from None
        if cap < 1:
            raise ValueError("UVOC_TSA_THREADS must be at least 1")
        n = min(n, cap)
    return max(1, n)


def parallel_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """Order-preserving map; runs in a process pool when more than one worker is allowed."""
    n = min(worker_count(workers), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def clearing_sweep(
    cycle: LimitCycle,
    post_fault: Callable[[np.ndarray], tuple[np.ndarray, str]],
    to_plane: Callable[[np.ndarray], tuple[float, float]],
    target: tuple[float, float],
    m: int = 12,
    tol: float = 1e-3,
    workers: int | None = None,
) -> SweepReport:
    """Clear the fault at ``m`` temporally uniform points of ``cycle``.

    ``post_fault(state)`` returns ``(final_state, status)`` after the
    post-fault horizon; ``to_plane`` maps a state to ``(delta, V_pu)``.
    """
    if m < 4:
        raise ValueError("m must be at least 4")
    pts = cycle.points(m)
    results = parallel_map(post_fault, [y for _, y in pts], workers)
    out = []
    for k, ((tau, y), (yf, status)) in enumerate(zip(pts, results)):
        start = to_plane(y)
        final = to_plane(yf)
        dist = plane_distance(final, target)
        out.append(SweepPoint(k, float(tau), start, final, dist, bool(status == "success" and dist < tol), status))
    return SweepReport(out, (float(target[0]), float(target[1])), tol)


# --------------------------------------------------------------------------
# second-order comparison


@dataclass(frozen=True)
class DroopComparison:
    """Droop controller with a low-pass power measurement (swing-equation form).

    ``tau * domega/dt = -omega + m_p (P0 - P_max sin delta)``,
    ``ddelta/dt = omega``, powers in pu, ``m_p`` in rad/s per pu.  The
    default ``m_p`` equals the uVOC small-signal droop ``eta0 S_base / (N V0^2)``
    at the default parameters; ``tau`` is chosen for low damping.
    Illustrative only.
    """

    p0: float = 0.8
    p_max_pre: float = 1.0 / 0.52
    p_max_fault: float = 0.6
    m_p: float = 19.95 * 7500.0 / (3 * 120.0**2)
    tau: float = 2.0

    def rhs(self, fault: bool):
        p_max = self.p_max_fault if fault else self.p_max_pre

        def f(t, y):
            return np.array([y[1], (-y[1] + self.m_p * (self.p0 - p_max * math.sin(y[0]))) / self.tau])

        return f

    def stable_equilibrium(self) -> np.ndarray:
        return np.array([math.asin(self.p0 / self.p_max_pre), 0.0])

    def fault_cycle(self, config: IntegratorConfig | None = None, t_max: float = 200.0) -> LimitCycle | CycleFailure:
        return detect_limit_cycle(
            self.rhs(True), self.stable_equilibrium(), section=WindingSection(0),
            config=config, t_max=t_max, chunk=20.0, return_index=1, return_tol=1e-6,
        )

    def post_fault(self, y, horizon: float = 60.0, config: IntegratorConfig | None = None) -> tuple[np.ndarray, str]:
        """Integrate from ``y`` with the angle wrapped first; a pole slip stays visible."""
        y = np.array(y, dtype=float)
        y[0] = wrap(y[0])
        tr = integrate(self.rhs(False), y, (0.0, horizon), config or IntegratorConfig())
        return tr.y_final, "success"

    def sweep(self, m: int = 12, tol: float = 1e-3, workers: int | None = None) -> SweepReport:
        """Clearing sweep on the fault cycle; plane coordinates are ``(delta, omega)``."""
        cyc = self.fault_cycle()
        if not isinstance(cyc, LimitCycle):
            raise RuntimeError(f"droop fault cycle not found: {cyc.reason}")
        target = self.stable_equilibrium()
        return clearing_sweep(cyc, self.post_fault, lambda y: (float(y[0]), float(y[1])),
                              (float(target[0]), float(target[1])), m, tol, workers)
