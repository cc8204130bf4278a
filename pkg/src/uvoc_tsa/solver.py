"""Dormand-Prince 5(4) integrator with dense output and event location.

The propagated solution is 5th order, the embedded 4th-order solution only
drives step-size control (PI controller on the weighted RMS error).  Dense
output uses the standard quartic continuous extension, so interpolated
values are 4th-order accurate and exact at step endpoints.

Events are scalar functions ``g(t, y)``; sign changes over an accepted step
are bracketed and bisected on the dense interpolant.  ``stop`` events end
the integration, ``mode-switch`` events call a handler that may replace the
right-hand side, the state and the event list before integration resumes.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "IntegratorConfig",
    "EventSpec",
    "EventRecord",
    "Trajectory",
    "IntegrationError",
    "StepUnderflowError",
    "StepBudgetError",
    "integrate",
    "dense_eval",
]

# Butcher tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_HAT = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _B_HAT

# quartic dense-output coefficients, columns multiply theta**1..4
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_ORDER = 5
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
# PI step-size controller exponents for err ~ h^5
_BETA = 0.04
_ALPHA = 1.0 / _ORDER - 0.75 * _BETA


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float, y: np.ndarray, trajectory: "Trajectory | None" = None):
        super().__init__(f"{message} at t={t:.9g}")
        self.t = t
        self.y = np.array(y, copy=True)
        self.trajectory = trajectory


class StepUnderflowError(IntegrationError):
    """Step size fell below ``h_min``: stiffness or a singularity."""


class StepBudgetError(IntegrationError):
    """``max_steps`` exceeded."""


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-7
    atol: float = 1e-9
    h_init: float | None = None
    h_min: float = 1e-12
    h_max: float = math.inf
    max_steps: int = 1_000_000
    event_tol: float = 1e-12

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not (0 < self.h_min <= self.h_max):
            raise ValueError("need 0 < h_min <= h_max")
        if self.h_init is not None and self.h_init <= 0:
            raise ValueError("h_init must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class EventSpec:
    """Scalar event ``fn(t, y) = 0``.

    ``direction`` is ``"rising"``, ``"falling"`` or ``"any"``.  ``action``
    is ``"stop"``, ``"record"`` or ``"mode-switch"``; the latter requires a
    ``handler(t, y)`` returning ``(rhs, y, events)`` for the next segment
    (any of them may be ``None`` to keep the current one).
    """

    fn: Callable[[float, np.ndarray], float]
    direction: str = "any"
    action: str = "record"
    handler: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if self.direction not in ("rising", "falling", "any"):
            raise ValueError(f"bad event direction {self.direction!r}")
        if self.action not in ("stop", "record", "mode-switch"):
            raise ValueError(f"bad event action {self.action!r}")
        if self.action == "mode-switch" and self.handler is None:
            raise ValueError("mode-switch events need a handler")

    def triggered(self, g0: float, g1: float) -> bool:
        rising = g0 < 0.0 <= g1
        falling = g0 > 0.0 >= g1
        if self.direction == "rising":
            return rising
        if self.direction == "falling":
            return falling
        return rising or falling


@dataclass(frozen=True)
class EventRecord:
    t: float
    y: np.ndarray
    name: str
    index: int
    action: str


@dataclass
class Trajectory:
    """Accepted steps plus the data needed to interpolate between them.

    At a mode switch the time appears twice: once with the pre-switch state
    and once with the (possibly modified) post-switch state.
    """

    t: np.ndarray
    y: np.ndarray
    events: list[EventRecord]
    status: str
    nfev: int
    n_accepted: int
    n_rejected: int
    # per-step interpolation data: (t_start, h, y_start, Q, y_end), Q of shape (n, 4)
    _steps: list = field(default_factory=list, repr=False)
    _starts: list = field(default_factory=list, repr=False)

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def y_final(self) -> np.ndarray:
        return self.y[-1]

    def __call__(self, t):
        return dense_eval(self, t)


def dense_eval(traj: Trajectory, t):
    """Evaluate the continuous extension at scalar or array ``t``."""
    scalar = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    t0, t1 = traj.t[0], traj.t[-1]
    span_eps = 1e-12 * max(1.0, abs(t0), abs(t1))
    if np.any(ts < t0 - span_eps) or np.any(ts > t1 + span_eps):
        raise ValueError(f"t outside trajectory span [{t0}, {t1}]")
    out = np.empty((ts.size, traj.y.shape[1]))
    for k, tk in enumerate(ts):
        if not traj._steps:
            out[k] = traj.y[0]
            continue
        i = bisect.bisect_right(traj._starts, tk) - 1
        i = min(max(i, 0), len(traj._steps) - 1)
        ts0, h, y0, Q, y1 = traj._steps[i]
        theta = min(max((tk - ts0) / h, 0.0), 1.0)
        if theta == 1.0:
            out[k] = y1
        else:
            out[k] = y0 + h * (Q @ np.array([theta, theta**2, theta**3, theta**4]))
    return out[0] if scalar else out


def _initial_step(rhs, t0, y0, f0, direction, cfg: IntegratorConfig) -> float:
    scale = cfg.atol + cfg.rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = np.asarray(rhs(t0 + direction * h0, y1), dtype=float)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / _ORDER)
    return min(100 * h0, h1)


def _rk_step(rhs, t, y, f0, h):
    K = np.empty((7, y.size))
    K[0] = f0
    for s in range(1, 7):
        dy = np.dot(_A[s], K[:s]) * h
        K[s] = rhs(t + _C[s] * h, y + dy)
    y_new = y + h * np.dot(_B, K)
    err = h * np.dot(_E, K)
    return y_new, err, K


def _locate(ev: EventSpec, t0: float, h: float, y0, Q, g0: float, g1: float, tol: float):
    """Bisect on the dense interpolant inside ``[t0, t0 + h]``."""
    lo, hi = 0.0, 1.0
    glo = g0
    tol_theta = tol / abs(h)
    for _ in range(200):
        if hi - lo <= tol_theta:
            break
        mid = 0.5 * (lo + hi)
        p = np.array([mid, mid**2, mid**3, mid**4])
        gm = ev.fn(t0 + mid * h, y0 + h * (Q @ p))
        if ev.triggered(glo, gm) or gm == 0.0:
            hi = mid
        else:
            lo, glo = mid, gm
    p = np.array([hi, hi**2, hi**3, hi**4])
    return t0 + hi * h, y0 + h * (Q @ p)


def integrate(
    rhs: Callable[[float, np.ndarray], Sequence[float]],
    y0,
    t_span: tuple[float, float],
    config: IntegratorConfig | None = None,
    events: Sequence[EventSpec] = (),
) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` forward over ``t_span``.

    Returns a :class:`Trajectory` with ``status`` ``"success"`` or
    ``"stopped"`` (terminal event).  Raises :class:`StepUnderflowError` or
    :class:`StepBudgetError`, both carrying the partial trajectory.
    """
    cfg = config or IntegratorConfig()
    t0, t_end = float(t_span[0]), float(t_span[1])
    if not t_end > t0:
        raise ValueError("t_span must be increasing")
    y = np.array(y0, dtype=float).ravel()
    events = list(events)

    ts = [t0]
    ys = [y.copy()]
    steps: list = []
    starts: list = []
    records: list[EventRecord] = []
    nfev = 0
    n_acc = n_rej = 0

    def wrap(fun):
        def f(t, yy):
            nonlocal nfev
            nfev += 1
            return np.asarray(fun(t, yy), dtype=float)

        return f

    f = wrap(rhs)
    t = t0
    f0 = f(t, y)
    h = cfg.h_init or _initial_step(f, t, y, f0, 1.0, cfg)
    h = min(max(h, cfg.h_min), cfg.h_max)
    g_prev = [ev.fn(t, y) for ev in events]
    err_prev = 1e-4
    status = "success"

    def partial(stat):
        return Trajectory(np.array(ts), np.array(ys), records, stat, nfev, n_acc, n_rej, steps, starts)

    while t < t_end:
        if n_acc + n_rej >= cfg.max_steps:
            raise StepBudgetError("max_steps exceeded", t, y, partial("budget"))
        h_step = min(h, t_end - t)
        last = h_step >= t_end - t
        try:
            y_new, err, K = _rk_step(f, t, y, f0, h_step)
        except ArithmeticError:
            # a trial stage left the rhs domain (e.g. a voltage floor): shrink
            y_new, err_norm = y, math.inf
        else:
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if not np.isfinite(err_norm):
            err_norm = math.inf

        if err_norm > 1.0:
            n_rej += 1
            factor = max(_MIN_FACTOR, _SAFETY * err_norm ** (-1.0 / _ORDER)) if np.isfinite(err_norm) else _MIN_FACTOR
            h = h_step * factor
            if h < cfg.h_min:
                raise StepUnderflowError("step size underflow", t, y, partial("underflow"))
            continue

        n_acc += 1
        t_new = t0 + (t_end - t0) if last else t + h_step
        Q = K.T @ _P
        f_new = K[6]  # FSAL

        # events
        hits = []
        g_new = [ev.fn(t_new, y_new) for ev in events]
        for k, ev in enumerate(events):
            if ev.triggered(g_prev[k], g_new[k]):
                te, ye = _locate(ev, t, h_step, y, Q, g_prev[k], g_new[k], cfg.event_tol)
                hits.append((te, k, ye))
        hits.sort(key=lambda item: (item[0], item[1]))

        stop_at = None
        for te, k, ye in hits:
            ev = events[k]
            records.append(EventRecord(te, ye.copy(), ev.name, k, ev.action))
            if ev.action in ("stop", "mode-switch"):
                stop_at = (te, k, ye)
                break

        if stop_at is None:
            steps.append((t, h_step, y.copy(), Q, y_new.copy()))
            starts.append(t)
            t, y, f0 = t_new, y_new, f_new
            ts.append(t)
            ys.append(y.copy())
            g_prev = g_new
        else:
            te, k, ye = stop_at
            # truncate the step at the event; Q rescaled to the shorter interval
            frac = (te - t) / h_step
            if frac > 0:
                steps.append((t, te - t, y.copy(), _truncate(Q, frac), ye.copy()))
                starts.append(t)
            t = te
            y = ye
            ts.append(t)
            ys.append(y.copy())
            ev = events[k]
            if ev.action == "stop":
                status = "stopped"
                break
            new_rhs, new_y, new_events = ev.handler(t, y.copy())
            if new_rhs is not None:
                f = wrap(new_rhs)
            if new_y is not None:
                y = np.array(new_y, dtype=float).ravel()
            if new_events is not None:
                events = list(new_events)
            ts.append(t)
            ys.append(y.copy())
            f0 = f(t, y)
            # the switching event sits exactly on zero; start from its sign after the step
            g_prev = [ev2.fn(t, y) for ev2 in events]
            h = max(h_step * 0.5, cfg.h_min)
            continue

        # PI step-size update
        err_norm = max(err_norm, 1e-10)
        factor = _SAFETY * err_norm ** (-_ALPHA) * err_prev**_BETA
        factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        err_prev = err_norm
        h = min(h_step * factor, cfg.h_max)
        if h < cfg.h_min and t < t_end:
            raise StepUnderflowError("step size underflow", t, y, partial("underflow"))

    return partial(status)


def _truncate(Q: np.ndarray, frac: float) -> np.ndarray:
    """Re-express the interpolant on ``[0, frac*h]`` as a polynomial in the new theta.

    ``y(t0 + s*frac*h) = y0 + h * Q @ [s*frac, ...] = y0 + (frac*h) * Q' @ [s, s^2, ...]``
    with ``Q'[:, j] = Q[:, j] * frac**j`` (j zero-based).
    """
    return Q * np.array([1.0, frac, frac**2, frac**3])
