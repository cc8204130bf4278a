import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uvoc_tsa.analysis import (
    CoordinateSection,
    CycleFailure,
    Domain,
    DroopComparison,
    Equilibrium,
    Kind,
    LimitCycle,
    PlaneRates,
    WindingSection,
    classify_eigs,
    clearing_sweep,
    detect_limit_cycle,
    fd_jacobian,
    newton_refine,
    parallel_map,
    plane_distance,
    sample_surfaces,
    worker_count,
)
from uvoc_tsa.params import GridThevenin, SystemParams
from uvoc_tsa.scenarios import builtin
from uvoc_tsa.simulate import phase_plane
from uvoc_tsa.solver import integrate

P = SystemParams()


# -- surfaces --------------------------------------------------------------


@settings(max_examples=1000, deadline=None)
@given(
    st.sampled_from(sorted(["case1", "case2-unprotected", "case2-protected", "case3"])),
    st.sampled_from(["pre", "fault"]),
    st.floats(0.05, 1.0), st.floats(-0.3, 0.3), st.floats(0.05, 1.0), st.floats(0.2, 1.0),
)
def test_surface_normalization(case, phase, p0, q0, z, v_fault):
    sc = builtin(case)
    sc = replace(sc, p0=p0, q0=q0, s_boost=max(sc.s_boost, abs(p0)),
                 pre_fault=replace(sc.pre_fault, z_th_mag=z), fault=replace(sc.fault, z_th_mag=z, v_th=v_fault))
    surf = sample_surfaces(sc.plane_model(P, phase), Domain(), 16)
    ok = surf.valid
    assert ok.any()
    assert np.max(np.abs(surf.ddelta[ok])) == pytest.approx(1.0, rel=1e-15)
    assert np.max(np.abs(surf.dv[ok])) == pytest.approx(1.0, rel=1e-15)
    assert surf.norm_ddelta > 0 and surf.norm_dv > 0


def test_surface_shape_and_floor():
    model = builtin("case1").plane_model(P, "pre")
    surf = sample_surfaces(model, Domain(v=(0.001, 1.3)), (32, 24))
    assert surf.shape == (24, 32)
    assert not surf.valid[0].any()  # below the 0.01 pu voltage floor
    with pytest.raises(ValueError):
        sample_surfaces(model, Domain(), 8)
    with pytest.raises(ValueError):
        Domain((1.0, 0.0))


def test_plane_rates_reject_dynamic_model():
    from uvoc_tsa.reduced import CurrentModel, ReducedModel

    sc = builtin("case1")
    with pytest.raises(ValueError):
        PlaneRates(ReducedModel(P, sc.pre_fault, sc.setpoints(P), current_model=CurrentModel.DYNAMIC))


# -- equilibria --------------------------------------------------------------


def test_linear_system_classification():
    a = np.diag([-1.0, -2.0])
    f = lambda x: a @ x  # noqa: E731
    x, res, ok = newton_refine(f, (0.3, -0.2), (1e-6, 1e-6))
    assert ok and np.allclose(x, 0.0, atol=1e-12)
    eigs = np.linalg.eigvals(fd_jacobian(f, x, (1e-6, 1e-6)))
    assert sorted(eigs.real) == pytest.approx([-2.0, -1.0], rel=1e-9)
    assert classify_eigs(eigs) is Kind.STABLE
    assert classify_eigs([1.0, 2.0]) is Kind.UNSTABLE
    assert classify_eigs([1.0, -2.0]) is Kind.SADDLE
    assert classify_eigs([1j, -1j]) is Kind.CENTER
    assert Kind.SADDLE.unstable and Kind.UNSTABLE.unstable and not Kind.STABLE.unstable


@pytest.fixture(scope="module")
def planes():
    out = {}
    for case in ("case1", "case2-protected", "case3"):
        for phase in ("pre", "fault"):
            out[case, phase] = phase_plane(P, builtin(case), phase)
    return out


def test_case3_topology(planes):
    surf, eqs = planes["case3", "pre"]
    assert len(eqs) == 2
    kinds = sorted(e.kind.value for e in eqs)
    assert Kind.STABLE.value in kinds and sum(e.kind.unstable for e in eqs) == 1
    a_s = next(e for e in eqs if e.kind is Kind.STABLE)
    assert a_s.v_mag == pytest.approx(0.994, abs=5e-3)
    assert planes["case3", "fault"][1] == []


def test_stable_fault_equilibria(planes):
    _, c1 = planes["case1", "fault"]
    d = [e for e in c1 if e.kind is Kind.STABLE]
    assert len(d) == 1 and d[0].v_mag == pytest.approx(0.941, abs=2e-3)
    _, c2 = planes["case2-protected", "fault"]
    d = [e for e in c2 if e.kind is Kind.STABLE]
    assert len(d) == 1 and d[0].v_mag == pytest.approx(0.996, abs=2e-3)


def test_equilibria_residuals_and_probe(planes):
    for (case, phase), (surf, eqs) in planes.items():
        for e in eqs:
            assert e.residual < 1e-8
            assert e.probe_agrees in (True, None)


def test_roots_sit_in_sign_change_cells(planes):
    for (case, phase), (surf, eqs) in planes.items():
        cells = surf.sign_change_cells()
        assert all(e.seed_cell in cells for e in eqs)
        dd, dv = surf.cell_size()
        for e in eqs:
            # within one cell of some sign-change cell (cell centres, delta modulo 2 pi)
            near = min(
                max(abs(math.remainder(e.delta - 0.5 * (surf.delta_axis[c] + surf.delta_axis[c + 1]), 2 * math.pi)) / dd,
                    abs(e.v_mag - 0.5 * (surf.v_axis[r] + surf.v_axis[r + 1])) / dv)
                for r, c in cells
            )
            assert near <= 1.5


def test_zero_contours_exist(planes):
    surf, _ = planes["case3", "fault"]
    for which in ("ddelta", "dv"):
        pts = surf.zero_contour(which)
        assert pts.ndim == 2 and pts.shape[1] == 2 and len(pts) > 0


def test_plane_distance_wraps():
    assert plane_distance((math.pi - 0.01, 1.0), (-math.pi + 0.01, 1.0)) == pytest.approx(0.02, abs=1e-12)


def test_equilibrium_record():
    e = Equilibrium(0.1, 0.9, Kind.STABLE, (-1 + 0j, -2 + 0j), 1e-12)
    rec = e.as_record()
    assert rec["kind"] == "Stable" and rec["eigs"] == [[-1.0, 0.0], [-2.0, 0.0]]


# -- limit cycles ------------------------------------------------------------


def test_harmonic_oscillator_period():
    cyc = detect_limit_cycle(lambda t, y: np.array([y[1], -y[0]]), [1.0, 0.0], section=CoordinateSection(1, 0.0, "falling"),
                             t_max=40.0, chunk=10.0, return_index=0, return_tol=1e-6)
    assert isinstance(cyc, LimitCycle)
    assert cyc.period == pytest.approx(2 * math.pi, abs=1e-6)
    assert cyc.convergence_ratio < 1e-6
    assert cyc.state_at(0.0) == pytest.approx(cyc.state_at(cyc.period), abs=1e-6)


def test_winding_orbit_period():
    # delta' = 2 - cos(delta): one turn takes 2 pi / sqrt(3)
    cyc = detect_limit_cycle(lambda t, y: np.array([1.0 - y[0], 2.0 - math.cos(y[1])]), [1.0, 0.0],
                             section=WindingSection(1), t_max=30.0, chunk=5.0)
    assert isinstance(cyc, LimitCycle)
    assert cyc.period == pytest.approx(2 * math.pi / math.sqrt(3), rel=1e-6)


def test_case1_fault_settles_on_equilibrium():
    rates = PlaneRates(builtin("case1").plane_model(P, "fault"))
    out = detect_limit_cycle(rates.rhs, [0.2071, 1.0005], section=WindingSection(0), t_max=60.0, chunk=10.0, return_index=1)
    assert isinstance(out, CycleFailure) and out.reason == "equilibrium"
    assert out.y_final[1] == pytest.approx(0.941, abs=2e-3)


def test_collapse_is_reported_as_divergence():
    out = detect_limit_cycle(lambda t, y: np.array([y[0] ** 2]), [1.0], section=CoordinateSection(0, 5.0), t_max=5.0)
    assert isinstance(out, CycleFailure) and out.reason == "divergence"


def test_case3_quasi_static_cycle():
    from uvoc_tsa.reduced import CurrentModel
    from uvoc_tsa.simulate import fault_limit_cycle

    fc = fault_limit_cycle(P, builtin("case3"), CurrentModel.QUASI_STATIC)
    assert fc.cycle is not None and fc.fsm is not None and fc.fsm.x_f == 1
    assert 0.2 < fc.period < 0.5
    assert fc.cycle.convergence_ratio < 1e-3


# -- sweeps ------------------------------------------------------------------


def _degenerate_cycle(x_eq):
    traj = integrate(lambda t, y: np.zeros(2), x_eq, (0.0, 1.0))
    return LimitCycle(1.0, 0.0, [1.0, 1.0, 1.0], 0.0, np.array([0.0, 1.0]), np.array([x_eq, x_eq]), traj)


def _post_fault_case1(y):
    rates = PlaneRates(builtin("case1").plane_model(SystemParams(), "pre"))
    tr = integrate(rates.rhs, y, (0.0, 20.0))
    return tr.y_final, "success"


def test_degenerate_sweep_converges():
    _, eqs = phase_plane(P, builtin("case1"), "pre", resolution=64)
    a = next(e for e in eqs if e.kind is Kind.STABLE)
    rep = clearing_sweep(_degenerate_cycle(np.array([a.delta, a.v_mag])), _post_fault_case1, lambda y: (y[0], y[1]),
                         (a.delta, a.v_mag), m=6, workers=1)
    assert rep.all_converged and rep.n_converged == 6
    with pytest.raises(ValueError):
        clearing_sweep(_degenerate_cycle(np.array([a.delta, a.v_mag])), _post_fault_case1, lambda y: (y[0], y[1]),
                       (a.delta, a.v_mag), m=3)


def test_sweep_is_order_and_worker_independent():
    _, eqs = phase_plane(P, builtin("case1"), "pre", resolution=64)
    a = next(e for e in eqs if e.kind is Kind.STABLE)
    traj = integrate(lambda t, y: np.array([0.3 * math.cos(2 * math.pi * t), 0.05 * math.sin(2 * math.pi * t)]),
                     [a.delta, a.v_mag], (0.0, 1.0))
    cyc = LimitCycle(1.0, 0.0, [1.0], 0.0, traj.t, traj.y, traj)
    args = (_post_fault_case1, lambda y: (float(y[0]), float(y[1])), (a.delta, a.v_mag))
    one = clearing_sweep(cyc, *args, m=8, workers=1)
    two = clearing_sweep(cyc, *args, m=8, workers=2)
    assert one.as_record() == two.as_record()
    assert one.n_converged == 8


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("UVOC_TSA_THREADS", "2")
    assert worker_count(8) == 2 and worker_count(1) == 1
    monkeypatch.setenv("UVOC_TSA_THREADS", "zero")
    with pytest.raises(ValueError):
        worker_count(4)
    monkeypatch.delenv("UVOC_TSA_THREADS")
    assert parallel_map(abs, [-1, 2, -3], workers=1) == [1, 2, 3]


def test_droop_comparison_has_critical_clearing():
    d = DroopComparison()
    assert d.stable_equilibrium()[0] == pytest.approx(math.asin(0.8 * 0.52))
    rep = d.sweep(12, workers=1)
    assert rep.n_converged < 12
    assert rep.n_converged >= 1
