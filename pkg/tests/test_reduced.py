import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uvoc_tsa.controller import DegenerateVoltageError, FaultFsmState, Setpoints, gain_schedule
from uvoc_tsa.params import ControlParams, GridThevenin, SystemParams
from uvoc_tsa.reduced import (
    CurrentModel,
    Mode,
    ModelMode,
    NetworkAggregate,
    ReducedModel,
    SingularNetworkError,
    effective_virtual_impedance,
    feasibility_bound,
    mode_model,
    network_aggregate,
    quasi_static_pq_constrained,
    quasi_static_pq_unconstrained,
    rhs_constrained,
    rhs_current_dynamic,
    rhs_unconstrained,
    saturated_reference_dq,
    steady_state_current,
)

P = SystemParams()
V0 = P.v0
N = P.n


def _pq_from_current(v, d, i, n=N):
    vd, vq = v * np.cos(d), v * np.sin(d)
    return n * (vd * i.real + vq * i.imag), n * (vq * i.real - vd * i.imag)


def _random_points(seed, k=1000):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.1, 1.4, k) * V0, rng.uniform(-math.pi, math.pi, k)


@pytest.mark.parametrize("z", [0.52, 0.1])
def test_equivalence_unconstrained(z):
    grid = GridThevenin(v_th=0.7, z_th_mag=z)
    net = network_aggregate(P, grid, 0.0)
    v_th = grid.v_th * V0
    vs, ds = _random_points(1)
    p, q = quasi_static_pq_unconstrained(vs, ds, v_th, net, N)
    i = steady_state_current(vs, ds, v_th, net)
    p2, q2 = _pq_from_current(vs, ds, i)
    np.testing.assert_allclose(p, p2, rtol=1e-9, atol=1e-9 * np.max(np.abs(p2)))
    np.testing.assert_allclose(q, q2, rtol=1e-9, atol=1e-9 * np.max(np.abs(q2)))


@pytest.mark.parametrize("p0, q0", [(0.8, 0.0), (0.27, 0.96), (-0.3, 0.5)])
def test_equivalence_constrained(p0, q0):
    grid = GridThevenin(v_th=0.5, z_th_mag=0.1)
    net = network_aggregate(P, grid, 1.0, r0_active=True)
    sp = Setpoints.from_pu(P, p0, q0)
    v_th = grid.v_th * V0
    vs, ds = _random_points(2)
    p, q = quasi_static_pq_constrained(vs, ds, sp, v_th, net, P.r0, P.i_m, N)
    i0 = saturated_reference_dq(ds, sp, P.i_m)
    i = steady_state_current(vs, ds, v_th, net, P.r0, i0)
    p2, q2 = _pq_from_current(vs, ds, i)
    np.testing.assert_allclose(p, p2, rtol=1e-9, atol=1e-9 * np.max(np.abs(p2)))
    np.testing.assert_allclose(q, q2, rtol=1e-9, atol=1e-9 * np.max(np.abs(q2)))


def test_dynamic_currents_vanish_at_algebraic_state():
    grid = GridThevenin(v_th=0.6)
    net = network_aggregate(P, grid, 0.3, r0_active=True)
    sp = Setpoints.from_pu(P, 0.5, 0.2)
    vs, ds = _random_points(3, 200)
    for v, d in zip(vs, ds):
        i0 = saturated_reference_dq(d, sp, P.i_m)
        i = steady_state_current(v, d, grid.v_th * V0, net, P.r0, i0)
        did, diq = rhs_current_dynamic(v, d, i.real, i.imag, grid.v_th * V0, net, P.r0, i0)
        assert abs(did) + abs(diq) < 1e-9 * (abs(i) + 1) * net.r_e / net.l_e


def test_pq_examples():
    net = network_aggregate(P, GridThevenin(), 0.0)
    p, q = quasi_static_pq_unconstrained(V0, 0.0, V0, net, N)
    assert abs(p) < 1e-9 and abs(q) < 1e-9
    lossless = NetworkAggregate(0.0, 0.01, P.omega0)
    p, _ = quasi_static_pq_unconstrained(110.0, 0.3, 120.0, lossless, N)
    assert p == pytest.approx(N * 110 * 120 * math.sin(0.3) / lossless.x_e, rel=1e-12)
    with pytest.raises(SingularNetworkError):
        quasi_static_pq_unconstrained(1.0, 0.0, 1.0, NetworkAggregate(0.0, 0.0, P.omega0), N)


def test_constrained_pq_reductions():
    net = network_aggregate(P, GridThevenin(), 1.0, r0_active=True)
    sp = Setpoints.from_pu(P, 0.5, 0.0)
    v, d = 100.0, 0.4
    assert quasi_static_pq_constrained(v, d, sp, 60.0, net, 0.0, P.i_m, N) == pytest.approx(
        quasi_static_pq_unconstrained(v, d, 60.0, net, N), rel=1e-15)
    p, q = quasi_static_pq_constrained(v, d, sp, 60.0, net, P.r0, P.i_m, N)
    p_u, q_u = quasi_static_pq_unconstrained(v, d, 60.0, net, N)
    k = v * P.r0 * P.i_m / sp.s0 * N / (net.r_e**2 + net.x_e**2)
    assert p - p_u == pytest.approx(k * net.r_e * sp.p0, rel=1e-12)
    assert q - q_u == pytest.approx(k * net.x_e * sp.p0, rel=1e-12)
    with pytest.raises(ZeroDivisionError):
        quasi_static_pq_constrained(v, d, Setpoints(0.0), 60.0, net, P.r0, P.i_m, N)


def test_rhs_at_nominal_is_zero():
    sp = Setpoints(1000.0, 200.0)
    net = network_aggregate(P, GridThevenin(), 0.0)
    g = gain_schedule(FaultFsmState(), P, sp)
    # a current that delivers exactly (P0, Q0) at V0, delta = 0.2
    v, d = V0, 0.2
    i = (complex(sp.p0, sp.q0) / (N * v * np.exp(1j * d))).conjugate()
    out = rhs_unconstrained((v, d, i.real, i.imag), sp, V0, net, P, g)
    assert abs(out[0]) < 1e-9 and abs(out[1]) < 1e-12


def test_constrained_vdot_zero_at_scaled_setpoint():
    sp = Setpoints.from_pu(P, 0.3, 0.4)
    net = network_aggregate(P, GridThevenin(v_th=0.5), 1.0, r0_active=True)
    g = gain_schedule(FaultFsmState.latched(), P, sp)
    v, d = 80.0, 0.7
    q_target = N * v * P.i_m * sp.q0 / sp.s0
    p_any = 123.0
    i = (complex(p_any, q_target) / (N * v * np.exp(1j * d))).conjugate()
    out = rhs_constrained((v, d, i.real, i.imag), sp, 30.0, net, P, g)
    assert abs(out[0]) < 1e-9


@settings(max_examples=1000, deadline=None)
@given(st.floats(0.2, 1.3), st.floats(-math.pi, math.pi), st.floats(0.05, 0.9), st.floats(-0.5, 0.5))
def test_constrained_delta_structure(vpu, d, p0, q0):
    """Constrained ddelta equals the unconstrained form with P0 scaled by N V I_m / S0."""
    sp = Setpoints.from_pu(P, p0, q0)
    net = network_aggregate(P, GridThevenin(v_th=0.5), 1.0, r0_active=True)
    g = gain_schedule(FaultFsmState.latched(), P, sp)
    v = vpu * V0
    dc = rhs_constrained((v, d), sp, 0.5 * V0, net, P, g)[1]
    p, _ = quasi_static_pq_constrained(v, d, sp, 0.5 * V0, net, P.r0, P.i_m, N)
    scale = N * v * P.i_m / sp.s0
    ref = P.omega0 - net.omega_g + g.eta * (scale * sp.p0 - p) / (N * v**2)
    assert dc == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_saturated_reference_dq_example():
    sp = Setpoints(5000.0)
    assert saturated_reference_dq(0.0, sp, 25.0) == pytest.approx((25.0, 0.0))


def test_degenerate_voltage():
    sp = Setpoints(1000.0)
    net = network_aggregate(P, GridThevenin(), 0.0)
    with pytest.raises(DegenerateVoltageError):
        rhs_unconstrained((0.5, 0.0), sp, V0, net, P, gain_schedule(FaultFsmState(), P, sp))


def test_feasibility_bound_examples():
    assert feasibility_bound(0.5, 0.1, 1.2) == 0.62
    assert feasibility_bound(1.0, 0.0, 7.0) == 1.0
    assert feasibility_bound(0.6, 0.52, 1.2) == pytest.approx(1.224, abs=1e-12)
    phi = np.linspace(0, 2 * math.pi, 100001)
    assert np.max(np.abs(0.6 + 0.52 * 1.2 * np.exp(1j * phi))) == pytest.approx(1.224, rel=1e-9)
    with pytest.raises(ValueError):
        feasibility_bound(-0.1, 0.1, 1.0)


@settings(max_examples=1000, deadline=None)
@given(*(st.floats(0, 5) for _ in range(3)), st.floats(0, 1), st.integers(0, 2))
def test_feasibility_bound_monotone(a, b, c, eps, which):
    args = [a, b, c]
    bumped = list(args)
    bumped[which] += eps
    assert feasibility_bound(*bumped) >= feasibility_bound(*args)


def test_effective_virtual_impedance():
    r, l = effective_virtual_impedance(P, 0.0)
    w0, wb = P.omega0, P.control.omega_b
    k = w0 / wb
    assert r == pytest.approx(P.rv0 / (1 + k**2), rel=1e-12)
    # only the resistive branch's filter lag remains
    assert l * w0 == pytest.approx(-P.rv0 * k / (1 + k**2), rel=1e-12)
    r1, l1 = effective_virtual_impedance(P, 1.0)
    zv = (P.rv0 + 1j * w0 * P.lv0) / (1j * w0 / wb + 1)
    assert (r1, l1 * w0) == pytest.approx((zv.real, zv.imag), rel=1e-12)
    ideal = SystemParams(control=ControlParams(omega_b=1e15))
    r, l = effective_virtual_impedance(ideal, 0.4)
    assert r == pytest.approx(ideal.rv0, rel=1e-9) and l == pytest.approx(0.4 * ideal.lv0, rel=1e-9)


def test_network_includes_all_elements():
    grid = GridThevenin(z_th_mag=0.52)
    net = network_aggregate(P, grid, 1.0, r0_active=True)
    r_v, l_v = effective_virtual_impedance(P, 1.0)
    _, r_th, l_th = P.grid_si(grid)
    assert net.r_e == pytest.approx(r_v + P.r12 + r_th + P.r0)
    assert net.l_e == pytest.approx(l_v + P.l12 + l_th)


@pytest.mark.parametrize("mode", list(Mode))
def test_model_dispatch_matches_free_functions(mode):
    grid = GridThevenin(v_th=0.5, z_th_mag=0.1)
    sp = Setpoints.from_pu(P, 0.27, 0.0, 1.2)
    m = mode_model(P, grid, sp, ModelMode(mode), q0_boost=True)
    rng = np.random.default_rng(4)
    for v, d in zip(rng.uniform(0.3, 1.2, 50) * V0, rng.uniform(-3, 3, 50)):
        dv, dd = m.rates(v, d)
        if mode is Mode.CONSTRAINED:
            sp_eff = Setpoints(sp.p0, m.gains.q0)
            ref = rhs_constrained((v, d), sp_eff, grid.v_th * V0, m.net, P, m.gains)
        else:
            ref = rhs_unconstrained((v, d), sp, grid.v_th * V0, m.net, P, m.gains)
        assert (dv, dd) == pytest.approx(tuple(ref), rel=1e-9, abs=1e-9)


def test_reduced_model_dynamic_initial_state_is_stationary_in_current():
    grid = GridThevenin()
    sp = Setpoints.from_pu(P, 0.38)
    m = ReducedModel(P, grid, sp, current_model=CurrentModel.DYNAMIC)
    y = m.initial_currents(V0, 0.2)
    f = m.rhs(0.0, y)
    assert abs(f[2]) + abs(f[3]) < 1e-9 * abs(complex(y[2], y[3]))
    qs = ReducedModel(P, grid, sp)
    assert f[:2] == pytest.approx(qs.rhs(0.0, y[:2]), rel=1e-9)
