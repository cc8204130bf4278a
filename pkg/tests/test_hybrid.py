import math

import numpy as np
import pytest

from uvoc_tsa.controller import FaultFsmState, Setpoints
from uvoc_tsa.hybrid import FSM_DWELL, HybridSim, Toggles
from uvoc_tsa.params import GridThevenin, SystemParams
from uvoc_tsa.scenarios import builtin
from uvoc_tsa.simulate import simulate


class ToySim(HybridSim):
    """``v`` relaxes to ``v_th``; ``i`` ramps during a sag and decays while latched."""

    def make_rhs(self, fsm, grid, ramp_clear):
        def rhs(t, y):
            if fsm.x_f == 1:
                di = -5.0 * y[1]
            else:
                di = 5.0 if grid.v_th < 1.0 else 0.0
            return [10.0 * (grid.v_th - y[0]), di]

        return rhs

    def current_norm(self, t, y, fsm, grid):
        return abs(y[1])

    def vpoc_norm(self, t, y, fsm, grid):
        return y[0]

    def voltage_norm(self, y):
        return y[0]

    def thresholds(self):
        return 1.0, 0.9, 0.01

    def observe_state(self, t, y, fsm, grid):
        return {"v": y[0], "delta": 0.0, "i": y[1], "v_poc": y[0]}


NOMINAL, SAG = GridThevenin(v_th=1.0), GridThevenin(v_th=0.5)
SCHEDULE = [(0.0, NOMINAL), (0.1, SAG), (0.5, NOMINAL)]


def toy(fsm_enabled=True):
    return ToySim(SystemParams(), Setpoints(0.0), Toggles(True, fsm_enabled, False))


@pytest.fixture(scope="module")
def toy_run():
    return toy().run([1.0, 0.0], SCHEDULE, 1.0)


def test_switch_sequence(toy_run):
    res = toy_run
    assert res.status == "success"
    reasons = [s.reason for s in res.switches]
    assert reasons == ["start", "grid", "over-current", "dwell-end", "grid", "release", "dwell-end", "ramp-end"]
    t = {s.reason + str(k): s.t for k, s in enumerate(res.switches)}
    assert t["over-current2"] == pytest.approx(0.3, abs=1e-9)
    assert t["dwell-end3"] == pytest.approx(0.3 + FSM_DWELL, abs=1e-9)
    v05 = 0.5 + 0.5 * math.exp(-4.0)
    t_rel = 0.5 + math.log((1.0 - v05) / 0.1) / 10.0
    assert t["release5"] == pytest.approx(t_rel, abs=1e-8)
    assert t["ramp-end7"] == pytest.approx(t_rel + 0.05, abs=1e-8)


def test_fsm_history(toy_run):
    res = toy_run
    assert res.fsm_at(0.2) == FaultFsmState()
    assert res.fsm_at(0.4).x_f == 1
    rel = next(s.t for s in res.switches if s.reason == "release")
    assert res.fsm_at(rel + 0.025).x_r == pytest.approx(0.5, abs=1e-12)
    assert res.fsm_at(0.99) == FaultFsmState()
    assert res.grid_at(0.3) == SAG and res.grid_at(0.7) == NOMINAL
    assert res.n_latches() == 1


def test_table_columns(toy_run):
    tab = toy_run.table()
    assert set(tab) == {"t", "v", "delta", "i", "v_poc", "x_f", "x_r", "v_th"}
    assert np.all(np.diff(tab["t"]) >= 0)
    assert np.all((tab["x_r"] >= 0) & (tab["x_r"] <= 1))
    assert np.all(tab["x_r"][tab["x_f"] == 1] == 1.0)
    # the pre-switch copy of the latch instant still shows the unlatched state
    k = int(np.nonzero(np.isclose(tab["t"], 0.3, atol=1e-9))[0][0])
    assert tab["x_f"][k] == 0 and tab["x_f"][k + 1] == 1


def test_fsm_disabled_never_latches():
    res = toy(False).run([1.0, 0.0], SCHEDULE, 1.0)
    assert [s.reason for s in res.switches] == ["start", "grid", "grid"]
    assert res.state_at(0.5)[1] == pytest.approx(2.0, abs=1e-9)


def test_initially_latched_state():
    res = toy().run([1.0, 2.0], [(0.0, NOMINAL)], 0.2, fsm0=FaultFsmState.latched())
    assert res.switches[0].reason == "start"
    # current above the threshold keeps the latch until it decays below 1
    rel = next(s for s in res.switches if s.reason == "release")
    assert rel.t == pytest.approx(math.log(2.0) / 5.0, abs=1e-8)


def test_voltage_collapse_stops():
    res = toy(False).run([1.0, 0.0], [(0.0, GridThevenin(v_th=0.0))], 2.0)
    assert res.status == "voltage-collapse"
    assert res.traj.t_final == pytest.approx(math.log(100.0) / 10.0, abs=1e-8)


def test_schedule_must_be_ordered():
    with pytest.raises(ValueError):
        toy().run([1.0, 0.0], [(0.0, NOMINAL), (0.5, SAG), (0.2, NOMINAL)], 1.0)


def test_chatter_is_bounded_by_dwell():
    class Chatter(ToySim):
        # current drifts up when unlatched and down when latched: sits on the threshold
        def make_rhs(self, fsm, grid, ramp_clear):
            return lambda t, y: [0.0, -1.0 if fsm.x_f else 1.0]

    res = Chatter(SystemParams(), Setpoints(0.0), Toggles()).run([1.0, 0.99], [(0.0, NOMINAL)], 0.05)
    assert res.status == "success"
    times = [s.t for s in res.switches if s.reason in ("over-current", "release")]
    assert len(times) > 10
    assert np.min(np.diff(times)) >= FSM_DWELL * (1 - 1e-9)


@pytest.fixture(scope="module")
def protected(params=SystemParams()):
    return simulate(params, builtin("case2-protected"))


def test_protected_case_clamps_current(protected):
    res = protected.result
    assert protected.ok
    tab = res.table()
    fault = (tab["t"] > 0.7) & (tab["t"] < 3.0)
    assert np.all(tab["x_f"][fault] == 1)
    assert np.max(np.abs(tab["i"][fault] - 1.2)) < 0.05 * 1.2
    first = next(s for s in res.switches if s.reason == "over-current")
    assert 0.5 <= first.t < 0.52


def test_switch_records_are_time_ordered(protected):
    ts = [s.t for s in protected.result.switches]
    assert ts == sorted(ts)


def test_reruns_are_identical():
    a = simulate(SystemParams(), builtin("case1"))
    b = simulate(SystemParams(), builtin("case1"))
    assert np.array_equal(a.result.t, b.result.t) and np.array_equal(a.result.y, b.result.y)
