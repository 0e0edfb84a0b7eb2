import csv

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from roadwork import delay, sweep
from roadwork.delay import WorkZoneScenario
from roadwork.errors import InputError

from conftest import DATA

HOURLY = WorkZoneScenario(V1=80, V2=40, a1=1.5, a2=1.0, L=1.0, T=4, capacity=1800,
                          normal_capacity=3600, t_d=1.0)


def hourly_spec(demand, duration=4, **kw):
    kw.setdefault("tail_h", 24)
    return sweep.SweepSpec(tuple(demand), duration, 1.0, tuple(range(0, 1440, 60)), **kw)


def exhaustive(spec, scenario):
    """Reference scan: one independent run per candidate, minimum by plain comparison."""
    q = sweep.periodic_baseline_queue(spec, scenario)
    best, best_m = None, None
    values = {}
    for m in spec.candidates:
        s = int(round(m / (spec.t_d * 60)))
        r = sweep.run_daily(scenario, spec.demand, s, spec.duration_h, spec.tail_h, float(q[s]))
        values[m] = r.added
        if best is None or r.added < best:
            best, best_m = r.added, m
    return best, best_m, values


TWO_PEAKS = [800] * 6 + [2600, 3000, 2800, 2000] + [1800] * 6 + [2700, 3000, 2600] + [1200] * 5


def test_two_peak_day_prefers_the_night():
    spec = hourly_spec(TWO_PEAKS)
    res = sweep.sweep(spec, HOURLY)
    best, best_m, values = exhaustive(spec, HOURLY)
    assert res.minimum == best and res.best_start == best_m
    assert [p.added for p in res.curve] == [values[m] for m in spec.candidates]
    # a 4 h job avoids both peaks only when it starts late evening or overnight
    assert res.best_start in range(20 * 60, 24 * 60) or res.best_start < 3 * 60
    assert all(res.minimum <= p.added for p in res.curve)


def test_window_contains_best_and_respects_tolerance():
    spec = hourly_spec(TWO_PEAKS, tie_tol=50.0)
    res = sweep.sweep(spec, HOURLY)
    assert res.best_start in res.window
    by_start = {p.start_min: p.added for p in res.curve}
    assert all(by_start[m] <= res.minimum + 50.0 for m in res.window)
    assert res.tolerance == 50.0


def test_window_wraps_midnight():
    curve = [sweep.CurvePoint(m, v) for m, v in zip(range(0, 1440, 360), [1.0, 9.0, 9.0, 1.005])]
    idx = sweep._optimal_window(curve, 0, 0.01, cyclic=True)
    assert [curve[i].start_min for i in idx] == [1080, 0]
    assert sweep._optimal_window(curve, 0, 0.01, cyclic=False) == [0]


def test_default_tolerance_is_one_percent():
    res = sweep.sweep(hourly_spec(TWO_PEAKS), HOURLY)
    assert res.tolerance == pytest.approx(0.01 * res.minimum)


def test_concurrent_sweep_is_identical():
    spec = hourly_spec(TWO_PEAKS)
    assert sweep.sweep(spec, HOURLY, workers=4) == sweep.sweep(spec, HOURLY)


def test_failed_candidates_are_reported(tmp_path):
    # a tail too short for the queue to clear fails every start in the peak
    spec = hourly_spec(TWO_PEAKS, tail_h=1)
    res = sweep.sweep(spec, HOURLY)
    failed = [p for p in res.curve if p.added is None]
    assert failed and all("horizon" in p.error for p in failed)
    sweep.emit_curve(res, tmp_path / "c.csv")
    rows = list(csv.DictReader(open(tmp_path / "c.csv")))
    assert any(r["added_delay_veh_h"] == "" and r["note"] for r in rows)


def test_emit_curve(tmp_path):
    res = sweep.sweep(hourly_spec(TWO_PEAKS), HOURLY)
    sweep.emit_curve(res, tmp_path / "c.csv")
    with open(tmp_path / "c.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == sweep.CURVE_HEADER
    assert [r[0] for r in rows[1:4]] == ["00:00", "01:00", "02:00"]
    assert float(rows[1][1]) == res.curve[0].added  # full precision
    assert sum(int(r[2]) for r in rows[1:]) == len(res.window)


def test_spec_validation():
    with pytest.raises(InputError):
        sweep.SweepSpec((1.0,) * 23, 4, 1.0)
    with pytest.raises(InputError):
        sweep.SweepSpec((1.0,) * 24, 25, 1.0)
    with pytest.raises(InputError):
        sweep.SweepSpec((1.0,) * 24, 4, 1.0, (30,))
    assert sweep.SweepSpec((1.0,) * 96, 8, 0.25).candidates == tuple(range(0, 1440, 15))


def test_overloaded_day_is_rejected():
    with pytest.raises(InputError):
        sweep.sweep(hourly_spec([4000] * 24), HOURLY)


def test_case_profile_frozen():
    sf = delay.load_scenario(DATA / "case_scenario.ini")
    sc = sf.scenario
    r = sweep.run_daily(sc, sc.demand, sf.start_step, sc.T)
    assert r.total == pytest.approx(163475.27582815007, rel=1e-9)
    assert r.baseline_total == pytest.approx(23343.540018816188, rel=1e-9)
    assert r.added == pytest.approx(140131.73580933388, rel=1e-9)


def test_estimator_shape():
    opt = sweep.StartTimeOptimizer(HOURLY, duration_h=4, grid_min=60, tail_h=24).fit(TWO_PEAKS)
    res = sweep.sweep(hourly_spec(TWO_PEAKS), HOURLY)
    assert opt.best_start_ == res.best_start and opt.window_ == res.window
    assert opt.curve_.shape == (24, 2)
    assert opt.score() == -res.minimum
    assert opt.get_params()["duration_h"] == 4
    with pytest.raises(InputError):
        sweep.StartTimeOptimizer().fit(TWO_PEAKS)


# --- properties ---------------------------------------------------------------------------

demand_days = st.lists(st.floats(0, 3400), min_size=24, max_size=24).filter(
    lambda d: sum(d) < 0.9 * 24 * 3600)


@settings(max_examples=30, deadline=None)
@given(demand_days, st.integers(1, 8))
def test_argmin_is_exact(demand, duration):
    spec = hourly_spec(demand, duration, tail_h=48)
    res = sweep.sweep(spec, HOURLY)
    valid = [p.added for p in res.curve if p.added is not None]
    assert res.minimum == min(valid)
    assert all(res.minimum <= v for v in valid)
    assert res.best_start in res.window


@settings(max_examples=30, deadline=None)
@given(demand_days, st.integers(1, 23))
def test_shift_moves_argmin(demand, shift):
    spec = hourly_spec(demand, tail_h=48)
    shifted = hourly_spec(demand[-shift:] + demand[:-shift], tail_h=48)
    a = sweep.sweep(spec, HOURLY)
    b = sweep.sweep(shifted, HOURLY)
    assume(all(p.added is not None for p in a.curve))
    vals = sorted(p.added for p in a.curve)
    assume(vals[1] - vals[0] > 1e-6 * max(1.0, abs(vals[0])))  # unique minimum
    assert b.best_start == (a.best_start + 60 * shift) % 1440
    rolled = np.roll([p.added for p in a.curve], shift)
    assert [p.added for p in b.curve] == pytest.approx(list(rolled), rel=1e-9, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 3400), st.integers(1, 12))
def test_flat_profile_is_symmetric(q, duration):
    # enough tail for the closure queue to drain at the spare normal capacity
    backlog = max(0.0, q - HOURLY.capacity) * duration
    tail = 2 + int(np.ceil(backlog / (HOURLY.normal_capacity - q)))
    res = sweep.sweep(hourly_spec([q] * 24, duration, tail_h=tail), HOURLY)
    values = [p.added for p in res.curve]
    assert values == pytest.approx([values[0]] * 24, rel=1e-12, abs=1e-12)
    assert len(res.window) == 24
