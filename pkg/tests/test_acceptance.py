"""Acceptance criteria 1-9, one test each.

Every test records a single ``CRITERION n: PASS|FAIL - ...`` line; the lines
are printed in the pytest terminal summary (and directly when this file is
run as a script).
"""

import contextlib
import math
import time

import numpy as np
import pytest

from roadwork import calib, delay, flow, geo, sweep, tiles
from roadwork.flow import FlowModelParams, WorkZoneCapacityInputs
from roadwork.status import SPEED_ORDER
from roadwork.status import TrafficStatus as S

from conftest import ACCEPTANCE_LINES, DATA
from oracles import engine_capacities, fifo_bottleneck, random_scenario


@contextlib.contextmanager
def criterion(n, title):
    info = {}
    try:
        yield info
    except BaseException as exc:
        line = f"CRITERION {n}: FAIL - {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        raise
    line = f"CRITERION {n}: PASS - {title}" + (f" ({info['detail']})" if info.get("detail") else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_criterion_1_workzone_capacity():
    with criterion(1, "work-zone capacity 1287 +-1 pcu/(h.ln)") as info:
        c = flow.workzone_capacity(WorkZoneCapacityInputs(1800, 1, 0.97, 0.96, 1, 0.8, 1, 0.96))
        info["detail"] = f"{c.per_lane:.2f}"
        assert abs(c.per_lane - 1287) <= 1


def _check_volumes(params, published):
    got = {}
    for u, v in published.items():
        got[u] = flow.invert_practical(u, params)
        assert abs(got[u] - v) <= 0.03 * v, f"{u} km/h -> {got[u]:.0f}, published {v}"
    return ", ".join(f"{u}->{got[u]:.0f}" for u in published)


def test_criterion_2_inner_ring_volumes():
    with criterion(2, "speed->volume inner ring within 3%") as info:
        params = FlowModelParams(1.05, 1.88, 4.90, 80, 1500)
        info["detail"] = _check_volumes(params, {62: 1170, 44: 1515, 18: 1695, 7: 1860})


def test_criterion_3_e60_volumes():
    with criterion(3, "speed->volume E60 within 3%") as info:
        params = FlowModelParams(1.0, 1.88, 4.90, 91, 1577)
        info["detail"] = _check_volumes(params, {57: 1453, 44: 1593, 33: 1687, 12: 1892})


def test_criterion_4_quantization():
    with criterion(4, "representative speeds within +-1 km/h") as info:
        details = []
        for name, v_max, expected in [("calibration_e60.csv", 90.0, (12, 33, 44, 57)),
                                      ("calibration_inner_ring.csv", 80.0, (7, 18, 44, 62))]:
            table = calib.build_table(calib.fit_status_gaussians(calib.read_samples(DATA / name)), v_max)
            reps = [calib.quantify(s, table) for s in SPEED_ORDER]
            for got, want in zip(reps, expected):
                assert abs(got - want) <= 1, f"{name}: {got:.2f} vs {want}"
            details.append("/".join(f"{r:.1f}" for r in reversed(reps)))
        info["detail"] = "E60 " + details[0] + ", inner ring " + details[1]


def test_criterion_5_delay_engine_oracle():
    with criterion(5, "delay engine vs per-vehicle FIFO oracle") as info:
        rng = np.random.default_rng(20180521)
        t0 = time.perf_counter()
        worst = 0.0
        n = 25
        for _ in range(n):
            sc, flags = random_scenario(rng)
            assert len(sc.demand) <= 200
            assert all(float(q * sc.t_d).is_integer() for q in sc.demand)
            r = delay.run_scenario(sc, flags)
            waits, _, _ = fifo_bottleneck(sc.demand, engine_capacities(sc, flags), sc.t_d)
            err = abs(r.queuing_total - waits) / waits if waits else abs(r.queuing_total)
            worst = max(worst, err)
            assert err <= 0.02, f"queuing delay {r.queuing_total:.3f} vs oracle {waits:.3f}"
            arrivals = math.fsum(q * sc.t_d for q in sc.demand)
            assert arrivals == math.fsum(s.served for s in r.steps) + r.final_queue, "conservation"
        elapsed = time.perf_counter() - t0
        info["detail"] = f"{n} scenarios, worst error {worst:.3%}, conservation exact, {elapsed:.2f} s"
        assert elapsed < 10


def test_criterion_6_inversion_round_trip():
    with criterion(6, "inversion round trip within 1e-6*u") as info:
        worst = 0.0
        rows = flow.expressway_presets()
        assert len(rows) == 4
        for p in rows.values():
            for u in np.linspace(0.1, 0.99, 100) * p.free_speed:
                v = flow.invert_practical(float(u), p)
                err = abs(flow.practical_speed(v / p.C, p) - u) / u
                worst = max(worst, err)
                assert err <= 1e-6, f"row U_s={p.U_s}: u={u}"
        info["detail"] = f"4 rows x 100 speeds, worst relative error {worst:.1e}"


def _in_night_window(minutes):
    # strictly inside 20:00-02:00, across midnight
    return minutes > 20 * 60 or minutes < 2 * 60


def test_criterion_7_optimizer_window():
    with criterion(7, "optimal window inside 20:00-02:00, argmin == exhaustive scan") as info:
        sf = delay.load_scenario(DATA / "case_scenario.ini")
        sc = sf.scenario
        assert sc.T == 8
        spec = sweep.SweepSpec(sc.demand, sc.T, sc.t_d)
        res = sweep.sweep(spec, sc)

        q = sweep.periodic_baseline_queue(spec, sc)
        scan = {}
        for m in spec.candidates:
            s = int(round(m / (sc.t_d * 60)))
            scan[m] = sweep.run_daily(sc, sc.demand, s, sc.T, spec.tail_h, float(q[s])).added
        exhaustive_min = min(scan.values())
        assert res.minimum == exhaustive_min
        assert scan[res.best_start] == exhaustive_min
        assert all(_in_night_window(m) for m in res.window), res.window
        w = res.window
        info["detail"] = (f"best {w and res.best_start // 60:02d}:{res.best_start % 60:02d}, "
                          f"window {w[0] // 60:02d}:{w[0] % 60:02d}-{w[-1] // 60:02d}:{w[-1] % 60:02d}, "
                          f"{res.minimum:.0f} veh-h")


def test_criterion_8_collector_determinism(tmp_path):
    with criterion(8, "replay collection deterministic, four fixture statuses") as info:
        points = geo.read_point_net(DATA / "tiles" / "points.csv")
        template = "https://tiles.example.test/traffic?time={time}&level={zoom}&x={x}&y={y}"
        jobs = tiles.jobs_for_points(points, 19, template)
        stores = []
        for k in range(2):
            store = tiles.ObservationStore(tmp_path / f"run{k}", "replay")
            tiles.run_collector(jobs, tiles.ReplayTransport(DATA / "tiles"), store,
                                tiles.FakeClock(1527043432), duration=600)
            stores.append({p.name: p.read_bytes() for p in store.files()})
        assert stores[0] == stores[1] and stores[0]
        obs = tiles.read_observations(tmp_path / "run0")
        statuses = {o.point_id: o.status for o in obs}
        assert [statuses[f"fixture#{k}"] for k in range(4)] == [S.SMOOTH, S.SLOW, S.CONGESTED, S.SEVERE]
        # the pure palette colours under the default rules
        palette = {(0, 255, 0): S.SMOOTH, (255, 171, 0): S.SLOW, (225, 64, 64): S.CONGESTED,
                   (150, 40, 40): S.SEVERE}
        assert all(tiles.classify_rgb(*rgb) is s for rgb, s in palette.items())
        info["detail"] = f"{len(obs)} observations, byte-identical stores"


def test_criterion_9_property_suites():
    import test_calib
    import test_delay
    import test_flow
    import test_geo
    import test_sweep

    suites = [
        test_geo.test_round_trip_within_half_pixel,
        test_geo.test_discretization_spacing_and_count,
        test_calib.test_boundary_between_means,
        test_calib.test_equal_std_symmetry,
        test_flow.test_capacity_monotone_in_each_factor,
        test_delay.test_capacity_monotonicity,
        test_delay.test_non_negativity_and_conservation,
        test_delay.test_demand_monotonicity,
        test_sweep.test_flat_profile_is_symmetric,
    ]
    with criterion(9, "property suites") as info:
        for prop in suites:
            prop()
        info["detail"] = f"{len(suites)} hypothesis suites"


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
