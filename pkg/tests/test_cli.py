import csv
import shutil

import pytest

from roadwork import cli, delay, geo
from roadwork.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_OK

from conftest import DATA


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_pipeline(tmp_path, capsys):
    assert run("discretize", DATA / "sample_roads.csv", "--out", tmp_path / "net.csv") == EXIT_OK
    assert len(geo.read_point_net(tmp_path / "net.csv")) == 27

    assert run("collect", "--config", DATA / "replay.ini", "--duration", 300,
               "--out", tmp_path / "store") == EXIT_OK
    assert "20 observations for 4 point(s)" in capsys.readouterr().out

    assert run("calibrate", DATA / "calibration_inner_ring.csv", "--v-max", 80,
               "--out", tmp_path / "table.csv") == EXIT_OK
    assert (tmp_path / "table.csv").read_text() == (DATA / "table_inner_ring.csv").read_text()

    assert run("convert", DATA / "week", "--table", tmp_path / "table.csv",
               "--model", DATA / "inner_ring_model.ini", "--lanes", 3,
               "--out", tmp_path / "demand.csv") == EXIT_OK
    demand = delay.read_demand(tmp_path / "demand.csv")
    assert demand == pytest.approx(delay.read_demand(DATA / "case_demand.csv"), rel=1e-12)

    shutil.copy(DATA / "case_scenario.ini", tmp_path / "scenario.ini")
    shutil.copy(tmp_path / "demand.csv", tmp_path / "case_demand.csv")
    assert run("delay", tmp_path / "scenario.ini", "--out", tmp_path / "steps.csv") == EXIT_OK
    assert "added 140131.7 veh-h" in capsys.readouterr().out

    assert run("optimize", tmp_path / "scenario.ini", "--out", tmp_path / "curve.csv") == EXIT_OK
    out = capsys.readouterr().out
    assert "best start 22:00" in out and "window 21:45-22:00" in out
    rows = list(csv.DictReader(open(tmp_path / "curve.csv")))
    assert len(rows) == 96 and {r["start_hhmm"] for r in rows if r["is_optimal"] == "1"} == {"21:45", "22:00"}


def test_identical_inputs_identical_outputs(tmp_path):
    for k in (1, 2):
        assert run("collect", "--config", DATA / "replay.ini", "--duration", 180,
                   "--out", tmp_path / f"s{k}") == EXIT_OK
    a = sorted(p.name for p in (tmp_path / "s1").iterdir())
    assert a == sorted(p.name for p in (tmp_path / "s2").iterdir())
    for name in a:
        assert (tmp_path / "s1" / name).read_bytes() == (tmp_path / "s2" / name).read_bytes()


def test_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv("ROADWORK_SPACING", "100")
    monkeypatch.setenv("ROADWORK_OUT", str(tmp_path / "net.csv"))
    assert run("discretize", DATA / "sample_roads.csv") == EXIT_OK
    assert len(geo.read_point_net(tmp_path / "net.csv")) == 15
    # an explicit flag wins
    assert run("discretize", DATA / "sample_roads.csv", "--spacing", 50) == EXIT_OK
    assert len(geo.read_point_net(tmp_path / "net.csv")) == 27


def test_exit_codes(tmp_path, capsys):
    assert run("delay", tmp_path / "missing.ini") == EXIT_CONFIG
    assert run("optimize", DATA / "overload_scenario.ini", "--out", tmp_path / "c.csv") == EXIT_CONFIG
    assert run("collect", "--out", tmp_path / "s") == EXIT_CONFIG
    assert run("collect", "--config", DATA / "replay.ini", "--out", tmp_path / "s") == EXIT_CONFIG
    (tmp_path / "bad.csv").write_text("speed_kmh,status\n10,smooth\n")
    assert run("calibrate", tmp_path / "bad.csv", "--out", tmp_path / "t.csv") == EXIT_INPUT
    assert run("discretize", tmp_path / "nope.csv", "--out", tmp_path / "n.csv") == EXIT_INPUT
    err = capsys.readouterr().err
    assert "config error" in err and "input error" in err


def test_horizon_error_is_runtime(tmp_path):
    (tmp_path / "d.csv").write_text("step_index,Q_pcu_per_h\n0,2400\n1,2400\n")
    (tmp_path / "s.ini").write_text(
        "[scenario]\nV1=60\nV2=40\na1=1\na2=1\nL=1\nT=0.5\nt_d=0.5\n"
        "capacity=1200\nnormal_capacity=2400\ndemand=d.csv\n")
    assert run("delay", tmp_path / "s.ini") == cli.EXIT_RUNTIME
