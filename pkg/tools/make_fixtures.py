"""Regenerate the bundled fixtures under src/roadwork/data.

Run from the repository root:  python tools/make_fixtures.py
Everything is seeded, so the output is byte-for-byte reproducible.
"""

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from roadwork import calib, delay, flow, geo, tiles
from roadwork.status import SPEED_ORDER, TrafficStatus

DATA = Path(__file__).resolve().parents[1] / "src" / "roadwork" / "data"

# (mean, std) per status, slowest first; stds put the density crossings near
# the published range boundaries
E60 = {"means": (12, 33, 44, 57), "stds": (5.1, 8.2, 6.2, 4.2)}
INNER_RING = {"means": (7, 18, 44, 62), "stds": (2.0, 4.4, 5.2, 11.5)}

REPLAY_TEMPLATE = "https://tiles.example.test/traffic?time={time}&level={zoom}&x={x}&y={y}"
FIXTURE_COLOURS = {
    TrafficStatus.SMOOTH: (0, 255, 0),
    TrafficStatus.SLOW: (250, 160, 0),
    TrafficStatus.CONGESTED: (210, 60, 60),
    TrafficStatus.SEVERE: (150, 40, 40),
}
WEEK_START = 1526860800  # 2018-05-21 00:00 UTC
WEEK_PERIOD = 300


def write_samples(path, spec, n=400, seed=0):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(calib.SAMPLES_HEADER)
        for status, m, s in zip(SPEED_ORDER, spec["means"], spec["stds"]):
            for v in rng.normal(m, s, n):
                w.writerow([f"{max(v, 0.0):.2f}", status.value])


def write_tiles():
    out = DATA / "tiles"
    out.mkdir(exist_ok=True)
    for p in out.glob("*.png"):
        p.unlink()
    zoom = 19
    points = []
    manifest = {}
    for k, (status, colour) in enumerate(FIXTURE_COLOURS.items()):
        p = geo.GeoPoint(31.2304, 121.4737 + 0.002 * k)
        t = geo.geo_to_tile(p, zoom)
        points.append(geo.NetPoint(f"fixture#{k}", p.lat, p.lng, "fixture", 0.002 * k))
        # stroke drawn at 4x and downsampled so its edges are anti-aliased;
        # the last point sits 2 px off the stroke to exercise the neighbourhood search
        shift = 2 if k == 3 else 0
        big = Image.new("RGBA", (1024, 1024), (0, 0, 0, 0))
        d = ImageDraw.Draw(big)
        cx, cy = t.offset_x * 4 + 2, (t.offset_y + shift) * 4 + 2
        slope = 80 / 1024
        d.line([(0, cy - slope * cx), (1023, cy + slope * (1023 - cx))], fill=colour + (255,), width=12)
        img = big.resize((256, 256), Image.LANCZOS)
        name = f"{t.x}_{t.y}_{zoom}.png"
        img.save(out / name, optimize=False)
        url = tiles.build_request(t, REPLAY_TEMPLATE, 0)
        manifest[tiles.normalize_request(url)] = name
    with open(out / "manifest.json", "w") as fh:
        json.dump({"template": REPLAY_TEMPLATE, "requests": manifest}, fh, indent=2, sort_keys=True)
    geo.write_point_net(points, out / "points.csv")


def week_status(rng, minute, day):
    h = minute / 60
    shift = day["shift"]
    if 7 + shift <= h < 9.5 + shift:
        return TrafficStatus.SEVERE if rng.random() < 0.15 else TrafficStatus.CONGESTED
    if 6.5 + shift <= h < 7 + shift or 9.5 + shift <= h < 10.5 + shift:
        return TrafficStatus.SLOW
    if 17 + shift <= h < 19 + shift:
        return TrafficStatus.SEVERE if rng.random() < 0.15 else TrafficStatus.CONGESTED
    if 16 + shift <= h < 17 + shift or 19 + shift <= h < 20.5 + shift:
        return TrafficStatus.SLOW
    if 10.5 <= h < 16 and rng.random() < 0.05:
        return TrafficStatus.SLOW
    return TrafficStatus.SMOOTH


def write_week():
    out = DATA / "week"
    out.mkdir(exist_ok=True)
    for p in out.glob("*.csv"):
        p.unlink()
    rng = np.random.default_rng(7)
    store = tiles.ObservationStore(out, deployment="case")
    colours = dict(FIXTURE_COLOURS)
    for d in range(7):
        day = {"shift": rng.integers(-2, 3) * WEEK_PERIOD / 3600}
        rows = []
        for minute in range(0, 1440, WEEK_PERIOD // 60):
            ts = WEEK_START + d * 86400 + minute * 60
            if rng.random() < 0.01:
                rows.append(tiles.Observation("case#0", ts, TrafficStatus.UNKNOWN, None,
                                              "error: recorded failure"))
                continue
            s = week_status(rng, minute, day)
            rows.append(tiles.Observation("case#0", ts, s, colours[s], ""))
        store.append(rows)


def write_case_study():
    table = calib.build_table(
        calib.fit_status_gaussians(calib.read_samples(DATA / "calibration_inner_ring.csv")), 80.0
    )
    calib.write_table(table, DATA / "table_inner_ring.csv")
    profile = tiles.aggregate_daily_profile(
        tiles.read_observations(DATA / "week"), WEEK_PERIOD, table
    )
    params = flow.FlowModelParams(1.05, 1.88, 4.90, 80, 1500)
    demand = [flow.invert_practical(u, params) * 3 for u in profile.filled()]
    delay.write_demand(demand, DATA / "case_demand.csv")


def write_overload():
    # 30 one-minute steps: 10 min of overload then light traffic
    demand = [1800.0] * 10 + [600.0] * 20
    delay.write_demand(demand, DATA / "overload_demand.csv")


def write_roads():
    with open(DATA / "sample_roads.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["road_id", "lat", "lng"])
        # a straight east-west road and an L-shaped ramp
        for lat, lng in [(31.2300, 121.4700), (31.2300, 121.4800)]:
            w.writerow(["ring", lat, lng])
        for lat, lng in [(31.2310, 121.4700), (31.2320, 121.4700), (31.2320, 121.4712)]:
            w.writerow(["ramp", lat, lng])


if __name__ == "__main__":
    write_samples(DATA / "calibration_e60.csv", E60, seed=60)
    write_samples(DATA / "calibration_inner_ring.csv", INNER_RING, seed=7)
    write_tiles()
    write_week()
    write_case_study()
    write_overload()
    write_roads()
