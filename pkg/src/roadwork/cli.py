"""Command-line entry point: ``roadwork <subcommand> ...``.

Every flag can also be set through an environment variable named
``ROADWORK_<FLAG>`` (upper case, dashes as underscores), e.g.
``ROADWORK_SPACING=50``. Explicit flags win over the environment.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from pathlib import Path

from roadwork import calib, delay, flow, geo, sweep, tiles
from roadwork.errors import ConfigError, InputError, RoadworkError

log = logging.getLogger("roadwork")

ENV_PREFIX = "ROADWORK_"
EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3, 4


def _env(flag, default=None):
    return os.environ.get(ENV_PREFIX + flag.lstrip("-").replace("-", "_").upper(), default)


def _add(p, flag, **kw):
    """add_argument whose default comes from the environment when set."""
    kw["default"] = _env(flag, kw.get("default"))
    if kw.get("required") and kw["default"] is not None:
        kw["required"] = False
    p.add_argument(flag, **kw)


# --- subcommands ---------------------------------------------------------------

def cmd_discretize(args):
    roads = geo.read_roads(args.roads)
    points = geo.build_point_net(roads, float(args.spacing))
    geo.write_point_net(points, args.out)
    print(f"{len(points)} points from {len(roads)} road(s) -> {args.out}")


def _collect_settings(args):
    settings = {}
    base = Path.cwd()
    if args.config:
        cp = configparser.ConfigParser(interpolation=None)
        if not cp.read(args.config, encoding="utf-8"):
            raise ConfigError(f"cannot read config {args.config}")
        if not cp.has_section("collect"):
            raise ConfigError(f"{args.config}: missing [collect] section")
        settings.update(cp["collect"])
        base = Path(args.config).resolve().parent
    for key in ("points", "url_template", "zoom", "radius", "tau", "replay_dir", "start_time",
                "deployment", "profile", "min_gap"):
        if _env(key) is not None:
            settings[key] = _env(key)
    for key in ("period", "transport"):
        if getattr(args, key) is not None:
            settings[key] = getattr(args, key)

    def path(key):
        if key not in settings:
            raise ConfigError(f"collect: {key} is not configured")
        p = Path(settings[key])
        return p if p.is_absolute() else base / p

    return settings, path


def cmd_collect(args):
    settings, path = _collect_settings(args)
    template = settings.get("url_template")
    if not template:
        raise ConfigError("collect: url_template is not configured")
    transport_kind = settings.get("transport", "live")
    try:
        zoom = int(settings.get("zoom", 19))
        period = float(settings.get("period", tiles.DEFAULT_PERIOD))
        radius = int(settings.get("radius", tiles.DEFAULT_RADIUS))
        rules = tiles.ClassifierRules(tau=int(settings.get("tau", 8)))
    except ValueError as exc:
        raise ConfigError(f"collect: {exc}") from None
    profile = geo.get_profile(settings.get("profile"))
    points = geo.read_point_net(path("points"))
    jobs = tiles.jobs_for_points(points, zoom, template, period, profile)

    if transport_kind == "replay":
        transport = tiles.ReplayTransport(path("replay_dir"))
        clock = tiles.FakeClock(float(settings.get("start_time", 0)))
    elif transport_kind == "live":
        transport = tiles.HttpTransport(min_gap=float(settings.get("min_gap", 0.05)))
        clock = tiles.SystemClock()
    else:
        raise ConfigError(f"unknown transport {transport_kind!r} (live or replay)")
    if transport_kind == "replay" and args.duration is None:
        raise ConfigError("replay collection needs --duration")

    store = tiles.ObservationStore(args.out, settings.get("deployment", "roadwork"))
    collector = tiles.Collector(jobs, transport, store, clock, rules, radius)
    duration = None if args.duration is None else float(args.duration)
    try:
        n = collector.run(duration)
    except KeyboardInterrupt:
        collector.stop()
        n = None
    print(f"{n if n is not None else 'interrupted;'} observations for {len(jobs)} point(s) -> {args.out}")


def cmd_calibrate(args):
    samples = calib.read_samples(args.samples)
    gaussians = calib.fit_status_gaussians(samples)
    if args.v_max is not None:
        v_max = float(args.v_max)
    elif args.design_speed is not None:
        v_max = calib.default_v_max(float(args.design_speed), (s.speed for s in samples))
    else:
        v_max = max(s.speed for s in samples)
    table = calib.build_table(gaussians, v_max)
    calib.write_table(table, args.out)
    for r in table.rows:
        print(f"{r.status.value:>9}  {r.lo:5.1f}-{r.hi:5.1f} km/h  rep {r.rep:5.1f}")


def cmd_convert(args):
    table = calib.read_table(args.table)
    params = flow.load_model_params(args.model)
    obs = tiles.read_observations(args.store)
    profile = tiles.aggregate_daily_profile(
        obs, int(args.bin), table, args.point_id, int(float(args.utc_offset_h) * 3600)
    )
    if profile.missing.any():
        log.warning("%d of %d bins have no data; interpolated", profile.missing.sum(), profile.n_bins)
    model = flow.SpeedToVolume(params.alpha1, params.alpha2, params.alpha3, params.U_s, params.C,
                               lanes=int(args.lanes)).fit()
    demand = model.transform(profile.filled())
    delay.write_demand(demand, args.out)
    print(f"{len(demand)} bins over {profile.days} day(s); demand "
          f"{demand.min():.0f}-{demand.max():.0f} pcu/h -> {args.out}")


def cmd_delay(args):
    sf = delay.load_scenario(args.scenario)
    sc = sf.scenario
    if sf.periodic:
        result = sweep.run_daily(sc, sc.demand, sf.start_step, sc.T)
    else:
        flags = delay.window_flags(len(sc.demand), sf.start_step, sc.work_steps)
        result = delay.run_scenario(sc, flags)
    if args.out:
        delay.write_result(result, args.out)
    print(f"total {result.total:.1f} veh-h, baseline {result.baseline_total:.1f} veh-h, "
          f"added {result.added:.1f} veh-h")


def cmd_optimize(args):
    sf = delay.load_scenario(args.scenario)
    sc = sf.scenario
    if not sf.periodic:
        raise ConfigError(f"{args.scenario}: optimize needs a periodic daily demand profile")
    grid = int(args.grid_min)
    spec = sweep.SweepSpec(sc.demand, sc.T, sc.t_d, tuple(range(0, sweep.DAY_MIN, grid)),
                           None if args.tie_tol is None else float(args.tie_tol))
    result = sweep.sweep(spec, sc)
    sweep.emit_curve(result, args.out)
    win = result.window
    print(f"best start {_hhmm(result.best_start)}, added delay {result.minimum:.0f} veh-h; "
          f"optimal window {_hhmm(win[0])}-{_hhmm(win[-1])} -> {args.out}")


def _hhmm(minutes):
    return f"{int(minutes) // 60:02d}:{int(minutes) % 60:02d}"


# --- parser ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="roadwork", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default=_env("log-level", "WARNING"))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discretize", help="road polylines -> point-net CSV")
    p.add_argument("roads")
    _add(p, "--spacing", type=float, default=50.0)
    _add(p, "--out", required=True)
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("collect", help="poll tiles for every point and store observations")
    _add(p, "--config")
    _add(p, "--period", type=float)
    _add(p, "--duration", type=float, help="seconds; omit for continuous live collection")
    _add(p, "--transport", choices=["live", "replay"])
    _add(p, "--out", required=True, help="observation store directory")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("calibrate", help="speed/status samples -> quantization table")
    p.add_argument("samples")
    _add(p, "--v-max", type=float)
    _add(p, "--design-speed", type=float)
    _add(p, "--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("convert", help="observation store -> daily demand profile")
    p.add_argument("store")
    _add(p, "--table", required=True)
    _add(p, "--model", required=True)
    _add(p, "--lanes", type=int, default=1)
    _add(p, "--bin", type=int, default=300, help="profile bin in seconds")
    _add(p, "--point-id")
    _add(p, "--utc-offset-h", type=float, default=0.0)
    _add(p, "--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("delay", help="delay for the scenario's configured start")
    p.add_argument("scenario")
    _add(p, "--out")
    p.set_defaults(func=cmd_delay)

    p = sub.add_parser("optimize", help="sweep start times and write the delay curve")
    p.add_argument("scenario")
    _add(p, "--grid-min", type=int, default=15)
    _add(p, "--tie-tol", type=float, help="vehicle-hours; default 1%% of the minimum")
    _add(p, "--out", required=True)
    p.set_defaults(func=cmd_optimize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=str(args.log_level).upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RoadworkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
