"""Traffic tile collection: request building, transports, colour recognition, storage.

A monitored point is reduced to a :class:`FetchJob` (tile + in-tile pixel +
request URL). The :class:`Collector` fires every job on its period, samples
the returned raster around the pixel, classifies the colour and appends one
:class:`Observation` per firing to an append-only CSV store.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from string import Formatter
from typing import Iterable, Protocol, Sequence
from urllib.parse import parse_qsl, urlencode, urlsplit, urlunsplit

import numpy as np
from PIL import Image, UnidentifiedImageError

from roadwork.calib import QuantizationTable, quantify
from roadwork.errors import ConfigError, InputError, StoreError, TransportError
from roadwork.geo import NetPoint, TileAddress, geo_to_tile, get_profile
from roadwork.status import TrafficStatus

logger = logging.getLogger(__name__)

OBSERVATION_HEADER = ["point_id", "timestamp_utc", "status", "r", "g", "b", "note"]
REQUIRED_PLACEHOLDERS = ("zoom", "x", "y", "time")
DEFAULT_PERIOD = 60.0
DEFAULT_RADIUS = 4

# sample endpoint of a commercial real-time traffic layer
BAIDU_TEMPLATE = (
    "http://its.map.baidu.com:8002/traffic/TrafficTileService"
    "?time={time}&label=web2D&v=016&level={zoom}&x={x}&y={y}"
)


# --- colour rules ------------------------------------------------------------

@dataclass(frozen=True)
class ClassifierRules:
    """Colour thresholds for one provider palette.

    ``tau`` is the tolerance for treating G and B as equal; anti-aliased
    strokes never hit exact equality. Pixels whose alpha is below
    ``min_alpha`` or whose chroma (max - min channel) is below ``min_chroma``
    are background.
    """

    tau: int = 8
    smooth_r_max: int = 240  # G != B: R <= this -> smooth, else slow
    congested_r_min: int = 200  # G == B: R >= this -> congested, else severe
    min_chroma: int = 40
    min_alpha: int = 128

    @classmethod
    def from_dict(cls, data: dict) -> "ClassifierRules":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown classifier rule keys: {sorted(unknown)}")
        return cls(**{k: int(v) for k, v in data.items()})

    @classmethod
    def load(cls, path) -> "ClassifierRules":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_RULES = ClassifierRules()


def is_background(r, g, b, a=255, rules: ClassifierRules = DEFAULT_RULES) -> bool:
    return a < rules.min_alpha or max(r, g, b) - min(r, g, b) < rules.min_chroma


def classify_rgb(r: int, g: int, b: int, rules: ClassifierRules = DEFAULT_RULES,
                 a: int = 255) -> TrafficStatus:
    r, g, b, a = int(r), int(g), int(b), int(a)
    if is_background(r, g, b, a, rules):
        return TrafficStatus.UNKNOWN
    if abs(g - b) > rules.tau:
        return TrafficStatus.SMOOTH if r <= rules.smooth_r_max else TrafficStatus.SLOW
    return TrafficStatus.CONGESTED if r >= rules.congested_r_min else TrafficStatus.SEVERE


# --- rasters -----------------------------------------------------------------

def decode_tile(data: bytes) -> np.ndarray:
    """Decode image bytes to an (H, W, 4) uint8 RGBA array."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGBA"))
    except (UnidentifiedImageError, OSError) as exc:
        raise InputError(f"undecodable tile image: {exc}") from None


def _spiral_offsets(radius: int):
    # nearest first; ties broken by row then column for determinism
    pts = [(dx, dy) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)
           if dx * dx + dy * dy <= radius * radius]
    return sorted(pts, key=lambda p: (p[0] ** 2 + p[1] ** 2, p[1], p[0]))


def sample_point(tile_image, offset: tuple[int, int], radius: int = DEFAULT_RADIUS,
                 rules: ClassifierRules = DEFAULT_RULES):
    """Status and RGB at ``offset`` (x, y), or at the nearest coloured pixel within ``radius``.

    ``tile_image`` may be raw bytes, a PIL image or an (H, W, 3|4) array.
    Returns ``(TrafficStatus.UNKNOWN, None)`` if nothing classifiable is found.
    """
    if isinstance(tile_image, (bytes, bytearray)):
        img = decode_tile(bytes(tile_image))
    elif isinstance(tile_image, Image.Image):
        img = np.asarray(tile_image.convert("RGBA"))
    else:
        img = np.asarray(tile_image)
    if img.ndim != 3 or img.shape[2] not in (3, 4):
        raise InputError(f"expected an (H, W, 3|4) raster, got shape {img.shape}")
    h, w = img.shape[:2]
    x0, y0 = int(offset[0]), int(offset[1])
    if not (0 <= x0 < w and 0 <= y0 < h):
        raise InputError(f"offset {offset} outside {w}x{h} image")
    if radius < 0:
        raise InputError("radius must be >= 0")
    has_alpha = img.shape[2] == 4
    for dx, dy in _spiral_offsets(int(radius)):
        x, y = x0 + dx, y0 + dy
        if not (0 <= x < w and 0 <= y < h):
            continue
        px = img[y, x]
        a = int(px[3]) if has_alpha else 255
        status = classify_rgb(px[0], px[1], px[2], rules, a)
        if status is not TrafficStatus.UNKNOWN:
            return status, (int(px[0]), int(px[1]), int(px[2]))
    return TrafficStatus.UNKNOWN, None


# --- requests ----------------------------------------------------------------

def _placeholders(template: str) -> set[str]:
    return {name for _, name, _, _ in Formatter().parse(template) if name}


def build_request(t: TileAddress, template: str, now: float) -> str:
    """Substitute ``{zoom}``, ``{x}``, ``{y}`` and ``{time}`` (epoch milliseconds)."""
    names = _placeholders(template)
    missing = [p for p in REQUIRED_PLACEHOLDERS if p not in names]
    if missing:
        raise ConfigError(f"URL template lacks placeholder(s): {', '.join('{' + m + '}' for m in missing)}")
    return template.format(zoom=t.zoom, x=t.x, y=t.y, time=int(round(now * 1000)))


@dataclass(frozen=True)
class FetchJob:
    point_id: str
    tile: TileAddress
    url: str  # template; the time field is filled in at each firing
    period: float = DEFAULT_PERIOD

    def __post_init__(self):
        if not self.period > 0:
            raise InputError(f"period must be positive, got {self.period}")
        names = _placeholders(self.url)
        missing = [p for p in REQUIRED_PLACEHOLDERS if p not in names]
        if missing:
            raise ConfigError(f"URL template lacks placeholder(s): {missing}")

    def request(self, now: float) -> str:
        return build_request(self.tile, self.url, now)


def jobs_for_points(points: Iterable[NetPoint], zoom: int, template: str,
                    period: float = DEFAULT_PERIOD, profile=None) -> list[FetchJob]:
    profile = get_profile(profile)
    return [FetchJob(p.point_id, geo_to_tile(p.geo, zoom, profile), template, period) for p in points]


# --- transports ----------------------------------------------------------------

class Transport(Protocol):
    def fetch(self, url: str) -> bytes: ...


def normalize_request(url: str, ignore=("time",)) -> str:
    """Drop volatile query parameters and sort the rest, for replay matching."""
    parts = urlsplit(url)
    query = sorted((k, v) for k, v in parse_qsl(parts.query, keep_blank_values=True) if k not in ignore)
    return urlunsplit((parts.scheme, parts.netloc, parts.path, urlencode(query), ""))


class ReplayTransport:
    """Serve recorded tiles from a directory with a ``manifest.json``.

    The manifest maps normalized request URLs (time parameter removed) to
    file names; a ``null`` file simulates a failing request.
    """

    def __init__(self, directory, ignore=("time",)):
        self.directory = Path(directory)
        self.ignore = tuple(ignore)
        manifest = self.directory / "manifest.json"
        try:
            with manifest.open(encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read replay manifest {manifest}: {exc}") from None
        self.requests = {normalize_request(k, self.ignore): v for k, v in data["requests"].items()}

    def fetch(self, url: str) -> bytes:
        key = normalize_request(url, self.ignore)
        if key not in self.requests:
            raise TransportError(f"no recorded tile for {key}")
        name = self.requests[key]
        if name is None:
            raise TransportError(f"recorded failure for {key}")
        return (self.directory / name).read_bytes()


class HttpTransport:
    """Plain HTTP GET with a minimum gap between requests to the same host."""

    def __init__(self, min_gap: float = 0.05, timeout: float = 10.0, headers=None, session=None):
        import requests

        self.min_gap = min_gap
        self.timeout = timeout
        self.session = session or requests.Session()
        if headers:
            self.session.headers.update(headers)
        self._last: dict[str, float] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _wait_turn(self, host):
        with self._guard:
            lock = self._locks.setdefault(host, threading.Lock())
        with lock:
            gap = self._last.get(host, -math.inf) + self.min_gap - time.monotonic()
            if gap > 0:
                time.sleep(gap)
            self._last[host] = time.monotonic()

    def fetch(self, url: str) -> bytes:
        import requests

        self._wait_turn(urlsplit(url).netloc)
        try:
            resp = self.session.get(url, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"{url}: {exc}") from None
        if resp.status_code != 200:
            raise TransportError(f"{url}: HTTP {resp.status_code}")
        return resp.content


# --- observations and store ------------------------------------------------------

@dataclass(frozen=True)
class Observation:
    point_id: str
    timestamp: int  # UTC seconds
    status: TrafficStatus
    rgb: tuple | None = None
    note: str = ""

    def row(self):
        r, g, b = self.rgb if self.rgb is not None else ("", "", "")
        return [self.point_id, self.timestamp, self.status.value, r, g, b, self.note]


class ObservationStore:
    """Append-only CSV files, one per UTC day: ``<deployment>_<YYYY-MM-DD>.csv``.

    Appends are serialized by a lock (single-writer contract).
    """

    def __init__(self, directory, deployment: str = "roadwork"):
        self.directory = Path(directory)
        self.deployment = deployment
        self._lock = threading.Lock()
        self._last_ts: dict[tuple[str, str], int] = {}

    def path_for(self, timestamp: int) -> Path:
        day = dt.datetime.fromtimestamp(timestamp, dt.timezone.utc).strftime("%Y-%m-%d")
        return self.directory / f"{self.deployment}_{day}.csv"

    def append(self, obs: Sequence[Observation] | Observation):
        if isinstance(obs, Observation):
            obs = [obs]
        with self._lock:
            try:
                self.directory.mkdir(parents=True, exist_ok=True)
                by_file: dict[Path, list[Observation]] = {}
                for o in obs:
                    by_file.setdefault(self.path_for(o.timestamp), []).append(o)
                for path, items in by_file.items():
                    new = not path.exists()
                    with path.open("a", newline="", encoding="utf-8") as fh:
                        w = csv.writer(fh)
                        if new:
                            w.writerow(OBSERVATION_HEADER)
                        for o in items:
                            key = (path.name, o.point_id)
                            if o.timestamp < self._last_ts.get(key, o.timestamp):
                                raise InputError(f"timestamps for {o.point_id} must not decrease")
                            self._last_ts[key] = o.timestamp
                            w.writerow(o.row())
            except OSError as exc:
                raise StoreError(f"cannot write observation store {self.directory}: {exc}") from exc

    def files(self) -> list[Path]:
        return sorted(self.directory.glob(f"{self.deployment}_*.csv"))


def read_observations(paths) -> list[Observation]:
    if isinstance(paths, (str, os.PathLike)):
        p = Path(paths)
        paths = sorted(p.glob("*.csv")) if p.is_dir() else [p]
    out = []
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != OBSERVATION_HEADER:
                raise InputError(f"{path}: expected header {','.join(OBSERVATION_HEADER)}")
            for r in reader:
                rgb = (int(r["r"]), int(r["g"]), int(r["b"])) if r["r"] != "" else None
                out.append(Observation(r["point_id"], int(r["timestamp_utc"]),
                                       TrafficStatus.parse(r["status"]), rgb, r["note"]))
    return out


# --- clocks and collector ------------------------------------------------------

class SystemClock:
    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float, stop: threading.Event | None = None):
        if seconds <= 0:
            return
        if stop is not None:
            stop.wait(seconds)
        else:
            time.sleep(seconds)


class FakeClock:
    """Deterministic clock: ``sleep`` advances time instantly."""

    def __init__(self, start: float = 0.0):
        self.t = float(start)

    def now(self) -> float:
        return self.t

    def sleep(self, seconds: float, stop=None):
        if seconds > 0:
            self.t += seconds


@dataclass
class Collector:
    jobs: Sequence[FetchJob]
    transport: Transport
    store: ObservationStore
    clock: object = field(default_factory=SystemClock)
    rules: ClassifierRules = DEFAULT_RULES
    radius: int = DEFAULT_RADIUS
    workers: int = 8

    def __post_init__(self):
        self.stop_event = threading.Event()

    def stop(self):
        self.stop_event.set()

    def observe(self, job: FetchJob, when: float) -> Observation:
        ts = int(math.floor(when))
        try:
            data = self.transport.fetch(job.request(when))
            status, rgb = sample_point(data, (job.tile.offset_x, job.tile.offset_y),
                                       self.radius, self.rules)
            note = "" if rgb is not None else "no coloured pixel in radius"
        except (TransportError, InputError) as exc:
            logger.warning("point %s: %s", job.point_id, exc)
            return Observation(job.point_id, ts, TrafficStatus.UNKNOWN, None, f"error: {exc}")
        return Observation(job.point_id, ts, status, rgb, note)

    def run(self, duration: float | None = None) -> int:
        """Fire jobs until ``duration`` seconds elapse (or forever) or :meth:`stop` is called.

        Job k fires at ``t0 + n * period`` for n = 0, 1, ... while that time is
        before ``t0 + duration``. Returns the number of observations appended.
        """
        if not self.jobs:
            raise InputError("no fetch jobs")
        t0 = self.clock.now()
        end = math.inf if duration is None else t0 + duration
        next_fire = [t0] * len(self.jobs)
        count = 0
        with ThreadPoolExecutor(max_workers=max(1, self.workers)) as pool:
            while not self.stop_event.is_set():
                t = min(next_fire)
                if t >= end:
                    break
                self.clock.sleep(t - self.clock.now(), self.stop_event)
                if self.stop_event.is_set():
                    break
                due = [i for i, f in enumerate(next_fire) if f <= t]
                results = list(pool.map(lambda i: self.observe(self.jobs[i], next_fire[i]), due))
                self.store.append(results)
                count += len(results)
                for i in due:
                    next_fire[i] += self.jobs[i].period
        return count


def run_collector(jobs, transport, store, clock=None, duration=None, **kwargs) -> int:
    return Collector(jobs, transport, store, clock or SystemClock(), **kwargs).run(duration)


# --- daily profile ---------------------------------------------------------------

@dataclass(frozen=True)
class DailyProfile:
    bin_seconds: int
    speeds: np.ndarray  # km/h per time-of-day bin, nan where missing
    days: int

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.speeds)

    @property
    def n_bins(self) -> int:
        return len(self.speeds)

    def filled(self) -> np.ndarray:
        """Speeds with missing bins linearly interpolated around the day."""
        s = self.speeds
        if self.missing.all():
            raise InputError("every bin of the daily profile is missing")
        if not self.missing.any():
            return s.copy()
        idx = np.arange(len(s))
        ok = ~self.missing
        n = len(s)
        xp = np.concatenate([idx[ok] - n, idx[ok], idx[ok] + n])
        fp = np.tile(s[ok], 3)
        return np.interp(idx, xp, fp)


def aggregate_daily_profile(obs: Iterable[Observation], bin_seconds: int, table: QuantizationTable,
                            point_id: str | None = None, utc_offset: int = 0) -> DailyProfile:
    """Average quantified speed per time-of-day bin over all observed days.

    Within a day, observations in the same bin are averaged first; the daily
    values are then averaged across days. Unknown observations are skipped.
    """
    bin_seconds = int(bin_seconds)
    if bin_seconds <= 0 or 86400 % bin_seconds:
        raise InputError(f"bin of {bin_seconds} s does not divide a day")
    n_bins = 86400 // bin_seconds
    per_day: dict[tuple[int, int], list[float]] = {}
    days = set()
    for o in obs:
        if point_id is not None and o.point_id != point_id:
            continue
        local = o.timestamp + utc_offset
        day, sec = divmod(local, 86400)
        days.add(day)
        if o.status is TrafficStatus.UNKNOWN:
            continue
        per_day.setdefault((sec // bin_seconds, day), []).append(quantify(o.status, table))
    sums = np.zeros(n_bins)
    counts = np.zeros(n_bins)
    for (b, _day), speeds in sorted(per_day.items()):
        sums[b] += math.fsum(speeds) / len(speeds)
        counts[b] += 1
    if not counts.any():
        raise InputError("no classified observations to aggregate")
    with np.errstate(invalid="ignore", divide="ignore"):
        speeds = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return DailyProfile(bin_seconds, speeds, len(days))
