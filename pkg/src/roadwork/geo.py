"""Geographic <-> plane <-> world pixel <-> tile conversions and road discretization.

Every conversion goes through a :class:`ProviderProfile`, which bundles the
plane projection, tile size, axis conventions, an optional datum
pre-transform, the tile URL template and the colour rules of one map source.
The default profile is the spherical slippy-map scheme.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from roadwork.errors import InputError

EARTH_RADIUS_M = 6378137.0
MAX_MERCATOR_LAT = math.degrees(math.atan(math.sinh(math.pi)))  # 85.0511...

POINT_NET_HEADER = ["point_id", "lat", "lng", "road_id", "chainage_m"]

_DATUMS: dict[str, Callable[[float, float], tuple[float, float]]] = {
    "wgs84": lambda lat, lng: (lat, lng),
}


def register_datum(name: str, to_wgs84: Callable[[float, float], tuple[float, float]]):
    """Register a datum pre-transform mapping (lat, lng) in ``name`` to the projection datum."""
    _DATUMS[name] = to_wgs84


def registered_datums():
    return sorted(_DATUMS)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lng: float
    datum: str = "wgs84"

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or math.isnan(self.lat):
            raise InputError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lng <= 180.0) or math.isnan(self.lng):
            raise InputError(f"longitude {self.lng} outside [-180, 180]")
        if self.datum not in _DATUMS:
            raise InputError(f"datum {self.datum!r} is not registered")


@dataclass(frozen=True)
class TileAddress:
    zoom: int
    x: int
    y: int
    offset_x: int = 0
    offset_y: int = 0


@dataclass(frozen=True)
class ProviderProfile:
    name: str = "slippy"
    tile_size: int = 256
    min_zoom: int = 0
    max_zoom: int = 22
    # "top": row 0 is the northernmost row (slippy/XYZ); "bottom": TMS-style
    y_origin: str = "top"
    max_lat: float = MAX_MERCATOR_LAT
    datum: str = "wgs84"
    url_template: str | None = None
    rules: dict = field(default_factory=dict)

    def world_size(self, zoom: int) -> int:
        return self.tile_size * (1 << zoom)

    def check_zoom(self, zoom):
        if not isinstance(zoom, int) or not (self.min_zoom <= zoom <= self.max_zoom):
            raise InputError(
                f"zoom {zoom!r} unsupported by profile {self.name!r} "
                f"({self.min_zoom}..{self.max_zoom})"
            )


SLIPPY = ProviderProfile()
TMS = ProviderProfile(name="tms", y_origin="bottom")
PROFILES: dict[str, ProviderProfile] = {"slippy": SLIPPY, "tms": TMS}


def get_profile(profile: str | ProviderProfile | None = None) -> ProviderProfile:
    if profile is None:
        return SLIPPY
    if isinstance(profile, ProviderProfile):
        return profile
    try:
        return PROFILES[profile]
    except KeyError:
        raise InputError(f"unknown provider profile {profile!r}") from None


def load_profile(path) -> ProviderProfile:
    """Load a provider profile from JSON; unknown keys are rejected."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return ProviderProfile(**data)


# --- plane / pixel -------------------------------------------------------

def geo_to_world_pixel(p: GeoPoint, zoom: int, profile=None) -> tuple[float, float]:
    """Continuous world-pixel coordinates of ``p``; y grows southward for a top origin."""
    profile = get_profile(profile)
    profile.check_zoom(zoom)
    lat, lng = _DATUMS[p.datum](p.lat, p.lng)
    if abs(lat) > profile.max_lat:
        raise InputError(
            f"latitude {lat} outside projectable range +-{profile.max_lat:.6f}"
        )
    size = profile.world_size(zoom)
    # spherical mercator plane, normalised to [0, 1]
    u = (lng + 180.0) / 360.0
    phi = math.radians(lat)
    v = (1.0 - math.log(math.tan(phi) + 1.0 / math.cos(phi)) / math.pi) / 2.0
    if profile.y_origin == "bottom":
        v = 1.0 - v
    return u * size, v * size


def world_pixel_to_geo(px: float, py: float, zoom: int, profile=None) -> GeoPoint:
    profile = get_profile(profile)
    profile.check_zoom(zoom)
    size = profile.world_size(zoom)
    u, v = px / size, py / size
    if profile.y_origin == "bottom":
        v = 1.0 - v
    lng = u * 360.0 - 180.0
    lat = math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * v))))
    return GeoPoint(lat, lng)


def geo_to_tile(p: GeoPoint, zoom: int, profile=None) -> TileAddress:
    """Tile and in-tile pixel holding ``p``.

    The world pixel is rounded to the nearest integer, so
    ``tile_to_geo(geo_to_tile(p))`` is within half a pixel of ``p`` on each axis.
    Points in the last half pixel before the world's east or south edge would
    round onto the edge itself, which is not an addressable pixel; they are
    clamped to the last pixel (error below one pixel there).
    """
    profile = get_profile(profile)
    px, py = geo_to_world_pixel(p, zoom, profile)
    last = profile.world_size(zoom) - 1
    ix = min(max(int(math.floor(px + 0.5)), 0), last)
    iy = min(max(int(math.floor(py + 0.5)), 0), last)
    ts = profile.tile_size
    return TileAddress(zoom, ix // ts, iy // ts, ix % ts, iy % ts)


def tile_to_geo(t: TileAddress, profile=None) -> GeoPoint:
    profile = get_profile(profile)
    profile.check_zoom(t.zoom)
    n = 1 << t.zoom
    ts = profile.tile_size
    if not (0 <= t.x < n and 0 <= t.y < n):
        raise InputError(f"tile ({t.x}, {t.y}) outside the {n}x{n} grid at zoom {t.zoom}")
    if not (0 <= t.offset_x < ts and 0 <= t.offset_y < ts):
        raise InputError(f"in-tile offset ({t.offset_x}, {t.offset_y}) outside tile of {ts} px")
    return world_pixel_to_geo(t.x * ts + t.offset_x, t.y * ts + t.offset_y, t.zoom, profile)


def ground_resolution(lat: float, zoom: int, profile=None) -> float:
    """Metres per pixel at ``lat``."""
    profile = get_profile(profile)
    return math.cos(math.radians(lat)) * 2 * math.pi * EARTH_RADIUS_M / profile.world_size(zoom)


# --- distances and discretization ---------------------------------------

def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in metres."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dp = p2 - p1
    dl = math.radians(b.lng - a.lng)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _interpolate(a: GeoPoint, b: GeoPoint, frac: float) -> GeoPoint:
    """Point at fraction ``frac`` of the great circle from a to b."""
    if frac <= 0:
        return a
    if frac >= 1:
        return b
    p1, l1 = math.radians(a.lat), math.radians(a.lng)
    p2, l2 = math.radians(b.lat), math.radians(b.lng)
    delta = haversine(a, b) / EARTH_RADIUS_M
    if delta == 0:
        return a
    s = math.sin(delta)
    wa = math.sin((1 - frac) * delta) / s
    wb = math.sin(frac * delta) / s
    x = wa * math.cos(p1) * math.cos(l1) + wb * math.cos(p2) * math.cos(l2)
    y = wa * math.cos(p1) * math.sin(l1) + wb * math.cos(p2) * math.sin(l2)
    z = wa * math.sin(p1) + wb * math.sin(p2)
    lat = math.degrees(math.atan2(z, math.hypot(x, y)))
    lng = math.degrees(math.atan2(y, x))
    return GeoPoint(lat, lng, a.datum)


def polyline_length(vertices: Sequence[GeoPoint]) -> float:
    return sum(haversine(a, b) for a, b in zip(vertices, vertices[1:]))


def discretize_with_chainage(line: Sequence[GeoPoint], spacing: float) -> list[tuple[GeoPoint, float]]:
    """Like :func:`discretize` but also returns each point's arc length from the start."""
    if not spacing > 0:
        raise InputError(f"spacing must be positive, got {spacing!r}")
    vertices = list(line)
    if len(vertices) < 2:
        raise InputError("a polyline needs at least two vertices")
    seg_len = [haversine(a, b) for a, b in zip(vertices, vertices[1:])]
    total = sum(seg_len)
    if total == 0:
        raise InputError("degenerate polyline: all vertices coincide")

    eps = 1e-6 * spacing
    n_grid = int(math.floor(total / spacing + 1e-9))
    targets = [k * spacing for k in range(n_grid + 1)]
    if total - targets[-1] > eps:
        targets.append(total)

    out = []
    seg, seg_start = 0, 0.0
    for s in targets:
        while seg < len(seg_len) - 1 and s > seg_start + seg_len[seg]:
            seg_start += seg_len[seg]
            seg += 1
        if s >= total:
            out.append((vertices[-1], total))
            continue
        frac = (s - seg_start) / seg_len[seg] if seg_len[seg] > 0 else 0.0
        out.append((_interpolate(vertices[seg], vertices[seg + 1], frac), s))
    return out


def discretize(line: Sequence[GeoPoint], spacing: float = 50.0) -> list[GeoPoint]:
    """Monitoring points every ``spacing`` metres along ``line``, both endpoints included."""
    return [p for p, _ in discretize_with_chainage(line, spacing)]


# --- point-net files ----------------------------------------------------

@dataclass(frozen=True)
class NetPoint:
    point_id: str
    lat: float
    lng: float
    road_id: str
    chainage_m: float

    @property
    def geo(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lng)


def read_roads(path) -> dict[str, list[GeoPoint]]:
    """Read road polylines.

    ``.json``/``.geojson`` files are GeoJSON FeatureCollections of LineStrings
    with an ``id`` or ``properties.road_id``; anything else is a CSV with
    columns ``road_id,lat,lng`` listing vertices in order.
    """
    path = Path(path)
    roads: dict[str, list[GeoPoint]] = {}
    if path.suffix.lower() in (".json", ".geojson"):
        with path.open(encoding="utf-8") as fh:
            data = json.load(fh)
        for i, feat in enumerate(data.get("features", [])):
            geom = feat.get("geometry") or {}
            if geom.get("type") != "LineString":
                continue
            rid = str(feat.get("properties", {}).get("road_id", feat.get("id", i)))
            roads[rid] = [GeoPoint(lat, lng) for lng, lat, *_ in geom["coordinates"]]
    else:
        with path.open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                roads.setdefault(row["road_id"], []).append(
                    GeoPoint(float(row["lat"]), float(row["lng"]))
                )
    if not roads:
        raise InputError(f"no roads found in {path}")
    return roads


def build_point_net(roads: dict[str, list[GeoPoint]], spacing: float = 50.0) -> list[NetPoint]:
    points = []
    for rid, vertices in roads.items():
        for i, (p, s) in enumerate(discretize_with_chainage(vertices, spacing)):
            points.append(NetPoint(f"{rid}#{i}", p.lat, p.lng, rid, s))
    return points


def write_point_net(points: Iterable[NetPoint], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(POINT_NET_HEADER)
        for p in points:
            w.writerow([p.point_id, repr(p.lat), repr(p.lng), p.road_id, repr(p.chainage_m)])


def read_point_net(path) -> list[NetPoint]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != POINT_NET_HEADER:
            raise InputError(f"{path}: expected header {','.join(POINT_NET_HEADER)}")
        return [
            NetPoint(r["point_id"], float(r["lat"]), float(r["lng"]), r["road_id"], float(r["chainage_m"]))
            for r in reader
        ]
