"""Status quantization: per-status normal fits and the speed table built from them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from roadwork._validation import check_1d, check_statuses
from roadwork.errors import InputError
from roadwork.status import SPEED_ORDER, TrafficStatus

TABLE_HEADER = ["status", "lo_kmh", "hi_kmh", "rep_kmh"]
SAMPLES_HEADER = ["speed_kmh", "status"]


@dataclass(frozen=True)
class CalibrationSample:
    speed: float
    status: TrafficStatus

    def __post_init__(self):
        if not math.isfinite(self.speed) or self.speed < 0:
            raise InputError(f"calibration speed must be finite and >= 0, got {self.speed!r}")
        if self.status is TrafficStatus.UNKNOWN:
            raise InputError("calibration samples cannot carry the unknown status")


@dataclass(frozen=True)
class StatusGaussian:
    status: TrafficStatus
    mean: float
    std: float
    n: int

    def pdf(self, v):
        z = (np.asarray(v, dtype=float) - self.mean) / self.std
        return np.exp(-0.5 * z * z) / (self.std * math.sqrt(2 * math.pi))


@dataclass(frozen=True)
class StatusRange:
    status: TrafficStatus
    lo: float
    hi: float
    rep: float


@dataclass(frozen=True)
class QuantizationTable:
    """Speed range and representative speed per status, slowest status first."""

    rows: tuple[StatusRange, ...]

    def __post_init__(self):
        if [r.status for r in self.rows] != list(SPEED_ORDER):
            raise InputError("table rows must be ordered severe, congested, slow, smooth")
        if self.rows[0].lo != 0:
            raise InputError("the slowest range must start at 0 km/h")
        for a, b in zip(self.rows, self.rows[1:]):
            if a.hi != b.lo:
                raise InputError(f"ranges of {a.status.value} and {b.status.value} are not contiguous")
        for r in self.rows:
            if not (r.lo <= r.rep <= r.hi) or r.lo >= r.hi:
                raise InputError(
                    f"representative speed {r.rep} of {r.status.value} outside [{r.lo}, {r.hi}]"
                )

    def __getitem__(self, status) -> StatusRange:
        status = TrafficStatus.parse(status)
        for r in self.rows:
            if r.status is status:
                return r
        raise KeyError(status)

    @property
    def boundaries(self) -> tuple[float, float, float]:
        return tuple(r.hi for r in self.rows[:-1])

    @property
    def v_max(self) -> float:
        return self.rows[-1].hi

    def classify(self, speed: float) -> TrafficStatus:
        """Status whose range holds ``speed``; anything at or above ``v_max`` is the top status."""
        if speed < 0:
            raise InputError(f"negative speed {speed}")
        for r in self.rows:
            if speed < r.hi:
                return r.status
        return self.rows[-1].status

    @classmethod
    def from_representatives(cls, ranges: dict) -> "QuantizationTable":
        """Build from ``{status: (lo, hi, rep)}``, e.g. a published table."""
        return cls(tuple(StatusRange(s, *map(float, ranges[s])) for s in SPEED_ORDER))


def fit_status_gaussians(samples: Iterable[CalibrationSample]) -> list[StatusGaussian]:
    """Sample mean and (n-1) standard deviation of the speeds observed under each status."""
    by_status: dict[TrafficStatus, list[float]] = {}
    for s in samples:
        by_status.setdefault(s.status, []).append(float(s.speed))
    out = []
    for status in SPEED_ORDER:
        if status not in by_status:
            continue
        v = np.asarray(by_status[status])
        if len(v) < 2:
            raise InputError(f"status {status.value} needs at least 2 samples, got {len(v)}")
        std = float(np.std(v, ddof=1))
        if not std > 0:
            raise InputError(f"status {status.value} has zero speed variance")
        out.append(StatusGaussian(status, float(np.mean(v)), std, len(v)))
    return out


def gaussian_boundary(g1: StatusGaussian, g2: StatusGaussian) -> float:
    """Speed between the two means where the fitted densities are equal.

    Taking logs of N(m1, s1) = N(m2, s2) gives a quadratic
    ``a v^2 + b v + c = 0``; the root inside (m1, m2) is returned. With equal
    standard deviations the quadratic degenerates to the midpoint.
    """
    m1, s1, m2, s2 = g1.mean, g1.std, g2.mean, g2.std
    if not m1 < m2:
        raise InputError(f"expected g1.mean < g2.mean, got {m1} and {m2}")
    if math.isclose(s1, s2, rel_tol=1e-12):
        return 0.5 * (m1 + m2)
    a = 1 / s2**2 - 1 / s1**2
    b = 2 * (m1 / s1**2 - m2 / s2**2)
    c = m2**2 / s2**2 - m1**2 / s1**2 + 2 * math.log(s2 / s1)
    disc = b * b - 4 * a * c
    if disc < 0:
        raise InputError("fitted densities do not intersect")
    sq = math.sqrt(disc)
    # numerically stable pair of roots
    q = -0.5 * (b + math.copysign(sq, b))
    roots = [q / a]
    if q != 0:
        roots.append(c / q)
    inside = [r for r in roots if m1 < r < m2]
    if not inside:
        raise InputError(f"no density intersection between the means {m1:g} and {m2:g}")
    return inside[0]


def build_table(gaussians: Sequence[StatusGaussian], v_max: float) -> QuantizationTable:
    by_status = {g.status: g for g in gaussians}
    if len(by_status) != len(gaussians) or set(by_status) != set(SPEED_ORDER):
        raise InputError("need exactly one fit for each of severe, congested, slow, smooth")
    ordered = [by_status[s] for s in SPEED_ORDER]
    means = [g.mean for g in ordered]
    if any(a >= b for a, b in zip(means, means[1:])):
        raise InputError(f"fitted means out of order (severe < congested < slow < smooth): {means}")
    if not v_max > means[-1]:
        raise InputError(f"v_max {v_max} must exceed the smooth mean {means[-1]}")
    edges = [0.0] + [gaussian_boundary(a, b) for a, b in zip(ordered, ordered[1:])] + [float(v_max)]
    rows = []
    for g, lo, hi in zip(ordered, edges, edges[1:]):
        if not lo <= g.mean <= hi:
            raise InputError(f"mean {g.mean:g} of {g.status.value} falls outside [{lo:g}, {hi:g}]")
        rows.append(StatusRange(g.status, lo, hi, g.mean))
    return QuantizationTable(tuple(rows))


def default_v_max(design_speed: float, speeds: Iterable[float] = ()) -> float:
    """Design speed plus 10 km/h, raised to the fastest observed speed if that is higher."""
    return max([design_speed + 10.0, *speeds])


def quantify(status, table: QuantizationTable) -> float:
    status = TrafficStatus.parse(status)
    if status is TrafficStatus.UNKNOWN:
        raise InputError("cannot quantify an unknown status")
    return table[status].rep


# --- CSV ------------------------------------------------------------------

def read_samples(path) -> list[CalibrationSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(SAMPLES_HEADER) <= set(reader.fieldnames):
            raise InputError(f"{path}: expected columns {','.join(SAMPLES_HEADER)}")
        try:
            return [
                CalibrationSample(float(r["speed_kmh"]), TrafficStatus.parse(r["status"]))
                for r in reader
            ]
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from None


def write_table(table: QuantizationTable, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_HEADER)
        for r in table.rows:
            w.writerow([r.status.value, repr(r.lo), repr(r.hi), repr(r.rep)])


def read_table(path) -> QuantizationTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TABLE_HEADER:
            raise InputError(f"{path}: expected header {','.join(TABLE_HEADER)}")
        ranges = {
            TrafficStatus.parse(r["status"]): (r["lo_kmh"], r["hi_kmh"], r["rep_kmh"]) for r in reader
        }
    if set(ranges) != set(SPEED_ORDER):
        raise InputError(f"{path}: table must list severe, congested, slow and smooth")
    return QuantizationTable.from_representatives(ranges)


class StatusQuantizer(BaseEstimator):
    """Learn a status -> speed table from paired (speed, status) calibration data.

    ``fit(speeds, statuses)`` fits one normal per status and places range
    boundaries where neighbouring densities cross. ``transform(statuses)``
    returns representative speeds; ``predict(speeds)`` maps speeds back to the
    status whose range contains them.

    Parameters
    ----------
    v_max : float, optional
        Upper end of the smooth range. Defaults to ``design_speed + 10`` or the
        fastest calibration speed, whichever is larger.
    design_speed : float, optional
        Used only to derive the default ``v_max``; when both are None the
        fastest calibration speed is used.
    """

    def __init__(self, v_max=None, design_speed=None):
        self.v_max = v_max
        self.design_speed = design_speed

    def fit(self, X, y):
        speeds = check_1d(X, "X")
        statuses = check_statuses(y)
        if len(speeds) != len(statuses):
            raise InputError(f"X and y lengths differ: {len(speeds)} vs {len(statuses)}")
        samples = [CalibrationSample(float(v), s) for v, s in zip(speeds, statuses)]
        self.gaussians_ = fit_status_gaussians(samples)
        if self.v_max is not None:
            v_max = float(self.v_max)
        elif self.design_speed is not None:
            v_max = default_v_max(float(self.design_speed), speeds)
        else:
            v_max = float(speeds.max())
        self.table_ = build_table(self.gaussians_, v_max)
        return self

    def transform(self, X):
        check_is_fitted(self, "table_")
        return np.array([quantify(s, self.table_) for s in check_statuses(X, "X")], dtype=float)

    def predict(self, X):
        check_is_fitted(self, "table_")
        return np.array([self.table_.classify(float(v)) for v in check_1d(X)], dtype=object)
