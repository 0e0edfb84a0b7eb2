"""Start-time sweep: added work-zone delay for every candidate start over a day."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from roadwork._validation import check_1d
from roadwork.delay import WorkZoneScenario, _fold, run_scenario, window_flags
from roadwork.errors import InputError, RoadworkError

logger = logging.getLogger(__name__)

DAY_MIN = 24 * 60
CURVE_HEADER = ["start_hhmm", "added_delay_veh_h", "is_optimal", "note"]


@dataclass(frozen=True)
class SweepSpec:
    demand: tuple  # one day of approach demand (pcu/h) at t_d resolution, periodic
    duration_h: float
    t_d: float  # hours
    candidates: tuple = ()  # start times in minutes after midnight; default 15 min grid
    tie_tol: float | None = None  # vehicle-hours; default 1% of the minimum
    tail_h: float = 48.0  # extra horizon after teardown for the queue to drain

    def __post_init__(self):
        demand = tuple(float(q) for q in self.demand)
        object.__setattr__(self, "demand", demand)
        steps_per_day = DAY_MIN / (self.t_d * 60)
        if abs(steps_per_day - round(steps_per_day)) > 1e-9 or round(steps_per_day) != len(demand):
            raise InputError(
                f"demand must cover 24 h at t_d={self.t_d} h ({steps_per_day:g} steps), got {len(demand)}"
            )
        if not 0 < self.duration_h <= 24:
            raise InputError(f"duration must be in (0, 24] h, got {self.duration_h}")
        if not self.candidates:
            object.__setattr__(self, "candidates", tuple(range(0, DAY_MIN, 15)))
        for m in self.candidates:
            if not 0 <= m < DAY_MIN:
                raise InputError(f"candidate start {m} min outside the day")
            step = m / (self.t_d * 60)
            if abs(step - round(step)) > 1e-9:
                raise InputError(f"candidate start {m} min is not on the {self.t_d * 60:g} min step grid")

    @property
    def steps_per_day(self) -> int:
        return len(self.demand)


@dataclass(frozen=True)
class CurvePoint:
    start_min: int
    added: float | None
    error: str = ""

    @property
    def hhmm(self) -> str:
        return f"{int(self.start_min) // 60:02d}:{int(self.start_min) % 60:02d}"


@dataclass(frozen=True)
class SweepResult:
    curve: tuple
    best: tuple  # start minutes attaining the minimum exactly
    window: tuple  # contiguous candidates within tolerance of the minimum
    minimum: float
    tolerance: float = field(default=0.0)

    @property
    def best_start(self) -> int:
        return self.best[0]


def periodic_baseline_queue(spec: SweepSpec, scenario: WorkZoneScenario, max_days: int = 30) -> np.ndarray:
    """Queue carried into each step of a day when the no-work-zone road runs day after day."""
    base = scenario.with_demand(spec.demand)
    off = [False] * spec.steps_per_day
    q0 = 0.0
    for _ in range(max_days):
        steps = _fold(base, off, q0)
        q_end = steps[-1].queue_out
        if abs(q_end - q0) <= 1e-9 * max(1.0, q0):
            return np.array([s.queue_in for s in steps])
        q0 = q_end
    raise InputError("daily demand exceeds daily normal capacity; the baseline queue never clears")


def run_daily(scenario: WorkZoneScenario, demand_day: Sequence[float], start_step: int,
              duration_h: float, tail_h: float = 48.0, initial_queue: float | None = None):
    """Run one start time against a periodic daily demand profile.

    The horizon begins at ``start_step`` with the queue the no-work-zone road
    would carry at that time of day, covers the closure, and continues
    ``tail_h`` hours (wrapping midnight) so the residual queue can drain.
    """
    spec = SweepSpec(tuple(demand_day), duration_h, scenario.t_d, (0,), None, tail_h)
    if initial_queue is None:
        initial_queue = float(periodic_baseline_queue(spec, scenario)[start_step % spec.steps_per_day])
    return _run_from(spec, scenario, start_step, initial_queue)


def _run_from(spec: SweepSpec, scenario: WorkZoneScenario, s: int, q0: float):
    n = spec.steps_per_day
    k = int(round(spec.duration_h / spec.t_d))
    horizon = k + int(math.ceil(spec.tail_h / spec.t_d))
    demand = [spec.demand[(s + j) % n] for j in range(horizon)]
    sc = replace(scenario, T=spec.duration_h, t_d=spec.t_d, demand=tuple(demand))
    return run_scenario(sc, window_flags(horizon, 0, k), initial_queue=q0)


def _evaluate(spec: SweepSpec, scenario: WorkZoneScenario, q_in: np.ndarray, start_min: int) -> CurvePoint:
    s = int(round(start_min / (spec.t_d * 60)))
    try:
        result = _run_from(spec, scenario, s, float(q_in[s]))
    except RoadworkError as exc:
        return CurvePoint(start_min, None, str(exc))
    return CurvePoint(start_min, result.added)


def _optimal_window(curve, best_idx, tol, cyclic):
    n = len(curve)
    ok = [p.added is not None and p.added <= curve[best_idx].added + tol for p in curve]
    if all(ok):
        return list(range(n))
    idx = [best_idx]
    i = best_idx
    while True:
        j = i - 1
        if j < 0:
            if not cyclic:
                break
            j += n
        if not ok[j] or j in idx:
            break
        idx.insert(0, j)
        i = j
    i = best_idx
    while True:
        j = i + 1
        if j >= n:
            if not cyclic:
                break
            j -= n
        if not ok[j] or j in idx:
            break
        idx.append(j)
        i = j
    return idx


def sweep(spec: SweepSpec, scenario: WorkZoneScenario, workers: int | None = None) -> SweepResult:
    """Evaluate every candidate start and locate the minimum-delay window.

    ``scenario`` supplies speeds, accelerations, length and capacities; its
    duration and demand are replaced by those of ``spec``. Candidates whose
    run fails are reported with their error and skipped for the minimum.
    """
    q_in = periodic_baseline_queue(spec, scenario)
    starts = sorted(spec.candidates)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            curve = list(pool.map(lambda m: _evaluate(spec, scenario, q_in, m), starts))
    else:
        curve = [_evaluate(spec, scenario, q_in, m) for m in starts]

    valid = [p.added for p in curve if p.added is not None]
    if not valid:
        raise RoadworkError("every candidate start time failed: " + curve[0].error)
    minimum = min(valid)
    best = tuple(p.start_min for p in curve if p.added == minimum)
    tol = spec.tie_tol if spec.tie_tol is not None else 0.01 * abs(minimum)
    step = np.diff(starts)
    cyclic = len(starts) > 1 and np.all(step == step[0]) and len(starts) * step[0] == DAY_MIN
    best_idx = next(i for i, p in enumerate(curve) if p.added == minimum)
    window = tuple(curve[i].start_min for i in _optimal_window(curve, best_idx, tol, cyclic))
    return SweepResult(tuple(curve), best, window, minimum, tol)


def emit_curve(result: SweepResult, path):
    if not result.curve:
        raise InputError("empty sweep result")
    window = set(result.window)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for p in result.curve:
            added = "" if p.added is None else repr(p.added)
            w.writerow([p.hhmm, added, int(p.start_min in window), p.error])


class StartTimeOptimizer(BaseEstimator):
    """Find the start time that minimizes added delay for a daily demand profile.

    ``fit(demand)`` takes one day of approach demand in pcu/h at ``t_d``
    resolution and sets ``curve_``, ``best_start_`` (minutes after midnight)
    and ``window_``.
    """

    def __init__(self, scenario=None, duration_h=8.0, t_d=None, grid_min=15, tie_tol=None,
                 tail_h=48.0, workers=None):
        self.scenario = scenario
        self.duration_h = duration_h
        self.t_d = t_d
        self.grid_min = grid_min
        self.tie_tol = tie_tol
        self.tail_h = tail_h
        self.workers = workers

    def fit(self, X, y=None):
        if self.scenario is None:
            raise InputError("StartTimeOptimizer needs a scenario template")
        demand = check_1d(X, "demand")
        t_d = self.t_d if self.t_d is not None else self.scenario.t_d
        spec = SweepSpec(tuple(demand), self.duration_h, t_d,
                         tuple(range(0, DAY_MIN, int(self.grid_min))), self.tie_tol, self.tail_h)
        self.result_ = sweep(spec, self.scenario, self.workers)
        self.curve_ = np.array([(p.start_min, np.nan if p.added is None else p.added)
                                for p in self.result_.curve])
        self.best_start_ = self.result_.best_start
        self.window_ = self.result_.window
        return self

    def score(self, X=None, y=None):
        """Negative minimum added delay, so larger is better."""
        check_is_fitted(self, "result_")
        return -self.result_.minimum
