"""Deterministic-queue delay at a work zone, evaluated step by step.

Arrivals are uniform within each step of length ``t_d``. Per step the delay is
the speed-change cost of every arriving vehicle (deceleration, slow traverse,
acceleration) plus the stochastic waiting term, plus the area between the
cumulative arrival and departure curves whenever a deterministic queue exists.
Delay added by the work zone is the difference to a run of the same demand
with the work zone absent.
"""

from __future__ import annotations

import configparser
import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from roadwork._validation import check_non_negative, check_positive
from roadwork.errors import ConfigError, HorizonError, InputError

logger = logging.getLogger(__name__)

KMH = 1 / 3.6  # km/h -> m/s
D4_CAP = 0.98  # stochastic delay is evaluated at no more than this share of capacity

RESULT_HEADER = ["i", "Q", "d1", "d2", "d3", "d4", "D4", "queue", "DL"]
DEMAND_HEADER = ["step_index", "Q_pcu_per_h"]


@dataclass(frozen=True)
class WorkZoneScenario:
    """Inputs of one work-zone delay run.

    Speeds in km/h, accelerations in m/s^2, length in km, times in hours,
    capacities and demand in pcu/h over the whole approach.
    """

    V1: float
    V2: float
    a1: float
    a2: float
    L: float
    T: float
    capacity: float
    normal_capacity: float
    t_d: float
    demand: tuple = field(default=())

    def __post_init__(self):
        for name in ("V1", "V2", "a1", "a2", "L", "T", "capacity", "normal_capacity", "t_d"):
            check_positive(name, getattr(self, name))
        if self.V2 > self.V1:
            raise InputError(f"work-zone speed V2={self.V2} exceeds normal speed V1={self.V1}")
        if self.capacity > self.normal_capacity:
            raise InputError(
                f"work-zone capacity {self.capacity} exceeds normal capacity {self.normal_capacity}"
            )
        object.__setattr__(self, "demand", tuple(float(q) for q in self.demand))
        for q in self.demand:
            check_non_negative("demand", q)

    @property
    def work_steps(self) -> int:
        n = self.T / self.t_d
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise InputError(f"duration T={self.T} h is not a whole number of {self.t_d} h steps")
        return int(round(n))

    def with_demand(self, demand) -> "WorkZoneScenario":
        return replace(self, demand=tuple(demand))


@dataclass(frozen=True)
class StepDelay:
    i: int
    Q: float
    d1: float
    d2: float
    d3: float
    d4: float
    D4: float
    queue_in: float
    queue_out: float
    served: float
    DL: float
    branch: int
    active: bool


@dataclass(frozen=True)
class DelayResult:
    steps: tuple
    baseline_steps: tuple
    total: float
    baseline_total: float
    added: float
    final_queue: float
    baseline_final_queue: float

    @property
    def queuing_total(self) -> float:
        """Deterministic queueing delay (sum of D4) of the work-zone run, vehicle-hours."""
        return math.fsum(s.D4 for s in self.steps)


def component_delays(V1, V2, a1, a2, L) -> tuple[float, float, float]:
    """Per-vehicle deceleration, traverse and acceleration delay in hours.

    Evaluated in SI units: (V1 - V2)^2 / (2 a V1) is the time lost braking
    from V1 to V2 at constant ``a`` compared with cruising the same distance.
    """
    if V2 <= 0:
        raise InputError(f"work-zone speed must be positive, got {V2}")
    if V2 > V1:
        raise InputError(f"V2={V2} exceeds V1={V1}")
    check_positive("a1", a1)
    check_positive("a2", a2)
    check_non_negative("L", L)
    v1, v2 = V1 * KMH, V2 * KMH
    d1 = (v1 - v2) ** 2 / (2 * a1 * v1) / 3600
    d3 = (v1 - v2) ** 2 / (2 * a2 * v1) / 3600
    d2 = (1 / V2 - 1 / V1) * L
    return d1, d2, d3


def stochastic_queue_delay(Q: float, C: float, cap: float = D4_CAP) -> float:
    """Per-vehicle random-arrival waiting time (hours) while demand is under capacity.

    The pole at Q = C is avoided by evaluating at ``min(Q, cap * C)``.
    """
    check_positive("C", C)
    check_non_negative("Q", Q)
    if Q > C:
        raise InputError(f"demand {Q} above capacity {C}: use the congested branch")
    q = min(Q, cap * C)
    return q / (C * (C - q))


def _queue_area(queue_in, rate, t_d):
    """Area under max(0, queue_in + rate * t) over [0, t_d] and the end queue."""
    end = queue_in + rate * t_d
    if end >= 0:
        return queue_in * t_d + 0.5 * rate * t_d * t_d, end
    # queue empties at tau = queue_in / -rate inside the step
    tau = queue_in / -rate
    return 0.5 * queue_in * tau, 0.0


def step_delay(queue_in: float, Q_i: float, scenario: WorkZoneScenario, active: bool = True,
               i: int = 0) -> StepDelay:
    """Delay of one step given the queue carried in.

    Branches: 1 no queue and Q <= C; 2 no queue and Q > C (queue forms);
    3 queue and Q < C (dissipating); 4 queue and Q >= C (growing).
    The stochastic term is charged in every branch at ``min(Q, C)`` so total
    delay never drops when demand crosses capacity.
    """
    check_non_negative("queue_in", queue_in)
    check_non_negative("Q_i", Q_i)
    t_d = scenario.t_d
    if active:
        C = scenario.capacity
        d1, d2, d3 = component_delays(scenario.V1, scenario.V2, scenario.a1, scenario.a2, scenario.L)
    else:
        C = scenario.normal_capacity
        d1 = d2 = d3 = 0.0
    d4 = stochastic_queue_delay(min(Q_i, C), C)

    if queue_in == 0:
        branch = 1 if Q_i <= C else 2
    else:
        branch = 3 if Q_i < C else 4

    if branch == 1:
        D4, queue_out = 0.0, 0.0
    else:
        D4, queue_out = _queue_area(queue_in, Q_i - C, t_d)
    served = queue_in + Q_i * t_d - queue_out
    DL = (d1 + d2 + d3 + d4) * Q_i * t_d + D4
    return StepDelay(i, Q_i, d1, d2, d3, d4, D4, queue_in, queue_out, served, DL, branch, active)


def _fold(scenario, flags, initial_queue):
    steps = []
    q = initial_queue
    for i, (Q_i, on) in enumerate(zip(scenario.demand, flags)):
        s = step_delay(q, Q_i, scenario, on, i)
        steps.append(s)
        q = s.queue_out
    return tuple(steps)


def check_flags(scenario: WorkZoneScenario, flags: Sequence[bool]) -> list[bool]:
    flags = [bool(f) for f in flags]
    if len(flags) != len(scenario.demand):
        raise InputError(f"{len(flags)} flags for {len(scenario.demand)} demand steps")
    on = [i for i, f in enumerate(flags) if f]
    if not on:
        return flags  # no work zone inside this horizon: the run is its own baseline
    k = scenario.work_steps
    if len(on) != k or on[-1] - on[0] + 1 != k:
        raise InputError(f"work zone must be active for exactly {k} contiguous steps (or none)")
    return flags


def window_flags(n_steps: int, start: int, k: int) -> list[bool]:
    return [start <= i < start + k for i in range(n_steps)]


def run_scenario(scenario: WorkZoneScenario, workzone_active: Sequence[bool],
                 initial_queue: float = 0.0, strict: bool = True) -> DelayResult:
    """Total and added delay over the scenario horizon.

    Raises :class:`HorizonError` (carrying the partial result) when the
    horizon ends before the work-zone queue has drained back to the baseline
    queue, because the added delay would then be truncated.
    """
    flags = check_flags(scenario, workzone_active)
    check_non_negative("initial_queue", initial_queue)
    steps = _fold(scenario, flags, initial_queue)
    base = _fold(scenario, [False] * len(flags), initial_queue)
    total = math.fsum(s.DL for s in steps)
    baseline_total = math.fsum(s.DL for s in base)
    fq = steps[-1].queue_out if steps else initial_queue
    bq = base[-1].queue_out if base else initial_queue
    result = DelayResult(steps, base, total, baseline_total, total - baseline_total, fq, bq)
    if fq > bq + 1e-9 * max(1.0, bq):
        msg = (f"horizon ends with {fq:.1f} vehicles queued at the work zone "
               f"(baseline {bq:.1f}); extend the demand profile")
        if strict:
            raise HorizonError(msg, result)
        logger.warning(msg)
    return result


# --- files -----------------------------------------------------------------

def read_demand(path) -> list[float]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(DEMAND_HEADER) <= set(reader.fieldnames):
            raise InputError(f"{path}: expected columns {','.join(DEMAND_HEADER)}")
        rows = sorted((int(r["step_index"]), float(r["Q_pcu_per_h"])) for r in reader)
    if [i for i, _ in rows] != list(range(len(rows))):
        raise InputError(f"{path}: step_index must run 0..n-1 without gaps")
    return [q for _, q in rows]


def write_demand(demand, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(DEMAND_HEADER)
        for i, q in enumerate(demand):
            w.writerow([i, repr(float(q))])


def write_result(result: DelayResult, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_HEADER)
        for s in result.steps:
            w.writerow([s.i, repr(s.Q), repr(s.d1), repr(s.d2), repr(s.d3), repr(s.d4),
                        repr(s.D4), repr(s.queue_out), repr(s.DL)])


@dataclass(frozen=True)
class ScenarioFile:
    scenario: WorkZoneScenario
    start_step: int
    periodic: bool = False  # demand is one repeating day


def load_scenario(path) -> ScenarioFile:
    """Read a scenario from a key-value file.

    ``[scenario]`` holds V1, V2, a1, a2, L, T, normal_capacity, t_d (hours) or
    t_d_min, start_step, periodic (yes when the demand CSV is one repeating
    day), and ``demand`` (a CSV path relative to the file).
    ``capacity`` may be given directly or computed from a ``[workzone]``
    section of capacity factors.
    """
    from roadwork.flow import load_workzone_inputs, workzone_capacity

    path = Path(path)
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read scenario file {path}")
    if not cp.has_section("scenario"):
        raise ConfigError(f"{path}: missing [scenario] section")
    sec = cp["scenario"]

    def num(key, default=None):
        if key not in sec:
            if default is None:
                raise ConfigError(f"{path}: missing {key!r}")
            return default
        try:
            return float(sec[key])
        except ValueError:
            raise ConfigError(f"{path}: {key}={sec[key]!r} is not a number") from None

    if "t_d" in sec:
        t_d = num("t_d")
    elif "t_d_min" in sec:
        t_d = num("t_d_min") / 60.0
    else:
        raise ConfigError(f"{path}: missing 't_d' or 't_d_min'")
    if "capacity" in sec:
        capacity = num("capacity")
    elif cp.has_section("workzone"):
        capacity = workzone_capacity(load_workzone_inputs(path)).total
    else:
        raise ConfigError(f"{path}: give 'capacity' or a [workzone] section")
    if "demand" not in sec:
        raise ConfigError(f"{path}: missing 'demand' CSV path")
    demand_path = path.parent / sec["demand"]
    if not demand_path.exists():
        raise ConfigError(f"{path}: demand file {demand_path} not found")
    try:
        scenario = WorkZoneScenario(
            V1=num("V1"), V2=num("V2"), a1=num("a1"), a2=num("a2"), L=num("L"), T=num("T"),
            capacity=capacity, normal_capacity=num("normal_capacity"), t_d=t_d,
            demand=read_demand(demand_path),
        )
    except InputError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        periodic = sec.getboolean("periodic", fallback=False)
    except ValueError:
        raise ConfigError(f"{path}: periodic must be yes/no") from None
    return ScenarioFile(scenario, int(num("start_step", 0.0)), periodic)
