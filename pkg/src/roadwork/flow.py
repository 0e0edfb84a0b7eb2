"""Speed-volume relations and capacity estimates.

Two speed-volume models are provided: the classic parabola derived from a
linear speed-density assumption, and the practical S-curve

    U = alpha1 * U_s / (1 + x**beta),  beta = alpha2 + alpha3 * x**3,  x = V / C

which stays meaningful for demand above capacity (x > 1). Converting an
observed speed to demand means inverting the S-curve numerically.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from roadwork._validation import (
    check_1d,
    check_factor,
    check_positive,
)
from roadwork.errors import ConfigError, InputError

DEFAULT_X_MAX = 2.0


@dataclass(frozen=True)
class ClassicModelParams:
    jam_density: float  # pcu/km
    zero_flow_speed: float  # km/h

    def __post_init__(self):
        check_positive("jam_density", self.jam_density)
        check_positive("zero_flow_speed", self.zero_flow_speed)


@dataclass(frozen=True)
class FlowModelParams:
    alpha1: float
    alpha2: float
    alpha3: float
    U_s: float  # design or measured free-flow speed, km/h
    C: float  # single-lane capacity, pcu/h

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3", "U_s", "C"):
            check_positive(name, getattr(self, name))

    @property
    def free_speed(self) -> float:
        """Speed asymptote at zero volume."""
        return self.alpha1 * self.U_s


def classic_volume(u: float, p: ClassicModelParams) -> float:
    if not 0 <= u <= p.zero_flow_speed:
        raise InputError(f"speed {u} outside [0, {p.zero_flow_speed}]")
    return p.jam_density * (u - u * u / p.zero_flow_speed)


def practical_speed(x: float, p: FlowModelParams) -> float:
    """Mean speed at volume/capacity ratio ``x``."""
    if x < 0:
        raise InputError(f"volume/capacity ratio must be >= 0, got {x}")
    if x == 0:
        return p.free_speed
    beta = p.alpha2 + p.alpha3 * x**3
    return p.free_speed / (1.0 + math.exp(beta * math.log(x)))


def invert_practical(
    u: float, p: FlowModelParams, x_max: float = DEFAULT_X_MAX, xtol: float = 1e-13
) -> float:
    """Per-lane volume (pcu/h) at which the practical model predicts speed ``u``.

    Bisection on x in [0, x_max]. ``xtol`` defaults well below 1e-6 so the
    recovered speed also matches ``u`` to about 1e-9 relative.
    """
    if not 0 < u < p.free_speed:
        raise InputError(f"speed {u} km/h has no solution; must lie in (0, {p.free_speed:g})")
    if not practical_speed(x_max, p) < u:
        raise InputError(
            f"x_max={x_max} does not bracket speed {u}: model speed there is "
            f"{practical_speed(x_max, p):.4g} km/h"
        )
    lo, hi = 0.0, float(x_max)
    # practical_speed decreases in x: speed(lo) > u > speed(hi)
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if practical_speed(mid, p) > u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) * p.C


class SpeedToVolume(TransformerMixin, BaseEstimator):
    """Transform quantified speeds (km/h) into approach demand (pcu/h).

    Wraps :func:`invert_practical` and scales the per-lane result by ``lanes``.
    Stateless; ``fit`` only validates the parameters.
    """

    def __init__(self, alpha1=1.0, alpha2=1.88, alpha3=4.90, U_s=80.0, C=2000.0, lanes=1,
                 x_max=DEFAULT_X_MAX):
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.alpha3 = alpha3
        self.U_s = U_s
        self.C = C
        self.lanes = lanes
        self.x_max = x_max

    @property
    def params(self) -> FlowModelParams:
        return FlowModelParams(self.alpha1, self.alpha2, self.alpha3, self.U_s, self.C)

    def fit(self, X=None, y=None):
        self.params_ = self.params
        if int(self.lanes) < 1:
            raise InputError(f"lanes must be >= 1, got {self.lanes}")
        return self

    def transform(self, X):
        params = getattr(self, "params_", None) or self.params
        speeds = check_1d(X)
        return np.array([invert_practical(u, params, self.x_max) for u in speeds]) * int(self.lanes)

    def inverse_transform(self, X):
        params = getattr(self, "params_", None) or self.params
        volumes = check_1d(X) / int(self.lanes)
        return np.array([practical_speed(v / params.C, params) for v in volumes])


# --- capacity ---------------------------------------------------------------

@dataclass(frozen=True)
class BaseCapacityInputs:
    v_BFF: float
    delta_v_w: float = 0.0
    delta_v_N: float = 0.0
    C_b: float = 1800.0
    f_HV: float = 1.0
    f_p: float = 1.0
    N: int = 1


@dataclass(frozen=True)
class WorkZoneCapacityInputs:
    C_bs: float
    f_n: float = 1.0
    f_lw: float = 1.0
    f_lc: float = 1.0
    f_HV: float = 1.0
    f_se: float = 1.0
    f_wi: float = 1.0
    f_ls: float = 1.0
    open_lanes: int = 1

    FACTORS = ("f_n", "f_lw", "f_lc", "f_HV", "f_se", "f_wi", "f_ls")


class Capacity(NamedTuple):
    per_lane: float
    total: float


def free_flow_speed(i: BaseCapacityInputs) -> float:
    v = i.v_BFF + i.delta_v_w + i.delta_v_N
    if not v > 0:
        raise InputError(f"corrected free-flow speed must be positive, got {v}")
    return v


def base_capacity(i: BaseCapacityInputs) -> Capacity:
    check_positive("C_b", i.C_b)
    check_factor("f_HV", i.f_HV, upper=1.0)
    check_factor("f_p", i.f_p, upper=1.0)
    if int(i.N) < 1:
        raise InputError(f"lane count N must be >= 1, got {i.N}")
    per_lane = i.C_b * i.f_HV * i.f_p
    return Capacity(per_lane, per_lane * int(i.N))


def workzone_capacity(i: WorkZoneCapacityInputs) -> Capacity:
    check_positive("C_bs", i.C_bs)
    if int(i.open_lanes) < 1:
        raise InputError(f"open_lanes must be >= 1, got {i.open_lanes}")
    per_lane = i.C_bs
    for name in WorkZoneCapacityInputs.FACTORS:
        per_lane *= check_factor(name, getattr(i, name))
    return Capacity(per_lane, per_lane * int(i.open_lanes))


# --- parameter files --------------------------------------------------------

PRESET_HEADER = ["design_speed", "C", "alpha1", "alpha2", "alpha3"]


def expressway_presets() -> dict[int, FlowModelParams]:
    """Bundled expressway parameter rows keyed by design speed (U_s = design speed)."""
    text = resources.files("roadwork.data").joinpath("expressway_presets.csv").read_text()
    rows = csv.DictReader(text.splitlines())
    out = {}
    for r in rows:
        v = float(r["design_speed"])
        out[int(v)] = FlowModelParams(
            float(r["alpha1"]), float(r["alpha2"]), float(r["alpha3"]), v, float(r["C"])
        )
    return out


def _section(cp, name, path):
    if not cp.has_section(name):
        raise ConfigError(f"{path}: missing [{name}] section")
    return cp[name]


def _get_float(sec, key, path, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"{path}: missing key {key!r} in [{sec.name}]")
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigError(f"{path}: {key}={sec[key]!r} is not a number") from None


def load_model_params(path) -> FlowModelParams:
    """Read ``[model]`` from a key-value file.

    Either all of alpha1/alpha2/alpha3/U_s/C are given, or ``design_speed``
    selects a bundled expressway preset whose values the other keys override.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read model parameter file {path}")
    sec = _section(cp, "model", path)
    base = {}
    if "design_speed" in sec:
        presets = expressway_presets()
        ds = int(_get_float(sec, "design_speed", path))
        if ds in presets:
            pr = presets[ds]
            base = dict(alpha1=pr.alpha1, alpha2=pr.alpha2, alpha3=pr.alpha3, U_s=pr.U_s, C=pr.C)
    vals = {k: _get_float(sec, k, path, base.get(k)) for k in ("alpha1", "alpha2", "alpha3", "U_s", "C")}
    try:
        return FlowModelParams(**vals)
    except InputError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_workzone_inputs(path, section="workzone") -> WorkZoneCapacityInputs:
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read {path}")
    sec = _section(cp, section, path)
    kwargs = {"C_bs": _get_float(sec, "C_bs", path)}
    for name in WorkZoneCapacityInputs.FACTORS:
        kwargs[name] = _get_float(sec, name, path, 1.0)
    kwargs["open_lanes"] = int(_get_float(sec, "open_lanes", path, 1.0))
    return WorkZoneCapacityInputs(**kwargs)
