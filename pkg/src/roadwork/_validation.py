"""Input validation helpers shared by the estimators and the plain functions."""

import math

import numpy as np

from roadwork.errors import InputError


def check_positive(name, value):
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise InputError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_non_negative(name, value):
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise InputError(f"{name} must be a non-negative finite number, got {value!r}")
    return value


def check_factor(name, value, upper=1.2):
    value = float(value)
    if not (0 < value <= upper):
        raise InputError(f"{name} must lie in (0, {upper}], got {value!r}")
    return value


def check_1d(X, name="X", dtype=float):
    """Accept a scalar, list, 1-D array or single-column 2-D array and return a 1-D array."""
    arr = np.asarray(X, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    elif arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    elif arr.ndim != 1:
        raise InputError(f"{name} must be 1-D or a single column, got shape {arr.shape}")
    if dtype is float and not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def check_statuses(y, name="y"):
    from roadwork.status import TrafficStatus

    arr = np.asarray(y, dtype=object)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim == 0:
        arr = arr.reshape(1)
    try:
        return [TrafficStatus.parse(v) for v in arr]
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from None
