"""Work-zone start-time optimization from real-time traffic map tiles."""

from roadwork.calib import (
    QuantizationTable,
    StatusGaussian,
    StatusQuantizer,
    build_table,
    fit_status_gaussians,
    gaussian_boundary,
    quantify,
)
from roadwork.delay import WorkZoneScenario, run_scenario, step_delay
from roadwork.errors import ConfigError, InputError, RoadworkError
from roadwork.flow import (
    FlowModelParams,
    SpeedToVolume,
    invert_practical,
    practical_speed,
    workzone_capacity,
)
from roadwork.geo import GeoPoint, TileAddress, discretize, geo_to_tile, tile_to_geo
from roadwork.status import TrafficStatus
from roadwork.sweep import StartTimeOptimizer, SweepSpec

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FlowModelParams",
    "GeoPoint",
    "InputError",
    "QuantizationTable",
    "RoadworkError",
    "SpeedToVolume",
    "StartTimeOptimizer",
    "StatusGaussian",
    "StatusQuantizer",
    "SweepSpec",
    "TileAddress",
    "TrafficStatus",
    "WorkZoneScenario",
    "build_table",
    "discretize",
    "fit_status_gaussians",
    "gaussian_boundary",
    "geo_to_tile",
    "invert_practical",
    "practical_speed",
    "quantify",
    "run_scenario",
    "step_delay",
    "sweep",
    "tile_to_geo",
    "workzone_capacity",
]
