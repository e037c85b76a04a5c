#!/usr/bin/env python3
"""
JSON run configuration

A run configuration is a JSON object with optional sections `chamber`,
`scale`, `simulate`, `fit` and `geiger`; each section is turned into the
dataclasses the modules take. Command-line flags override file values.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Optional, Tuple

from .chamber import ChamberGeometry, Cylinder, ScaleParams, Sphere
from .empirics import Metric
from .errors import ConfigError, MottlabError
from .fitting import COUNT_SCALE, FitConfig
from .geiger import ALL_KINDS, GeigerGeometry, ModelKind

logger = logging.getLogger("mottlab-config")

SECTIONS = ("chamber", "scale", "simulate", "fit", "geiger")
FORMATS = frozenset({"csv", "json", "svg"})

# 210Po: 138.4 d half-life
DEFAULT_GAMMA_PER_S = 5.797e-8


@dataclass
class SimulateSettings:
    n: Optional[int] = None
    workers: int = 1
    grid_points: int = 128


@dataclass
class FitSettings:
    data: Optional[str] = None
    calibration_mm_per_px: Optional[float] = None
    source_xy_px: Optional[Tuple[float, float]] = None
    fit: FitConfig = field(default_factory=FitConfig)


@dataclass
class GeigerSettings:
    geometry: GeigerGeometry = field(default_factory=GeigerGeometry)
    kinds: Tuple[ModelKind, ...] = ALL_KINDS
    g_max_mm: float = 40.0
    g_step_mm: float = 0.5
    g_norm_mm: float = 0.0
    n_nodes: int = 64
    data: Optional[str] = None
    sz_bounds_mm: Tuple[float, float] = (1.0, 37.0)


@dataclass
class RunConfig:
    geometry: ChamberGeometry = field(default_factory=ChamberGeometry.petri_dish)
    scale: ScaleParams = field(
        default_factory=lambda: ScaleParams(coeff=1.0, gamma=DEFAULT_GAMMA_PER_S)
    )
    simulate: SimulateSettings = field(default_factory=SimulateSettings)
    fit: FitSettings = field(default_factory=FitSettings)
    geiger: GeigerSettings = field(default_factory=GeigerSettings)
    out_dir: Path = Path(".")
    formats: FrozenSet[str] = FORMATS
    seed: Optional[int] = None


def parse_formats(text: str) -> FrozenSet[str]:
    formats = frozenset(f.strip() for f in text.split(",") if f.strip())
    if not formats or not formats <= FORMATS:
        raise ConfigError(f"formats must be a nonempty subset of {sorted(FORMATS)}, got {text!r}")
    return formats


def _section(raw: Dict[str, Any], name: str) -> Dict[str, Any]:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    return value


def geometry_from_config(section: Dict[str, Any]) -> ChamberGeometry:
    shape_name = section.get("shape", "cylinder")
    if shape_name == "cylinder":
        shape = Cylinder(
            dish_radius=float(section.get("dish_radius_mm", 45.0)),
            floor_z=float(section.get("floor_z_mm", 0.0)),
            ceiling_z=float(section.get("ceiling_z_mm", 10.0)),
        )
    elif shape_name == "sphere":
        shape = Sphere(radius=float(section.get("sphere_radius_mm", 45.0)))
    else:
        raise ConfigError(f"unknown chamber shape: {shape_name}")
    default_source = (0.0, 0.0, 2.0) if shape_name == "cylinder" else (0.0, 0.0, 0.0)
    cutoff = section.get("cutoff_radius_mm")
    return ChamberGeometry(
        shape=shape,
        source=tuple(section.get("source_mm", default_source)),
        cutoff_radius=None if cutoff is None else float(cutoff),
    )


def geiger_from_config(section: Dict[str, Any]) -> GeigerSettings:
    geometry = GeigerGeometry(
        window_radius_w=float(section.get("window_radius_mm", 4.5)),
        window_thickness_z=float(section.get("window_thickness_mm", 0.016)),
        slowing_scale_s=float(section.get("slowing_scale", 1000.0)),
        stopping_distance_l=float(section.get("stopping_distance_mm", 38.0)),
        source_extent=float(section.get("source_extent_mm", 3.0)),
    )
    try:
        kinds = tuple(ModelKind(k) for k in section.get("kinds", [k.value for k in ALL_KINDS]))
    except ValueError as e:
        raise ConfigError(f"geiger.kinds: {e}") from None
    return GeigerSettings(
        geometry=geometry,
        kinds=kinds,
        g_max_mm=float(section.get("g_max_mm", 40.0)),
        g_step_mm=float(section.get("g_step_mm", 0.5)),
        g_norm_mm=float(section.get("g_norm_mm", 0.0)),
        n_nodes=int(section.get("n_nodes", 64)),
        data=section.get("data"),
        sz_bounds_mm=tuple(section.get("sz_bounds_mm", (1.0, 37.0))),
    )


def fit_from_config(section: Dict[str, Any]) -> FitSettings:
    source_xy = section.get("source_xy_px")
    calibration = section.get("calibration_mm_per_px")
    try:
        metric = Metric(section.get("metric", "ks"))
    except ValueError:
        raise ConfigError("fit.metric must be 'ks' or 'rms'") from None
    return FitSettings(
        data=section.get("data"),
        calibration_mm_per_px=None if calibration is None else float(calibration),
        source_xy_px=None if source_xy is None else tuple(float(v) for v in source_xy),
        fit=FitConfig(
            free_params=tuple(section.get("free_params", [COUNT_SCALE])),
            bounds={k: tuple(v) for k, v in section.get("bounds", {}).items()},
            metric=metric,
            tolerance=float(section.get("tolerance", 1e-3)),
            max_evals=int(section.get("max_evals", 200)),
        ),
    )


def parse_config(raw: Dict[str, Any]) -> RunConfig:
    """Build a RunConfig from a decoded JSON object."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        scale = _section(raw, "scale")
        simulate = _section(raw, "simulate")
        n = simulate.get("n")
        return RunConfig(
            geometry=geometry_from_config(_section(raw, "chamber")),
            scale=ScaleParams(
                coeff=float(scale.get("coeff", 1.0)),
                gamma=float(scale.get("gamma_per_s", DEFAULT_GAMMA_PER_S)),
            ),
            simulate=SimulateSettings(
                n=None if n is None else int(n),
                workers=int(simulate.get("workers", 1)),
                grid_points=int(simulate.get("grid_points", 128)),
            ),
            fit=fit_from_config(_section(raw, "fit")),
            geiger=geiger_from_config(_section(raw, "geiger")),
        )
    except ConfigError:
        raise
    except MottlabError as e:
        raise ConfigError(f"invalid configuration: {e}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration value: {e}") from None


def load_config(path: Optional[Path]) -> RunConfig:
    """Read a JSON configuration file; None gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    logger.info(f"Loaded configuration from {path}")
    return parse_config(raw)
