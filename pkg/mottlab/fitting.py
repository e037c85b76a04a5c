#!/usr/bin/env python3
"""
Fitting the Born-rule chamber model to measured track-start CDFs

The count scale (the lumped coefficient rho_c*A*tau) is solved in closed form
at every evaluation. Up to two geometry parameters are searched without
derivatives: golden section for one, coordinate descent of golden sections for
two. A separate scan fits a hard large-radius cutoff.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .chamber import ChamberGeometry, model_cdf
from .empirics import EmpiricalCDF, Metric, ModelCurve, cdf_distance
from .errors import DomainError, NumericalError, UsageError

logger = logging.getLogger("mottlab-fitting")

COUNT_SCALE = "count_scale"
GEOMETRY_PARAMS = ("source_height", "dish_radius", "cutoff_radius")
FREE_PARAMS = (COUNT_SCALE,) + GEOMETRY_PARAMS
PARAM_UNITS = {
    COUNT_SCALE: "counts",
    "source_height": "mm",
    "dish_radius": "mm",
    "cutoff_radius": "mm",
}
DEFAULT_BOUNDS = {
    "source_height": (0.5, 8.0),
    "dish_radius": (20.0, 80.0),
    "cutoff_radius": (5.0, 60.0),
}

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # 1/phi
INV_PHI_SQUARE = (3.0 - math.sqrt(5.0)) / 2.0  # 1/phi^2


@dataclass
class FitConfig:
    free_params: Tuple[str, ...] = (COUNT_SCALE,)
    bounds: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    metric: Metric = Metric.KS
    tolerance: float = 1e-3
    max_evals: int = 200
    grid_points: int = 256

    def __post_init__(self):
        self.free_params = tuple(self.free_params)
        unknown = set(self.free_params) - set(FREE_PARAMS)
        if unknown:
            raise UsageError(f"unknown free parameters: {sorted(unknown)}")
        if len(self.geometry_params) > 2:
            raise UsageError("at most two geometry parameters can be fitted together")
        self.metric = Metric(self.metric)
        merged = dict(DEFAULT_BOUNDS)
        merged.update({k: tuple(v) for k, v in self.bounds.items()})
        self.bounds = merged
        for name in self.geometry_params:
            lo, hi = self.bounds[name]
            if not lo < hi:
                raise UsageError(f"bounds for {name} need lo < hi, got ({lo}, {hi})")
        if not self.tolerance > 0:
            raise UsageError("tolerance must be positive")
        if self.max_evals < 1:
            raise UsageError("max_evals must be at least 1")
        if self.grid_points < 2:
            raise UsageError("grid_points must be at least 2")

    @property
    def geometry_params(self) -> Tuple[str, ...]:
        # fixed order keeps the coordinate-descent schedule deterministic
        return tuple(p for p in GEOMETRY_PARAMS if p in self.free_params)


@dataclass
class FitResult:
    params: Dict[str, float]
    objective: float
    evals: int
    converged: bool
    metric: Metric = Metric.KS
    cutoff: Optional["CutoffFit"] = None

    def to_dict(self) -> dict:
        out = {
            "params": {
                name: {"value": value, "unit": PARAM_UNITS[name]}
                for name, value in self.params.items()
            },
            "objective": self.objective,
            "metric": Metric(self.metric).value,
            "evals": self.evals,
            "converged": self.converged,
        }
        if self.cutoff is not None:
            out["cutoff"] = self.cutoff.to_dict()
        return out


@dataclass
class SearchResult:
    point: Dict[str, float]
    value: float
    evals: int
    converged: bool


@dataclass
class CutoffFit:
    cutoff_mm: float
    objective_with: float
    objective_without: float
    scan: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cutoff_mm": self.cutoff_mm,
            "objective_with": self.objective_with,
            "objective_without": self.objective_without,
        }


class _Budget:
    """Counts objective evaluations and remembers the best point seen."""

    def __init__(self, f: Callable[[float], float], limit: int):
        self.f = f
        self.limit = limit
        self.used = 0
        self.best_x = math.nan
        self.best_value = math.inf

    @property
    def exhausted(self) -> bool:
        return self.used >= self.limit

    def __call__(self, x: float) -> float:
        self.used += 1
        value = self.f(x)
        if value < self.best_value or math.isnan(self.best_x):
            self.best_x, self.best_value = x, value
        return value


def golden_section(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tolerance: float,
    budget: int,
) -> SearchResult:
    """
    Golden-section search for the minimum of f on [lo, hi].

    Stops once the bracket is narrower than tolerance (converged) or the budget
    of evaluations is spent (not converged). The evaluation sequence depends
    only on (lo, hi, tolerance), so a larger budget only extends it.
    """
    a, b = min(lo, hi), max(lo, hi)
    h = b - a
    if budget < 1:
        return SearchResult(point={"x": (a + b) / 2.0}, value=math.inf, evals=0, converged=False)
    tracked = _Budget(f, budget)
    if h <= tolerance:
        tracked((a + b) / 2.0)
        return SearchResult({"x": tracked.best_x}, tracked.best_value, tracked.used, True)

    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = tracked(c)
    yd = tracked(d) if not tracked.exhausted else math.inf
    while h > tolerance and not tracked.exhausted:
        if yc < yd:
            b, d, yd = d, c, yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = tracked(c)
        else:
            a, c, yc = c, d, yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = tracked(d)
        logger.debug(f"golden section bracket [{a:.6g}, {b:.6g}]")
    return SearchResult(
        point={"x": tracked.best_x},
        value=tracked.best_value,
        evals=tracked.used,
        converged=h <= tolerance,
    )


def coordinate_descent(
    f: Callable[[Mapping[str, float]], float],
    names: Sequence[str],
    bounds: Mapping[str, Tuple[float, float]],
    tolerance: float,
    budget: int,
) -> SearchResult:
    """
    Minimise f over a box, one coordinate at a time by golden section.

    Starts at the box centre and sweeps the coordinates in the given order.
    Converges when a full sweep moves no coordinate by more than tolerance.
    """
    point = {name: (bounds[name][0] + bounds[name][1]) / 2.0 for name in names}
    value = f(point)
    used = 1
    converged = False
    while used < budget:
        moved = 0.0
        sweep_converged = True
        for name in names:
            if used >= budget:
                sweep_converged = False
                break

            def along(x, name=name):
                return f({**point, name: x})

            line = golden_section(along, *bounds[name], tolerance, budget - used)
            used += line.evals
            sweep_converged &= line.converged
            if line.value < value:
                moved = max(moved, abs(line.point["x"] - point[name]))
                point = {**point, name: line.point["x"]}
                value = line.value
        logger.debug(f"coordinate sweep: {point} -> {value:.6g}")
        if sweep_converged and moved < tolerance:
            converged = True
            break
    return SearchResult(point=point, value=value, evals=used, converged=converged)


def fit_count_scale(model_shape: Sequence[float], data: EmpiricalCDF) -> float:
    """
    Least-squares count scale sum(m*d)/sum(m^2) of a probability-unit model
    shape against the data counts on the same radii.
    """
    m = np.asarray(model_shape, dtype=float)
    d = np.asarray(data.cumulative, dtype=float)
    if m.shape != d.shape:
        raise DomainError("model shape and data must share the same radii")
    norm = float(m @ m)
    if norm == 0.0:
        raise NumericalError("model shape is identically zero; no count scale fits")
    return float(m @ d) / norm


def _grid(data: EmpiricalCDF, grid_points: int) -> np.ndarray:
    return np.linspace(0.0, float(data.radii[-1]), grid_points)


def _scaled_distance(
    geometry: ChamberGeometry,
    data: EmpiricalCDF,
    grid: np.ndarray,
    metric: Metric,
) -> Tuple[float, float]:
    shape = model_cdf(geometry, grid)
    at_data = np.interp(data.radii, grid, shape)
    scale = fit_count_scale(at_data, data)
    distance = cdf_distance(ModelCurve(grid, scale * shape), data, metric)
    return distance, scale


def fit_parameters(
    cfg: FitConfig,
    geometry_template: ChamberGeometry,
    data: EmpiricalCDF,
    objective: Optional[Callable[[Mapping[str, float]], float]] = None,
) -> FitResult:
    """
    Fit the count scale and up to two geometry parameters to the data CDF.

    Args:
        cfg: free parameters, bounds, metric, tolerance and evaluation budget
        geometry_template: geometry supplying every parameter that is not free
        data: measured CDF in counts
        objective: replaces the model-vs-data distance; takes the geometry
            parameters as a mapping (used to exercise the search alone)

    Returns:
        FitResult; an exhausted budget yields converged=False, never an exception
    """
    names = cfg.geometry_params
    grid = _grid(data, cfg.grid_points)
    scales: Dict[Tuple[float, ...], float] = {}

    def distance(point: Mapping[str, float]) -> float:
        if objective is not None:
            return float(objective(point))
        try:
            geometry = geometry_template
            for name in names:
                geometry = geometry.with_parameter(name, point[name])
            value, scale = _scaled_distance(geometry, data, grid, cfg.metric)
        except (DomainError, NumericalError) as e:
            logger.debug(f"geometry {dict(point)} rejected: {e}")
            return math.inf
        scales[tuple(point[n] for n in names)] = scale
        return value

    if not names:
        value = distance({})
        search = SearchResult(point={}, value=value, evals=1, converged=True)
    elif len(names) == 1:
        (name,) = names
        line = golden_section(
            lambda x: distance({name: x}), *cfg.bounds[name], cfg.tolerance, cfg.max_evals
        )
        search = SearchResult({name: line.point["x"]}, line.value, line.evals, line.converged)
    else:
        search = coordinate_descent(distance, names, cfg.bounds, cfg.tolerance, cfg.max_evals)

    params = dict(search.point)
    if objective is None:
        params = {COUNT_SCALE: scales.get(tuple(params[n] for n in names), math.nan), **params}
    if not search.converged:
        logger.warning(f"Fit stopped after {search.evals} evaluations without converging")
    logger.info(f"Fit {params} objective={search.value:.6g} evals={search.evals}")
    return FitResult(
        params=params,
        objective=search.value,
        evals=search.evals,
        converged=search.converged,
        metric=cfg.metric,
    )


def fit_cutoff(
    data: EmpiricalCDF,
    geometry: ChamberGeometry,
    metric: Metric = Metric.KS,
    step: float = 0.5,
    scan_from: Optional[float] = None,
    tolerance: float = 0.01,
    grid_points: int = 256,
    workers: int = 4,
) -> CutoffFit:
    """
    Fit a hard cutoff radius (mm from the source) beyond which no track starts.

    Candidate cutoffs are scanned every `step` mm from `scan_from` (default: one
    step) up to the longest chord of the untruncated chamber, evaluated on a
    thread pool, and the best bracket is refined by golden section. The count
    scale is re-solved for every candidate.
    """
    metric = Metric(metric)
    grid = _grid(data, grid_points)
    base = geometry.with_parameter("cutoff_radius", None) if geometry.cutoff_radius else geometry
    objective_without, _ = _scaled_distance(base, data, grid, metric)

    def with_cutoff(c: float) -> float:
        try:
            value, _ = _scaled_distance(base.with_parameter("cutoff_radius", c), data, grid, metric)
        except (DomainError, NumericalError):
            return math.inf
        return value

    start = scan_from if scan_from is not None else step
    stop = base.max_chord()
    if not step > 0:
        raise UsageError(f"cutoff scan step must be positive, got {step}")
    candidates = np.arange(start, stop + step, step).tolist()
    if not candidates:
        # a scan starting past the chamber is a single inert cutoff
        candidates = [start]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(with_cutoff, candidates))
    else:
        values = [with_cutoff(c) for c in candidates]

    best = int(np.argmin(values))
    cutoff, objective_with = candidates[best], values[best]
    lo = max(start, cutoff - step)
    hi = cutoff + step
    refined = golden_section(with_cutoff, lo, hi, tolerance, budget=100)
    if refined.value < objective_with:
        cutoff, objective_with = refined.point["x"], refined.value

    logger.info(
        f"Cutoff fit: {cutoff:.3f} mm, objective {objective_with:.6g} "
        f"(without cutoff {objective_without:.6g})"
    )
    return CutoffFit(
        cutoff_mm=cutoff,
        objective_with=objective_with,
        objective_without=objective_without,
        scan=list(zip(candidates, values)),
    )


def residual_rows(
    geometry: ChamberGeometry, data: EmpiricalCDF, scale: float, grid_points: int = 256
) -> List[Tuple[float, float, float, float]]:
    """(radius_mm, data_count, model_count, residual) at every data radius."""
    grid = _grid(data, grid_points)
    model = scale * np.interp(data.radii, grid, model_cdf(geometry, grid))
    return [
        (r, d, m, d - m)
        for r, d, m in zip(data.radii.tolist(), data.cumulative.tolist(), model.tolist())
    ]
