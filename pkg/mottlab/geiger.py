#!/usr/bin/env python3
"""
Geiger counter window-collimation flux models

Count rate against source-to-window distance g for four hypotheses about
where the alpha wavefunction collimates: at the source (geometric), at the
air-window interface (case i), at the window-gas interface (case ii), or inside
the window (case iii). Lengths are in mm; S*Z is the window thickness expressed
as an equivalent slowing distance in air.

Fluxes are unnormalised. Curves are compared after averaging over the source
extent and dividing by the value at a common normalisation distance.
"""

import csv
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple

import numpy as np

from .errors import DataError, DomainError, NumericalError
from .fitting import golden_section

logger = logging.getLogger("mottlab-geiger")

# cases i and ii at contact, where -ln(cos(pi/2)) diverges
DIVERGENT_AT_CONTACT = math.inf

COUNT_CSV_HEADER = ["g_mm", "count_rate"]


class ModelKind(str, Enum):
    GEOMETRIC = "geometric"
    CASE_I = "case_i"
    CASE_II = "case_ii"
    CASE_III = "case_iii"


ALL_KINDS = tuple(ModelKind)


@dataclass
class GeigerGeometry:
    """
    Window and stopping parameters (mm, S dimensionless).

    slowing_scale_s may be 0 to switch window slowing off entirely.
    """

    window_radius_w: float = 4.5
    window_thickness_z: float = 0.016
    slowing_scale_s: float = 1000.0
    stopping_distance_l: float = 38.0
    source_extent: float = 3.0

    def __post_init__(self):
        if self.window_radius_w <= 0 or self.window_thickness_z <= 0:
            raise DomainError("window radius and thickness must be positive")
        if self.stopping_distance_l <= 0 or self.source_extent <= 0:
            raise DomainError("stopping distance and source extent must be positive")
        if self.slowing_scale_s < 0:
            raise DomainError("slowing scale must be nonnegative")
        if self.sz >= self.stopping_distance_l:
            raise DomainError(
                f"window stops every alpha: S*Z = {self.sz} mm >= L = {self.stopping_distance_l} mm"
            )

    @property
    def sz(self) -> float:
        """Window thickness as air-equivalent slowing distance (mm)."""
        return self.slowing_scale_s * self.window_thickness_z

    @property
    def slowing_ratio(self) -> float:
        return self.sz / self.stopping_distance_l

    def with_sz(self, sz: float) -> "GeigerGeometry":
        return replace(self, slowing_scale_s=sz / self.window_thickness_z)


@dataclass
class BranchJump:
    g_star: float
    far: float
    near: float
    jump: float


def _theta(kind: ModelKind, g: np.ndarray, geom: GeigerGeometry) -> np.ndarray:
    window = np.arctan2(geom.window_radius_w, g)
    if kind is ModelKind.GEOMETRIC:
        ratio = (g + geom.sz) / geom.stopping_distance_l
        stopping = np.arccos(np.clip(ratio, -1.0, 1.0))
        return np.where(ratio >= 1.0, 0.0, np.minimum(window, stopping))
    if kind is ModelKind.CASE_I:
        return np.minimum(window, math.acos(geom.slowing_ratio))
    if kind is ModelKind.CASE_II:
        return window
    raise DomainError("case_iii has no single limiting angle")


def theta_limit(kind: ModelKind, g: float, geom: GeigerGeometry) -> float:
    """Limiting cone angle (rad) for the geometric model and cases i and ii."""
    if g < 0:
        raise DomainError("source-to-window distance must be nonnegative")
    return float(_theta(ModelKind(kind), np.asarray(float(g)), geom))


def _case_iii(g: np.ndarray, geom: GeigerGeometry) -> np.ndarray:
    s = geom.slowing_ratio
    if s == 0.0:
        return np.zeros_like(g)
    w = geom.window_radius_w
    g_star = w * s / math.sqrt(1.0 - s * s)
    with np.errstate(divide="ignore"):
        far = s * np.log1p(w * w / (g * g))
    near = (s - g / np.sqrt(g * g + w * w)) - s * math.log(s)
    return np.where(g > g_star, far, near)


def _flux_array(kind: ModelKind, g: np.ndarray, geom: GeigerGeometry) -> np.ndarray:
    if kind is ModelKind.CASE_III:
        return _case_iii(g, geom)
    theta = _theta(kind, g, geom)
    if kind is ModelKind.GEOMETRIC:
        return 1.0 - np.cos(theta)
    flux = 0.5 * np.log1p(np.tan(theta) ** 2)
    return np.where(theta >= math.pi / 2.0, DIVERGENT_AT_CONTACT, flux)


def flux(kind: ModelKind, g: float, geom: GeigerGeometry) -> float:
    """
    Unnormalised flux into the tube with the source at distance g (mm).

    geometric: 1 - cos(theta); cases i and ii: -ln(cos(theta)); case iii: the
    two-branch window-interior expression, switching at
    g* = W*s/sqrt(1 - s^2) with s = S*Z/L. Cases i and ii at contact return
    DIVERGENT_AT_CONTACT.
    """
    kind = ModelKind(kind)
    if g < 0:
        raise DomainError("source-to-window distance must be nonnegative")
    value = float(_flux_array(kind, np.asarray(float(g)), geom))
    if math.isinf(value):
        logger.warning(f"{kind.value} flux diverges with the source touching the window")
    return value


def case_iii_branch_jump(geom: GeigerGeometry) -> BranchJump:
    """
    Both case iii branches evaluated at the switch distance g*.

    The far branch gives -2*s*ln(s), the near branch -s*ln(s); the jump s*|ln s|
    is part of the expressions as given, not a numerical artefact.
    """
    s = geom.slowing_ratio
    if not 0.0 < s < 1.0:
        raise DomainError("case iii branches need 0 < S*Z/L < 1")
    w = geom.window_radius_w
    g_star = w * s / math.sqrt(1.0 - s * s)
    far = s * math.log1p(w * w / (g_star * g_star))
    near = (s - g_star / math.hypot(g_star, w)) - s * math.log(s)
    return BranchJump(g_star=g_star, far=far, near=near, jump=abs(far - near))


def _window_primitive(x: np.ndarray, w: float) -> np.ndarray:
    """Antiderivative of 0.5*ln(1 + w^2/x^2), zero at x = 0."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    log_term = np.where(x > 0, 0.5 * x * np.log1p(w * w / (safe * safe)), 0.0)
    return log_term + w * np.arctan(x / w)


def _flux_primitive(kind: ModelKind, x: np.ndarray, geom: GeigerGeometry) -> np.ndarray:
    """Antiderivative in g of the case i, ii and iii fluxes, zero at g = 0."""
    w = geom.window_radius_w
    s = geom.slowing_ratio
    if kind is ModelKind.CASE_II or (kind is ModelKind.CASE_I and s == 0.0):
        return _window_primitive(x, w)
    if kind is ModelKind.CASE_III and s == 0.0:
        return np.zeros_like(np.asarray(x, dtype=float))
    # g_break is both the case i plateau end and the case iii switch g*
    g_break = w * s / math.sqrt(1.0 - s * s)
    if kind is ModelKind.CASE_I:
        plateau = -math.log(s)
        beyond = plateau * g_break + _window_primitive(x, w) - _window_primitive(g_break, w)
        return np.where(x <= g_break, plateau * x, beyond)

    def near(t):
        return (s - s * math.log(s)) * t - np.sqrt(t * t + w * w) + w

    far = near(g_break) + 2.0 * s * (_window_primitive(x, w) - _window_primitive(g_break, w))
    return np.where(x <= g_break, near(x), far)


def source_averaged_flux(
    kind: ModelKind, g: float, geom: GeigerGeometry, n_nodes: int = 64
) -> float:
    """
    Mean of the flux over source positions [g, g + extent].

    Cases i, ii and iii are averaged exactly through their antiderivatives, which
    keeps the integrable contact divergence finite and exact. The geometric model
    is bounded and uses an n_nodes midpoint rule.
    """
    if n_nodes < 1:
        raise DomainError("n_nodes must be at least 1")
    if g < 0:
        raise DomainError("source-to-window distance must be nonnegative")
    kind = ModelKind(kind)
    extent = geom.source_extent
    if kind is ModelKind.GEOMETRIC:
        offsets = extent * (np.arange(n_nodes) + 0.5) / n_nodes
        return float(np.mean(_flux_array(kind, g + offsets, geom)))
    ends = _flux_primitive(kind, np.array([g, g + extent]), geom)
    return float((ends[1] - ends[0]) / extent)


def averaged_curve(
    kind: ModelKind, g_grid: Sequence[float], geom: GeigerGeometry, n_nodes: int = 64
) -> np.ndarray:
    return np.array([source_averaged_flux(kind, g, geom, n_nodes) for g in g_grid])


def normalized_curves(
    kinds: Sequence[ModelKind],
    g_grid: Sequence[float],
    g_norm: float,
    geom: GeigerGeometry,
    n_nodes: int = 64,
    prefactors: Optional[Mapping[ModelKind, float]] = None,
) -> Dict[ModelKind, np.ndarray]:
    """
    Source-averaged curves divided by their own value at g_norm.

    prefactors multiplies each model's flux by an arbitrary positive constant;
    the normalised curves do not depend on it.

    Raises:
        NumericalError: a model has zero flux at g_norm
    """
    if g_norm < 0:
        raise DomainError("normalisation distance must be nonnegative")
    curves = {}
    for kind in map(ModelKind, kinds):
        factor = 1.0 if prefactors is None else float(prefactors.get(kind, 1.0))
        if factor <= 0:
            raise DomainError(f"prefactor for {kind.value} must be positive")
        reference = factor * source_averaged_flux(kind, g_norm, geom, n_nodes)
        if reference <= 0:
            raise NumericalError(
                f"{kind.value} flux is zero at g = {g_norm} mm (S*Z = {geom.sz} mm, "
                f"L = {geom.stopping_distance_l} mm); cannot normalise there"
            )
        curves[kind] = factor * averaged_curve(kind, g_grid, geom, n_nodes) / reference
    return curves


def blended_curve(
    weights: Mapping[ModelKind, float],
    g_grid: Sequence[float],
    g_norm: float,
    geom: GeigerGeometry,
    n_nodes: int = 64,
) -> np.ndarray:
    """Mixture of normalised curves for cases acting in tandem; 1 at g_norm."""
    weights = {ModelKind(k): float(w) for k, w in weights.items()}
    if any(w < 0 for w in weights.values()) or sum(weights.values()) <= 0:
        raise DomainError("blend weights must be nonnegative with a positive sum")
    curves = normalized_curves(list(weights), g_grid, g_norm, geom, n_nodes)
    total = sum(weights.values())
    return sum(w * curves[k] for k, w in weights.items()) / total


@dataclass
class StoppingFit:
    sz_equiv_mm: float
    objective: float
    evals: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "sz_equiv_mm": self.sz_equiv_mm,
            "objective": self.objective,
            "evals": self.evals,
            "converged": self.converged,
        }


def _normalized_misfit(model: np.ndarray, rates: np.ndarray) -> float:
    # data are divided by their least-squares amplitude against the model
    amplitude = float(rates @ model) / float(model @ model)
    if amplitude <= 0:
        return math.inf
    return float(np.sqrt(np.mean((rates / amplitude - model) ** 2)))


def fit_stopping_equiv(
    data: Sequence[Tuple[float, float]],
    kind: ModelKind,
    geom_template: GeigerGeometry,
    bounds: Tuple[float, float] = (1.0, 37.0),
    n_nodes: int = 64,
    tolerance: float = 1e-3,
    max_evals: int = 200,
) -> StoppingFit:
    """
    Fit the window's air-equivalent slowing distance S*Z to count-rate data.

    The model curve is normalised at the smallest measured distance and the data
    by their least-squares amplitude; the objective is the RMS difference.
    """
    kind = ModelKind(kind)
    if len(data) < 3:
        raise DataError("need at least three (g, count_rate) points")
    g = np.array([p[0] for p in data], dtype=float)
    rates = np.array([p[1] for p in data], dtype=float)
    if np.ptp(g) == 0:
        raise DataError("all data points share the same distance g")
    lo, hi = bounds
    if not 0 <= lo < hi < geom_template.stopping_distance_l:
        raise DomainError(f"S*Z bounds must satisfy 0 <= lo < hi < L, got {bounds}")
    g_norm = float(np.min(g))

    def misfit(sz: float) -> float:
        try:
            curve = normalized_curves([kind], g, g_norm, geom_template.with_sz(sz), n_nodes)[kind]
        except (DomainError, NumericalError):
            return math.inf
        return _normalized_misfit(curve, rates)

    search = golden_section(misfit, lo, hi, tolerance, max_evals)
    logger.info(f"S*Z fit ({kind.value}): {search.point['x']:.4f} mm, rms {search.value:.4g}")
    return StoppingFit(
        sz_equiv_mm=search.point["x"],
        objective=search.value,
        evals=search.evals,
        converged=search.converged,
    )


def read_count_data(source: Iterable[str]) -> List[Tuple[float, float]]:
    """Parse `g_mm,count_rate` rows; errors name the 1-based line."""
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != COUNT_CSV_HEADER:
        raise DataError(f"line 1: expected header {','.join(COUNT_CSV_HEADER)}, got {header}")
    rows = []
    for row in reader:
        line_no = reader.line_num
        if not row:
            continue
        if len(row) != 2:
            raise DataError(f"line {line_no}: expected 2 columns, got {len(row)}")
        try:
            g, rate = float(row[0]), float(row[1])
        except ValueError:
            raise DataError(f"line {line_no}: non-numeric value in {row}") from None
        if not (math.isfinite(g) and math.isfinite(rate)) or g < 0:
            raise DataError(f"line {line_no}: g must be finite and nonnegative")
        rows.append((g, rate))
    return rows


def write_curves_csv(
    stream: TextIO, g_grid: Sequence[float], curves: Mapping[ModelKind, np.ndarray]
) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["g_mm"] + [ModelKind(k).value for k in curves])
    columns = [np.asarray(c).tolist() for c in curves.values()]
    for i, g in enumerate(np.asarray(g_grid, dtype=float).tolist()):
        writer.writerow([repr(g)] + [repr(col[i]) for col in columns])
