#!/usr/bin/env python3
"""
Cloud chamber track-initiation model

Implements the Born-rule density of track starts, coeff * exp(-gamma*t) / (4*pi*r^2)
over a chamber volume, a seeded Monte Carlo sampler that realises it exactly,
the projection onto the camera plane, and the planar-radius CDF by adaptive
quadrature.

The camera looks straight down the z axis. A cylinder (Petri dish) has its axis
on z through the origin; a sphere is centred on the origin.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from scipy import integrate

from .errors import DataError, DomainError

logger = logging.getLogger("mottlab-chamber")

SAMPLE_CSV_HEADER = ["x_mm", "y_mm", "z_mm", "t_s"]
# slack for points that land on the boundary through rounding
_EDGE_TOLERANCE = 1e-9


@dataclass
class Cylinder:
    """Flat dish: radius around the z axis between floor and ceiling (mm)."""

    dish_radius: float
    floor_z: float
    ceiling_z: float

    def __post_init__(self):
        if self.dish_radius <= 0:
            raise DomainError(f"dish radius must be positive, got {self.dish_radius}")
        if self.ceiling_z <= self.floor_z:
            raise DomainError("ceiling must lie above the floor")

    @property
    def volume(self) -> float:
        return math.pi * self.dish_radius**2 * (self.ceiling_z - self.floor_z)

    @property
    def bottom_z(self) -> float:
        return self.floor_z

    @property
    def disk_radius(self) -> float:
        return self.dish_radius

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        rho2 = points[:, 0] ** 2 + points[:, 1] ** 2
        r_tol = self.dish_radius * (1.0 + _EDGE_TOLERANCE)
        return (
            (rho2 <= r_tol**2)
            & (points[:, 2] >= self.floor_z - _EDGE_TOLERANCE)
            & (points[:, 2] <= self.ceiling_z + _EDGE_TOLERANCE)
        )

    def z_bounds(self, x, y):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, self.floor_z), np.full_like(x, self.ceiling_z)

    def exit_distance(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        ox, oy, oz = origin
        dx, dy, dz = directions[:, 0], directions[:, 1], directions[:, 2]

        a = dx * dx + dy * dy
        b = 2.0 * (ox * dx + oy * dy)
        c = min(ox * ox + oy * oy - self.dish_radius**2, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            side = np.where(
                a > 0, (-b + np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))) / (2.0 * a), np.inf
            )
            top = np.where(dz > 0, (self.ceiling_z - oz) / dz, np.inf)
            bottom = np.where(dz < 0, (self.floor_z - oz) / dz, np.inf)
        return np.maximum(np.minimum(np.minimum(side, top), bottom), 0.0)

    def max_chord(self, origin: np.ndarray) -> float:
        rho = math.hypot(origin[0], origin[1])
        depth = max(origin[2] - self.floor_z, self.ceiling_z - origin[2])
        return math.hypot(rho + self.dish_radius, depth)

    def rescaled(self, radius: float) -> "Cylinder":
        return replace(self, dish_radius=radius)


@dataclass
class Sphere:
    """Ball of the given radius (mm) centred on the origin."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise DomainError(f"sphere radius must be positive, got {self.radius}")

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3

    @property
    def bottom_z(self) -> float:
        return -self.radius

    @property
    def disk_radius(self) -> float:
        return self.radius

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        r_tol = self.radius * (1.0 + _EDGE_TOLERANCE)
        return np.einsum("ij,ij->i", points, points) <= r_tol**2

    def z_bounds(self, x, y):
        half = np.sqrt(np.maximum(self.radius**2 - np.asarray(x) ** 2 - np.asarray(y) ** 2, 0.0))
        return -half, half

    def exit_distance(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        b = directions @ origin
        c = min(float(origin @ origin) - self.radius**2, 0.0)
        return np.maximum(-b + np.sqrt(np.maximum(b * b - c, 0.0)), 0.0)

    def max_chord(self, origin: np.ndarray) -> float:
        return self.radius + float(np.linalg.norm(origin))

    def rescaled(self, radius: float) -> "Sphere":
        return replace(self, radius=radius)


Shape = Union[Cylinder, Sphere]


@dataclass
class ScaleParams:
    """Lumped Born-rule coefficient and the decay rate it decays with."""

    coeff: float
    gamma: float

    def __post_init__(self):
        if self.coeff <= 0:
            raise DomainError(f"coefficient must be positive, got {self.coeff}")
        if self.gamma <= 0:
            raise DomainError(f"decay rate must be positive, got {self.gamma}")


@dataclass
class ChamberGeometry:
    """
    Sensitive volume plus source position (mm).

    cutoff_radius, when set, removes everything farther than that distance
    from the source; the truncated model that exposes a large-radius deficit.
    """

    shape: Shape
    source: Tuple[float, float, float] = (0.0, 0.0, 2.0)
    cutoff_radius: Optional[float] = None
    _origin: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.source = tuple(float(c) for c in self.source)
        if len(self.source) != 3:
            raise DomainError("source must be a 3-vector")
        self._origin = np.asarray(self.source, dtype=float)
        if not self.shape.contains(self._origin)[0]:
            raise DomainError(f"source {self.source} lies outside the chamber")
        if self.cutoff_radius is not None and self.cutoff_radius <= 0:
            raise DomainError(f"cutoff radius must be positive, got {self.cutoff_radius}")

    @classmethod
    def petri_dish(cls) -> "ChamberGeometry":
        """45 mm dish radius, 10 mm tall, source on the axis 2 mm above the floor."""
        return cls(shape=Cylinder(dish_radius=45.0, floor_z=0.0, ceiling_z=10.0))

    @property
    def origin(self) -> np.ndarray:
        return self._origin

    @property
    def source_height(self) -> float:
        return self.source[2] - self.shape.bottom_z

    @property
    def volume(self) -> float:
        volume = self.shape.volume
        if self.cutoff_radius is not None:
            volume = min(volume, 4.0 / 3.0 * math.pi * self.cutoff_radius**3)
        return volume

    def is_axisymmetric(self) -> bool:
        return math.hypot(self.source[0], self.source[1]) < 1e-12

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.shape.contains(points)
        if self.cutoff_radius is not None:
            distance = np.linalg.norm(points - self._origin, axis=1)
            inside &= distance <= self.cutoff_radius * (1.0 + _EDGE_TOLERANCE)
        return inside

    def exit_distance(self, directions: np.ndarray) -> np.ndarray:
        distance = self.shape.exit_distance(self._origin, directions)
        if self.cutoff_radius is not None:
            distance = np.minimum(distance, self.cutoff_radius)
        return distance

    def max_chord(self) -> float:
        chord = self.shape.max_chord(self._origin)
        if self.cutoff_radius is not None:
            chord = min(chord, self.cutoff_radius)
        return chord

    def edge_distance(self, phi):
        """Planar distance from the source to the projected boundary along azimuth phi."""
        ux, uy = np.cos(phi), np.sin(phi)
        dx, dy = -self.source[0], -self.source[1]
        along = ux * dx + uy * dy
        reach = along + np.sqrt(
            np.maximum(along * along - (dx * dx + dy * dy) + self.shape.disk_radius**2, 0.0)
        )
        if self.cutoff_radius is not None:
            reach = np.minimum(reach, self.cutoff_radius)
        return reach

    def max_planar_extent(self) -> float:
        extent = math.hypot(self.source[0], self.source[1]) + self.shape.disk_radius
        if self.cutoff_radius is not None:
            extent = min(extent, self.cutoff_radius)
        return extent

    def with_parameter(self, name: str, value: float) -> "ChamberGeometry":
        """Copy with one fitted parameter replaced."""
        if name == "source_height":
            x, y, _ = self.source
            return replace(self, source=(x, y, self.shape.bottom_z + value))
        if name == "dish_radius":
            return replace(self, shape=self.shape.rescaled(value))
        if name == "cutoff_radius":
            return replace(self, cutoff_radius=value)
        raise DomainError(f"unknown geometry parameter: {name}")


@dataclass
class TrackStart:
    position: Tuple[float, float, float]
    time: float


def track_density(x: Sequence[float], t: float, s: ScaleParams, g: ChamberGeometry) -> float:
    """Born-rule density of track starts, 1/(mm^3*s); zero outside the chamber."""
    point = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(point - g.origin))
    if r == 0.0:
        raise DomainError("track density diverges at the source")
    if t < 0:
        raise DomainError("time must be nonnegative")
    if not g.contains(point)[0]:
        return 0.0
    return s.coeff * math.exp(-s.gamma * t) / (4.0 * math.pi * r * r)


def _isotropic_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    cos_theta = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    sin_theta = np.sqrt(1.0 - cos_theta**2)
    return np.column_stack((sin_theta * np.cos(phi), sin_theta * np.sin(phi), cos_theta))


def _draw_stream(
    rng: np.random.Generator, n: int, gamma: float, g: ChamberGeometry
) -> Tuple[np.ndarray, np.ndarray]:
    # Accepting a direction with probability d_exit/d_max and then drawing the
    # radius uniformly on (0, d_exit] gives a density proportional to 1/r^2.
    d_max = g.max_chord()
    accepted = []
    count = 0
    while count < n:
        batch = max(256, 2 * (n - count))
        directions = _isotropic_directions(rng, batch)
        d_exit = g.exit_distance(directions)
        keep = rng.uniform(0.0, 1.0, batch) * d_max < d_exit
        directions, d_exit = directions[keep], d_exit[keep]
        radius = (1.0 - rng.uniform(0.0, 1.0, len(d_exit))) * d_exit
        points = g.origin + directions * radius[:, None]
        accepted.append(points[: n - count])
        count += len(accepted[-1])
    positions = np.concatenate(accepted)
    times = rng.exponential(1.0 / gamma, n)
    return positions, times


def stream_sizes(n: int, workers: int) -> List[int]:
    return [n // workers + (1 if i < n % workers else 0) for i in range(workers)]


def sample_positions(
    n: int, seed: int, s: ScaleParams, g: ChamberGeometry, workers: int = 1
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw n track starts as arrays (positions (n, 3) in mm, times (n,) in s).

    Worker i draws from numpy's SeedSequence(seed).spawn(workers)[i], i.e. the
    stream keyed by (seed, i), and takes stream_sizes(n, workers)[i] samples.
    Streams are concatenated in worker order, so the result depends on
    (seed, workers) and never on scheduling.
    """
    if n <= 0:
        raise DomainError(f"sample count must be positive, got {n}")
    if workers < 1:
        raise DomainError("at least one worker is required")
    if g.volume <= 0 or g.max_chord() <= 0:
        raise DomainError("chamber geometry has zero volume")

    streams = np.random.SeedSequence(seed).spawn(workers)
    sizes = stream_sizes(n, workers)

    def run(i):
        if sizes[i] == 0:
            return np.empty((0, 3)), np.empty(0)
        return _draw_stream(np.random.default_rng(streams[i]), sizes[i], s.gamma, g)

    if workers == 1:
        parts = [run(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(workers)))

    positions = np.concatenate([p for p, _ in parts])
    times = np.concatenate([t for _, t in parts])
    logger.info(f"Drew {n} track starts (seed={seed}, workers={workers})")
    return positions, times


def sample_track_starts(
    n: int, seed: int, s: ScaleParams, g: ChamberGeometry, workers: int = 1
) -> List[TrackStart]:
    """Seeded track starts following the Born-rule density on the chamber."""
    positions, times = sample_positions(n, seed, s, g, workers)
    return [
        TrackStart(position=tuple(p), time=t)
        for p, t in zip(positions.tolist(), times.tolist())
    ]


def planar_radius(ts: TrackStart, g: ChamberGeometry) -> float:
    """Distance from the source in the camera (x, y) plane."""
    return math.hypot(ts.position[0] - g.source[0], ts.position[1] - g.source[1])


def planar_radii(positions: np.ndarray, g: ChamberGeometry) -> np.ndarray:
    offsets = np.atleast_2d(positions)[:, :2] - np.asarray(g.source[:2])
    return np.hypot(offsets[:, 0], offsets[:, 1])


def _column_weight(g: ChamberGeometry, rho: float, phi: float) -> float:
    # Integral over z of 1/(rho^2 + z^2) through the chamber at planar offset
    # (rho, phi), times the area element rho: atan(z_hi/rho) - atan(z_lo/rho).
    x = g.source[0] + rho * math.cos(phi)
    y = g.source[1] + rho * math.sin(phi)
    lo, hi = g.shape.z_bounds(x, y)
    z_lo = float(lo) - g.source[2]
    z_hi = float(hi) - g.source[2]
    if g.cutoff_radius is not None:
        if rho >= g.cutoff_radius:
            return 0.0
        half = math.sqrt(g.cutoff_radius**2 - rho * rho)
        z_lo, z_hi = max(z_lo, -half), min(z_hi, half)
    if z_hi <= z_lo:
        return 0.0
    return math.atan2(z_hi, rho) - math.atan2(z_lo, rho)


def _mass_between(g: ChamberGeometry, a: float, b: float) -> float:
    """Unnormalised probability that the planar radius falls in [a, b]."""
    if b <= a:
        return 0.0
    if g.is_axisymmetric():
        edge = g.max_planar_extent()
        hi = min(b, edge)
        if hi <= a:
            return 0.0
        value, _ = integrate.quad(
            lambda rho: _column_weight(g, rho, 0.0), a, hi, epsabs=1e-12, epsrel=1e-10, limit=200
        )
        return 2.0 * math.pi * value
    value, _ = integrate.dblquad(
        lambda rho, phi: _column_weight(g, rho, phi),
        0.0,
        2.0 * math.pi,
        lambda phi: min(a, float(g.edge_distance(phi))),
        lambda phi: min(b, float(g.edge_distance(phi))),
        epsabs=1e-10,
        epsrel=1e-8,
    )
    return value


def model_cdf(g: ChamberGeometry, radii: Sequence[float]) -> np.ndarray:
    """
    Probability that a track starts within each planar radius (mm) of the source.

    The spatial density is integrated in planar polar coordinates around the
    source, with the vertical direction done in closed form. Time drops out
    because the density factorises.

    Raises:
        DataError: the grid is empty or not sorted ascending
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0:
        raise DataError("model CDF needs a nonempty radius grid")
    if np.any(np.diff(radii) < 0):
        raise DataError("radius grid must be sorted ascending")

    extent = g.max_planar_extent()
    total = _mass_between(g, 0.0, extent)
    if total <= 0:
        raise DomainError("chamber geometry has zero volume")

    cdf = np.empty_like(radii)
    mass = 0.0
    previous = 0.0
    for i, s in enumerate(radii):
        s_clipped = min(max(s, 0.0), extent)
        mass += _mass_between(g, previous, s_clipped)
        previous = max(previous, s_clipped)
        cdf[i] = 1.0 if s >= extent else mass / total
    cdf = np.clip(np.maximum.accumulate(cdf), 0.0, 1.0)
    logger.debug(f"model CDF on {radii.size} radii, total mass {total:.6g}")
    return cdf


def count_curve(g: ChamberGeometry, radii: Sequence[float], n: float) -> np.ndarray:
    """Model CDF expressed in counts for n total track starts."""
    return n * model_cdf(g, radii)


def write_samples_csv(stream: TextIO, positions: np.ndarray, times: np.ndarray) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SAMPLE_CSV_HEADER)
    for (x, y, z), t in zip(positions.tolist(), times.tolist()):
        writer.writerow([repr(x), repr(y), repr(z), repr(t)])
