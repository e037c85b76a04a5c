#!/usr/bin/env python3
"""
Measured track starts and their cumulative distribution

Ingests track-start pixel coordinates read off video frames, converts them to
mm around the source, compiles the empirical CDF of planar radii in counts,
and measures how far a model CDF lies from it.
"""

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Sequence, TextIO, Tuple

import numpy as np

from .errors import DataError

logger = logging.getLogger("mottlab-empirics")

TRACK_CSV_HEADER = ["frame", "x", "y"]
CDF_CSV_HEADER = ["radius_mm", "cumulative_count"]


class Metric(str, Enum):
    KS = "ks"
    RMS = "rms"


@dataclass
class TrackRecord:
    """Calibrated track start, mm relative to the source in the image plane."""

    frame_id: int
    x: float
    y: float


@dataclass
class EmpiricalCDF:
    radii: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.cumulative = np.asarray(self.cumulative, dtype=float)
        if self.radii.shape != self.cumulative.shape or self.radii.ndim != 1:
            raise DataError("radii and cumulative counts must be matching 1-D arrays")
        if self.radii.size == 0:
            raise DataError("empirical CDF needs at least one track")
        if np.any(np.diff(self.radii) < 0):
            raise DataError("radii must be sorted ascending")
        if np.any(np.diff(self.cumulative) < 0):
            raise DataError("cumulative counts must be nondecreasing")

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])


@dataclass
class ModelCurve:
    """A model CDF tabulated on a radius grid, in counts."""

    radii: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.radii.shape != self.counts.shape or self.radii.size == 0:
            raise DataError("model curve needs matching, nonempty radii and counts")
        if np.any(np.diff(self.radii) < 0):
            raise DataError("model curve radii must be sorted ascending")

    def at(self, radii: Sequence[float], side: str = "right") -> np.ndarray:
        """
        Linear interpolation between grid points.

        A repeated radius is a step; side="left" takes the count from below it,
        side="right" the count from above.
        """
        radii = np.asarray(radii, dtype=float)
        xp, fp = self.radii, self.counts
        span = 1e-9 * max(1.0, abs(xp[-1]))
        if radii.size and (radii.min() < xp[0] - span or radii.max() > xp[-1] + span):
            raise DataError(
                f"model grid [{xp[0]}, {xp[-1]}] mm does not cover data "
                f"range [{radii.min()}, {radii.max()}] mm"
            )
        if xp.size == 1:
            return np.full(radii.shape, fp[0])
        if side == "left":
            upper = np.clip(np.searchsorted(xp, radii, side="left"), 1, xp.size - 1)
            lower = upper - 1
        else:
            lower = np.clip(np.searchsorted(xp, radii, side="right") - 1, 0, xp.size - 2)
            upper = lower + 1
        width = xp[upper] - xp[lower]
        # zero width only at a step on the grid ends
        weight = np.where(
            width > 0,
            (radii - xp[lower]) / np.where(width > 0, width, 1.0),
            0.0 if side == "left" else 1.0,
        )
        weight = np.clip(weight, 0.0, 1.0)
        return np.where(weight >= 1.0, fp[upper], fp[lower] + weight * (fp[upper] - fp[lower]))


def _parse_number(text: str, line_no: int, column: str, kind=float):
    try:
        value = kind(text)
    except (TypeError, ValueError):
        raise DataError(f"line {line_no}: bad {column} value {text!r}") from None
    if kind is float and not np.isfinite(value):
        raise DataError(f"line {line_no}: {column} must be finite")
    return value


def ingest_tracks(
    source: Iterable[str],
    calibration: float,
    source_xy: Tuple[float, float],
) -> List[TrackRecord]:
    """
    Read `frame,x,y` pixel rows and convert them to mm around the source.

    Args:
        source: text stream or iterable of CSV lines, header included
        calibration: mm per pixel
        source_xy: source position in pixel coordinates

    Returns:
        records in input order

    Raises:
        DataError: non-positive calibration, bad header, or a malformed row
            (the message names the 1-based line number)
    """
    if not calibration > 0:
        raise DataError(f"calibration must be positive, got {calibration}")
    sx, sy = source_xy
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != TRACK_CSV_HEADER:
        raise DataError(f"line 1: expected header {','.join(TRACK_CSV_HEADER)}, got {header}")

    records = []
    for row in reader:
        line_no = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 3:
            raise DataError(f"line {line_no}: expected 3 columns, got {len(row)}")
        frame = _parse_number(row[0].strip(), line_no, "frame", int)
        x_px = _parse_number(row[1].strip(), line_no, "x")
        y_px = _parse_number(row[2].strip(), line_no, "y")
        records.append(
            TrackRecord(frame_id=frame, x=(x_px - sx) * calibration, y=(y_px - sy) * calibration)
        )
    logger.info(f"Ingested {len(records)} track starts")
    return records


def emit_tracks(
    records: Sequence[TrackRecord],
    stream: TextIO,
    calibration: float,
    source_xy: Tuple[float, float],
) -> None:
    """Write records back as `frame,x,y` pixel rows."""
    if not calibration > 0:
        raise DataError(f"calibration must be positive, got {calibration}")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRACK_CSV_HEADER)
    for record in records:
        writer.writerow(
            [
                record.frame_id,
                repr(record.x / calibration + source_xy[0]),
                repr(record.y / calibration + source_xy[1]),
            ]
        )


def empirical_cdf(records: Sequence[TrackRecord]) -> EmpiricalCDF:
    """Sorted planar radii with cumulative counts 1..N; ties are kept."""
    if not records:
        raise DataError("cannot build a CDF from zero tracks")
    radii = np.sort(np.hypot([r.x for r in records], [r.y for r in records]))
    return EmpiricalCDF(radii=radii, cumulative=np.arange(1, len(radii) + 1, dtype=float))


def cdf_from_radii(radii: Sequence[float]) -> EmpiricalCDF:
    radii = np.sort(np.asarray(radii, dtype=float))
    if radii.size == 0:
        raise DataError("cannot build a CDF from zero tracks")
    return EmpiricalCDF(radii=radii, cumulative=np.arange(1, radii.size + 1, dtype=float))


def cdf_distance(model: ModelCurve, data: EmpiricalCDF, metric: Metric = Metric.KS) -> float:
    """
    Distance between a model CDF and the data, both in counts, over the data radii.

    ks is the largest absolute difference on either side of every data step,
    rms the root-mean-square difference at the data radii.
    """
    metric = Metric(metric)
    if metric is Metric.KS:
        # between data steps the data are flat, so a monotone model is farthest
        # from them at a step's lower or upper end
        radii, first = np.unique(data.radii, return_index=True)
        last = np.append(first[1:], data.radii.size) - 1
        above = data.cumulative[last]
        below = np.where(first > 0, data.cumulative[np.maximum(first - 1, 0)], 0.0)
        return float(
            max(
                np.max(np.abs(model.at(radii, side="right") - above)),
                np.max(np.abs(model.at(radii, side="left") - below)),
            )
        )
    difference = model.at(data.radii) - data.cumulative
    return float(np.sqrt(np.mean(difference**2)))


def write_cdf_csv(stream: TextIO, cdf: EmpiricalCDF) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CDF_CSV_HEADER)
    for radius, count in zip(cdf.radii.tolist(), cdf.cumulative.tolist()):
        writer.writerow([repr(radius), int(count)])


def read_cdf_csv(stream: Iterable[str]) -> EmpiricalCDF:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != CDF_CSV_HEADER:
        raise DataError(f"line 1: expected header {','.join(CDF_CSV_HEADER)}")
    radii, counts = [], []
    for row in reader:
        line_no = reader.line_num
        if not row:
            continue
        if len(row) != 2:
            raise DataError(f"line {line_no}: expected 2 columns, got {len(row)}")
        radii.append(_parse_number(row[0], line_no, "radius_mm"))
        counts.append(_parse_number(row[1], line_no, "cumulative_count"))
    return EmpiricalCDF(radii=radii, cumulative=counts)
