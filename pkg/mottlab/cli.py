#!/usr/bin/env python3
"""
Command-line interface for mottlab

Subcommands:
  chamber-simulate   sample track starts and compare with the model CDF
  chamber-fit        fit the Born-rule model to measured track starts
  geiger-curves      tabulate normalised Geiger window models, optionally fit S*Z

Exit codes: 0 success, 2 usage, 3 data error, 4 numerical failure.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .artifacts import ArtifactWriter, Series, line_chart_svg
from .chamber import (
    count_curve,
    planar_radii,
    sample_positions,
    write_samples_csv,
)
from .config import RunConfig, load_config, parse_formats
from .empirics import (
    ModelCurve,
    cdf_distance,
    cdf_from_radii,
    empirical_cdf,
    ingest_tracks,
    write_cdf_csv,
)
from .errors import DataError, MottlabError, UsageError
from .fitting import COUNT_SCALE, GEOMETRY_PARAMS, fit_cutoff, fit_parameters, residual_rows
from .geiger import (
    ModelKind,
    fit_stopping_equiv,
    normalized_curves,
    read_count_data,
    write_curves_csv,
)

logger = logging.getLogger("mottlab-cli")

# polyline points kept when plotting a large empirical CDF
MAX_PLOT_POINTS = 2000


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for every random draw")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument(
        "--formats", default="csv,json,svg", help="comma-separated subset of csv,json,svg"
    )

    parser = argparse.ArgumentParser(
        prog="mottlab", description="Cloud chamber and Geiger window collimation models"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("chamber-simulate", parents=[common], help="sample track starts")
    simulate.add_argument("--n", type=int, help="number of track starts (overrides config)")
    simulate.add_argument("--workers", type=int, help="parallel sampling streams")

    fit = sub.add_parser("chamber-fit", parents=[common], help="fit measured track starts")
    fit.add_argument("--data", type=Path, help="CSV with header frame,x,y (pixels)")
    fit.add_argument("--calibration", type=float, help="mm per pixel")
    fit.add_argument("--source-xy", type=float, nargs=2, metavar=("X", "Y"), help="source pixel")
    fit.add_argument("--cutoff", action="store_true", help="also fit a large-radius cutoff")

    geiger = sub.add_parser("geiger-curves", parents=[common], help="Geiger window models")
    geiger.add_argument("--data", type=Path, help="CSV with header g_mm,count_rate")
    geiger.add_argument("--fit-sz", action="store_true", help="fit S*Z to the data")
    geiger.add_argument(
        "--fit-kind",
        default=ModelKind.CASE_I.value,
        choices=[k.value for k in ModelKind],
        help="model used by --fit-sz",
    )
    return parser


def _read_text(path: Path) -> List[str]:
    try:
        with open(path, encoding="utf-8", newline="") as f:
            return f.read().splitlines()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None


def _thin(x: np.ndarray, y: np.ndarray):
    if len(x) <= MAX_PLOT_POINTS:
        return x, y
    keep = np.unique(np.linspace(0, len(x) - 1, MAX_PLOT_POINTS).astype(int))
    return x[keep], y[keep]


def cmd_chamber_simulate(cfg: RunConfig, writer: ArtifactWriter) -> dict:
    """Sample track starts, tabulate model and sampled CDFs, stage the artifacts."""
    n = cfg.simulate.n
    if n is None or n <= 0:
        raise UsageError(f"chamber-simulate needs a positive sample count, got {n}")
    if cfg.seed is None:
        raise UsageError("chamber-simulate needs --seed")

    positions, times = sample_positions(
        n, cfg.seed, cfg.scale, cfg.geometry, workers=cfg.simulate.workers
    )
    sampled = cdf_from_radii(planar_radii(positions, cfg.geometry))
    grid = np.linspace(0.0, cfg.geometry.max_planar_extent(), cfg.simulate.grid_points)
    model = ModelCurve(grid, count_curve(cfg.geometry, grid, n))

    writer.add_csv("samples.csv", lambda f: write_samples_csv(f, positions, times))
    writer.add_csv("empirical_cdf.csv", lambda f: write_cdf_csv(f, sampled))
    writer.add_csv(
        "model_cdf.csv",
        lambda f: f.write(
            "radius_mm,model_count\n"
            + "".join(f"{r!r},{c!r}\n" for r, c in zip(grid.tolist(), model.counts.tolist()))
        ),
    )
    x, y = _thin(sampled.radii, sampled.cumulative)
    writer.add_text(
        "cdf_overlay.svg",
        "svg",
        line_chart_svg(
            [Series("Born-rule model", grid, model.counts), Series("sampled", x, y)],
            x_label="planar radius (mm)",
            y_label="cumulative counts",
            title="Track-start CDF",
        ),
    )
    summary = {
        "n": n,
        "seed": cfg.seed,
        "workers": cfg.simulate.workers,
        "ks_counts": cdf_distance(model, sampled),
        "source_mm": list(cfg.geometry.source),
        "cutoff_radius_mm": cfg.geometry.cutoff_radius,
    }
    writer.add_json("summary.json", summary)
    return summary


def cmd_chamber_fit(cfg: RunConfig, writer: ArtifactWriter, with_cutoff: bool) -> dict:
    """Ingest measured track starts, fit the model, stage FitResult and residuals."""
    settings = cfg.fit
    if settings.data is None:
        raise UsageError("chamber-fit needs --data")
    if settings.calibration_mm_per_px is None:
        raise UsageError("chamber-fit needs --calibration (mm per pixel)")
    if settings.source_xy_px is None:
        raise UsageError("chamber-fit needs --source-xy (source pixel coordinates)")

    records = ingest_tracks(
        _read_text(Path(settings.data)), settings.calibration_mm_per_px, settings.source_xy_px
    )
    data = empirical_cdf(records)
    result = fit_parameters(settings.fit, cfg.geometry, data)

    fitted = cfg.geometry
    for name in GEOMETRY_PARAMS:
        if name in result.params:
            fitted = fitted.with_parameter(name, result.params[name])
    if with_cutoff:
        result.cutoff = fit_cutoff(data, fitted, metric=settings.fit.metric)

    rows = residual_rows(fitted, data, result.params[COUNT_SCALE], settings.fit.grid_points)
    writer.add_json("fit_result.json", result.to_dict())
    writer.add_csv("empirical_cdf.csv", lambda f: write_cdf_csv(f, data))
    writer.add_csv(
        "residuals.csv",
        lambda f: f.write(
            "radius_mm,data_count,model_count,residual\n"
            + "".join(f"{r!r},{d!r},{m!r},{e!r}\n" for r, d, m, e in rows)
        ),
    )
    radii = np.array([r[0] for r in rows])
    model_counts = np.array([r[2] for r in rows])
    x, y = _thin(data.radii, data.cumulative)
    mx, my = _thin(radii, model_counts)
    writer.add_text(
        "fit_overlay.svg",
        "svg",
        line_chart_svg(
            [Series("Born-rule fit", mx, my), Series("measured", x, y)],
            x_label="planar radius (mm)",
            y_label="cumulative counts",
            title="Measured and fitted track-start CDF",
        ),
    )
    return result.to_dict()


def cmd_geiger_curves(
    cfg: RunConfig,
    writer: ArtifactWriter,
    data_path: Optional[Path],
    fit_sz: bool,
    fit_kind: ModelKind,
) -> dict:
    """Normalised model curves, optional data overlay and S*Z fit."""
    settings = cfg.geiger
    if settings.g_step_mm <= 0 or settings.g_max_mm <= 0:
        raise UsageError("geiger g_max_mm and g_step_mm must be positive")
    steps = int(round(settings.g_max_mm / settings.g_step_mm))
    g_grid = settings.g_step_mm * np.arange(steps + 1)
    curves = normalized_curves(
        settings.kinds, g_grid, settings.g_norm_mm, settings.geometry, settings.n_nodes
    )
    writer.add_csv("geiger_curves.csv", lambda f: write_curves_csv(f, g_grid, curves))

    data_path = data_path or (Path(settings.data) if settings.data else None)
    data = read_count_data(_read_text(data_path)) if data_path else None
    series = [Series(kind.value, g_grid, curve) for kind, curve in curves.items()]
    if data:
        g = np.array([p[0] for p in data])
        rates = np.array([p[1] for p in data])
        reference = rates[np.argmin(g)]
        if reference <= 0:
            raise DataError("count rate at the smallest distance must be positive")
        series.append(Series("data", g, rates / reference, markers=True))
    writer.add_text(
        "geiger_curves.svg",
        "svg",
        line_chart_svg(
            series,
            x_label="source-window distance g (mm)",
            y_label="normalised count rate",
            title="Geiger counter window models",
        ),
    )

    report = {"kinds": [k.value for k in curves], "g_norm_mm": settings.g_norm_mm}
    if fit_sz:
        if not data:
            raise UsageError("--fit-sz needs count-rate data (--data)")
        fit = fit_stopping_equiv(
            data,
            fit_kind,
            settings.geometry,
            bounds=settings.sz_bounds_mm,
            n_nodes=settings.n_nodes,
        )
        report["sz_fit"] = {"kind": fit_kind.value, **fit.to_dict()}
        writer.add_json("sz_fit.json", report["sz_fit"])
    return report


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    cfg = replace(cfg, out_dir=args.out, formats=parse_formats(args.formats))
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError("--seed must be a nonnegative integer")
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "n", None) is not None:
        cfg = replace(cfg, simulate=replace(cfg.simulate, n=args.n))
    if getattr(args, "workers", None) is not None:
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
        cfg = replace(cfg, simulate=replace(cfg.simulate, workers=args.workers))
    if args.command == "chamber-fit":
        fit = cfg.fit
        if args.data is not None:
            fit = replace(fit, data=str(args.data))
        if args.calibration is not None:
            fit = replace(fit, calibration_mm_per_px=args.calibration)
        if args.source_xy is not None:
            fit = replace(fit, source_xy_px=tuple(args.source_xy))
        cfg = replace(cfg, fit=fit)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        cfg = _apply_overrides(load_config(args.config), args)
        writer = ArtifactWriter(cfg.out_dir, cfg.formats)
        if args.command == "chamber-simulate":
            report = cmd_chamber_simulate(cfg, writer)
        elif args.command == "chamber-fit":
            report = cmd_chamber_fit(cfg, writer, args.cutoff)
        else:
            report = cmd_geiger_curves(
                cfg, writer, args.data, args.fit_sz, ModelKind(args.fit_kind)
            )
        written = writer.commit()
    except MottlabError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: cannot write artifacts: {e}", file=sys.stderr)
        return DataError.exit_code

    for path in written:
        print(f"✅ {path}")
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
