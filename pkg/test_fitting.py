#!/usr/bin/env python3
"""
Tests for the derivative-free searches and the chamber fits.
"""

import math
import os
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

# Add the mottlab package to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "."))

from mottlab.chamber import ChamberGeometry, ScaleParams, Sphere, planar_radii, sample_positions
from mottlab.empirics import EmpiricalCDF, Metric, ModelCurve, cdf_distance, cdf_from_radii
from mottlab.errors import NumericalError, UsageError
from mottlab.fitting import (
    COUNT_SCALE,
    CutoffFit,
    FitConfig,
    FitResult,
    coordinate_descent,
    fit_count_scale,
    fit_cutoff,
    fit_parameters,
    golden_section,
    residual_rows,
)

SCALE = ScaleParams(coeff=1.0, gamma=5.797e-8)


def synthetic_cdf(geometry: ChamberGeometry, n: int, seed: int) -> EmpiricalCDF:
    positions, _ = sample_positions(n, seed, SCALE, geometry, workers=4)
    return cdf_from_radii(planar_radii(positions, geometry))


def test_golden_section_finds_parabola_minimum():
    result = golden_section(lambda x: (x - 2.0) ** 2, 0.0, 5.0, 1e-6, 200)
    assert result.converged
    assert result.point["x"] == pytest.approx(2.0, abs=1e-5)
    assert result.evals < 60


def test_golden_section_reports_exhausted_budget():
    result = golden_section(lambda x: (x - 2.0) ** 2, 0.0, 5.0, 1e-6, 3)
    assert not result.converged
    assert result.evals == 3
    assert math.isfinite(result.value)


def test_golden_section_larger_budget_extends_same_sequence():
    seen_short, seen_long = [], []
    golden_section(lambda x: seen_short.append(x) or abs(x - 1.3), 0.0, 4.0, 1e-4, 10)
    golden_section(lambda x: seen_long.append(x) or abs(x - 1.3), 0.0, 4.0, 1e-4, 30)
    assert seen_long[:10] == seen_short


def test_coordinate_descent_on_separable_bowl():
    def bowl(p):
        return (p["a"] - 1.0) ** 2 + 3.0 * (p["b"] + 2.0) ** 2

    result = coordinate_descent(bowl, ["a", "b"], {"a": (-5.0, 5.0), "b": (-5.0, 5.0)}, 1e-4, 500)
    assert result.converged
    assert result.point["a"] == pytest.approx(1.0, abs=1e-3)
    assert result.point["b"] == pytest.approx(-2.0, abs=1e-3)


def test_fit_count_scale_is_least_squares():
    shape = np.array([0.1, 0.4, 0.8, 1.0])
    data = EmpiricalCDF(radii=[1.0, 2.0, 3.0, 4.0], cumulative=3.0 * shape)
    assert fit_count_scale(shape, data) == pytest.approx(3.0)
    with pytest.raises(NumericalError):
        fit_count_scale(np.zeros(4), data)


def test_fit_config_validation():
    with pytest.raises(UsageError):
        FitConfig(free_params=(COUNT_SCALE, "ceiling_z"))
    with pytest.raises(UsageError):
        FitConfig(free_params=("source_height", "dish_radius", "cutoff_radius"))
    with pytest.raises(UsageError):
        FitConfig(free_params=("source_height",), bounds={"source_height": (3.0, 1.0)})
    cfg = FitConfig(free_params=("cutoff_radius", COUNT_SCALE, "source_height"))
    assert cfg.geometry_params == ("source_height", "cutoff_radius")


def test_fit_parameters_with_replacement_objective():
    cfg = FitConfig(free_params=("source_height",), tolerance=1e-5)
    data = cdf_from_radii([1.0, 2.0])
    result = fit_parameters(
        cfg, ChamberGeometry.petri_dish(), data, objective=lambda p: (p["source_height"] - 3.0) ** 2
    )
    assert result.converged
    assert result.params["source_height"] == pytest.approx(3.0, abs=1e-4)
    assert COUNT_SCALE not in result.params


def test_fit_parameters_exhausted_budget_is_not_an_error():
    cfg = FitConfig(free_params=("source_height",), max_evals=2)
    data = synthetic_cdf(ChamberGeometry.petri_dish(), 2000, 1)
    result = fit_parameters(cfg, ChamberGeometry.petri_dish(), data)
    assert result.converged is False
    assert result.evals == 2
    assert math.isfinite(result.objective)


def test_scale_only_fit_recovers_sample_count():
    n = 20_000
    geometry = ChamberGeometry.petri_dish()
    data = synthetic_cdf(geometry, n, 17)
    result = fit_parameters(FitConfig(), geometry, data)
    assert result.evals == 1
    assert result.params[COUNT_SCALE] == pytest.approx(n, rel=0.02)
    out = result.to_dict()
    assert "cutoff" not in out
    assert out["params"][COUNT_SCALE]["unit"] == "counts"


@pytest.mark.parametrize("seed", range(10))
def test_source_height_and_scale_recovery(seed):
    # the height only shows in the inner few mm of the CDF, so it needs more tracks;
    # [0.5, 8] also holds the mirror height 8 mm, which golden section steers away from
    n = 200_000
    truth = ChamberGeometry.petri_dish().with_parameter("source_height", 2.0)
    data = synthetic_cdf(truth, n, seed)
    cfg = FitConfig(
        free_params=(COUNT_SCALE, "source_height"),
        bounds={"source_height": (0.5, 8.0)},
        metric=Metric.RMS,
    )
    template = ChamberGeometry.petri_dish().with_parameter("source_height", 4.0)
    result = fit_parameters(cfg, template, data)
    assert result.converged
    assert result.params["source_height"] == pytest.approx(2.0, rel=0.1)
    assert result.params[COUNT_SCALE] == pytest.approx(n, rel=0.02)


def test_cutoff_recovery():
    truth = ChamberGeometry.petri_dish().with_parameter("cutoff_radius", 20.0)
    data = synthetic_cdf(truth, 20_000, 4242)
    fit = fit_cutoff(
        data,
        ChamberGeometry.petri_dish(),
        metric=Metric.RMS,
        step=1.0,
        scan_from=10.0,
        grid_points=128,
    )
    assert fit.cutoff_mm == pytest.approx(20.0, abs=1.0)
    assert fit.objective_with < fit.objective_without
    assert set(fit.to_dict()) == {"cutoff_mm", "objective_with", "objective_without"}


def test_residual_rows_line_up_with_data():
    geometry = ChamberGeometry.petri_dish()
    data = synthetic_cdf(geometry, 500, 8)
    rows = residual_rows(geometry, data, scale=500.0, grid_points=64)
    assert len(rows) == 500
    radius, observed, model, residual = rows[-1]
    assert radius == data.radii[-1]
    assert observed == 500.0
    assert residual == pytest.approx(observed - model)


def test_fit_result_carries_cutoff_only_when_fitted():
    result = FitResult(params={COUNT_SCALE: 10.0}, objective=0.5, evals=1, converged=True)
    assert "cutoff" not in result.to_dict()
    result.cutoff = CutoffFit(cutoff_mm=20.0, objective_with=1.0, objective_without=9.0)
    assert result.to_dict()["cutoff"]["cutoff_mm"] == 20.0


@settings(max_examples=100, deadline=None)
@given(
    steps=st.lists(
        st.one_of(st.just(0.0), st.floats(min_value=1e-3, max_value=10.0)), min_size=2, max_size=30
    ),
    shape_steps=st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=30, max_size=30),
)
def test_count_scale_is_the_rms_minimiser(steps, shape_steps):
    counts = np.cumsum(steps)
    shape = np.cumsum(shape_steps[: len(counts)])
    radii = np.arange(1.0, len(counts) + 1.0)
    data = EmpiricalCDF(radii=radii, cumulative=counts)
    scale = fit_count_scale(shape, data)

    def rms(k):
        return cdf_distance(ModelCurve(radii, k * shape), data, Metric.RMS)

    best = rms(scale)
    for factor in (0.99, 1.01):
        assert rms(scale * factor) >= best * (1.0 - 1e-12)


def test_count_scale_recovered_from_noisy_counts():
    radii = np.linspace(0.1, 30.0, 500)
    u = radii / 30.0
    shape = 1.0 - np.sqrt(1.0 - u * u) + u * np.arccos(u)
    for seed in range(100):
        noisy = 100.0 * shape + np.random.default_rng(seed).standard_normal(radii.size)
        # sorted so the noisy counts stay a valid CDF
        data = EmpiricalCDF(radii=radii, cumulative=np.sort(noisy))
        assert fit_count_scale(shape, data) == pytest.approx(100.0, rel=0.02)


def test_larger_budget_never_worsens_the_fit():
    data = synthetic_cdf(ChamberGeometry.petri_dish(), 3000, 6)
    objectives = []
    for k in (3, 6, 12):
        cfg = FitConfig(free_params=(COUNT_SCALE, "source_height"), max_evals=k)
        objectives.append(fit_parameters(cfg, ChamberGeometry.petri_dish(), data).objective)
    assert objectives[1] <= objectives[0]
    assert objectives[2] <= objectives[1]


def test_fit_result_is_deterministic():
    data = synthetic_cdf(ChamberGeometry.petri_dish(), 3000, 8)
    cfg = FitConfig(free_params=(COUNT_SCALE, "source_height"), max_evals=20)
    first = fit_parameters(cfg, ChamberGeometry.petri_dish(), data)
    second = fit_parameters(cfg, ChamberGeometry.petri_dish(), data)
    assert first == second
    assert first.to_dict() == second.to_dict()


def test_untruncated_data_put_the_cutoff_at_the_data_edge():
    data = synthetic_cdf(ChamberGeometry.petri_dish(), 20_000, 4343)
    fit = fit_cutoff(
        data,
        ChamberGeometry.petri_dish(),
        metric=Metric.RMS,
        step=1.0,
        scan_from=30.0,
        grid_points=128,
    )
    # within one scan step of the farthest track start
    assert fit.cutoff_mm >= data.radii[-1] - 1.0
    assert fit.objective_with <= fit.objective_without
    assert fit.objective_with >= 0.75 * fit.objective_without


def test_cutoff_beyond_the_data_is_inert():
    radii = np.sort(np.random.default_rng(5).uniform(0.0, 5.0, 400))
    data = cdf_from_radii(radii)
    fit = fit_cutoff(data, ChamberGeometry.petri_dish(), step=5.0, scan_from=10.0, grid_points=64)
    values = [value for _, value in fit.scan]
    np.testing.assert_allclose(values, fit.objective_without, rtol=1e-6)
    assert fit.objective_with == pytest.approx(fit.objective_without, rel=1e-6)


def test_cutoff_scan_starting_past_the_chamber():
    small = ChamberGeometry(shape=Sphere(radius=4.0), source=(0.0, 0.0, 0.0))
    data = synthetic_cdf(small, 2000, 12)
    fit = fit_cutoff(data, small, scan_from=10.0, grid_points=64)
    assert [c for c, _ in fit.scan] == [10.0]
    assert fit.cutoff_mm >= 10.0
    assert fit.objective_with == pytest.approx(fit.objective_without, rel=1e-9)
    with pytest.raises(UsageError):
        fit_cutoff(data, small, step=0.0)
