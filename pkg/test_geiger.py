#!/usr/bin/env python3
"""
Tests for the Geiger counter window models and the S*Z fit.
"""

import io
import math
import os
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

# Add the mottlab package to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "."))

from mottlab.errors import DataError, DomainError, NumericalError
from mottlab.geiger import (
    ALL_KINDS,
    DIVERGENT_AT_CONTACT,
    GeigerGeometry,
    ModelKind,
    averaged_curve,
    blended_curve,
    case_iii_branch_jump,
    fit_stopping_equiv,
    flux,
    normalized_curves,
    read_count_data,
    source_averaged_flux,
    theta_limit,
    write_curves_csv,
)

# 16 mm of air-equivalent slowing in the window, 38 mm range in air
FITTED = GeigerGeometry(slowing_scale_s=1000.0, window_thickness_z=0.016)


def geometry_with_ratio(s: float) -> GeigerGeometry:
    return GeigerGeometry(slowing_scale_s=s * 38.0 / 0.016, window_thickness_z=0.016)


def test_case_i_without_window_slowing_is_case_ii():
    geom = GeigerGeometry(slowing_scale_s=0.0)
    g = np.linspace(0.0, 40.0, 1000)
    case_i = [flux(ModelKind.CASE_I, x, geom) for x in g]
    case_ii = [flux(ModelKind.CASE_II, x, geom) for x in g]
    assert case_i == case_ii


def test_cases_i_and_ii_diverge_at_contact():
    assert flux(ModelKind.CASE_II, 0.0, FITTED) == DIVERGENT_AT_CONTACT
    # window slowing caps case i at -ln(s)
    assert flux(ModelKind.CASE_I, 0.0, FITTED) == pytest.approx(-math.log(16.0 / 38.0))


def test_case_i_plateau_below_break_distance():
    s = FITTED.slowing_ratio
    g_break = FITTED.window_radius_w * s / math.sqrt(1.0 - s * s)
    for g in np.linspace(0.0, 0.99 * g_break, 7):
        assert flux(ModelKind.CASE_I, g, FITTED) == pytest.approx(-math.log(s), rel=1e-12)
    assert flux(ModelKind.CASE_I, 2.0 * g_break, FITTED) < -math.log(s)


def test_geometric_flux_vanishes_beyond_stopping_range():
    for g in (22.0, 25.0, 40.0):
        assert flux(ModelKind.GEOMETRIC, g, FITTED) == 0.0
    assert flux(ModelKind.GEOMETRIC, 21.0, FITTED) > 0.0
    assert theta_limit(ModelKind.GEOMETRIC, 30.0, FITTED) == 0.0


def test_case_iii_has_no_single_angle():
    with pytest.raises(DomainError):
        theta_limit(ModelKind.CASE_III, 1.0, FITTED)


@pytest.mark.parametrize("s", [0.1, 16.0 / 38.0, 0.8])
def test_case_iii_branch_values_at_switch(s):
    jump = case_iii_branch_jump(geometry_with_ratio(s))
    assert jump.far == pytest.approx(-2.0 * s * math.log(s), rel=1e-9)
    assert jump.near == pytest.approx(-s * math.log(s), rel=1e-9)
    assert jump.jump == pytest.approx(s * abs(math.log(s)), rel=1e-9)


def test_window_stopping_everything_is_rejected():
    with pytest.raises(DomainError):
        GeigerGeometry(slowing_scale_s=3000.0, window_thickness_z=0.016)


@settings(max_examples=25, deadline=None)
@given(
    factors=st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=4, max_size=4),
    g_norm=st.sampled_from([0.0, 1.0, 2.5, 5.0]),
)
def test_normalisation_removes_prefactors(factors, g_norm):
    g = np.arange(0.0, 20.5, 0.5)
    plain = normalized_curves(ALL_KINDS, g, g_norm, FITTED, n_nodes=16)
    scaled = normalized_curves(
        ALL_KINDS, g, g_norm, FITTED, n_nodes=16, prefactors=dict(zip(ALL_KINDS, factors))
    )
    at_norm = int(np.flatnonzero(g == g_norm)[0])
    for kind in ALL_KINDS:
        np.testing.assert_allclose(scaled[kind], plain[kind], rtol=1e-12, atol=0)
        assert plain[kind][at_norm] == 1.0


def test_zero_flux_at_normalisation_point():
    with pytest.raises(NumericalError, match="geometric"):
        normalized_curves([ModelKind.GEOMETRIC], [0.0, 10.0], 30.0, FITTED)


def test_default_grid_is_finite_everywhere():
    g = np.arange(0.0, 40.5, 0.5)
    curves = normalized_curves(ALL_KINDS, g, 0.0, FITTED)
    out = io.StringIO()
    write_curves_csv(out, g, curves)
    lines = out.getvalue().splitlines()
    assert lines[0] == "g_mm,geometric,case_i,case_ii,case_iii"
    assert len(lines) == len(g) + 1
    for line in lines[1:]:
        values = [float(v) for v in line.split(",")]
        assert len(values) == 5
        assert all(math.isfinite(v) for v in values)


def test_source_averaging_smooths_the_contact_divergence():
    curve = averaged_curve(ModelKind.CASE_II, [0.0, 1.0, 5.0], FITTED)
    assert np.all(np.isfinite(curve))
    assert curve[0] > curve[1] > curve[2]


def test_blended_curve_is_normalised_mixture():
    g = np.arange(0.0, 10.5, 0.5)
    single = blended_curve({ModelKind.CASE_I: 1.0}, g, 0.0, FITTED)
    np.testing.assert_allclose(single, normalized_curves([ModelKind.CASE_I], g, 0.0, FITTED)[ModelKind.CASE_I])
    mixed = blended_curve({ModelKind.CASE_I: 1.0, ModelKind.CASE_III: 3.0}, g, 0.0, FITTED)
    assert mixed[0] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        blended_curve({ModelKind.CASE_I: -1.0}, g, 0.0, FITTED)


@pytest.mark.parametrize("seed", range(10))
def test_stopping_fit_recovers_sz(seed):
    # S*Z only shapes the curve within a few mm of contact, so sample that densely
    g = np.concatenate([np.arange(0.0, 5.0, 0.1), np.arange(5.0, 30.5, 0.5)])
    truth = FITTED.with_sz(16.0)
    curve = normalized_curves([ModelKind.CASE_I], g, 0.0, truth)[ModelKind.CASE_I]
    rng = np.random.default_rng(seed)
    rates = 1234.0 * curve * (1.0 + 0.02 * rng.standard_normal(len(g)))
    fit = fit_stopping_equiv(list(zip(g, rates)), ModelKind.CASE_I, FITTED.with_sz(8.0))
    assert fit.converged
    assert fit.sz_equiv_mm == pytest.approx(16.0, abs=0.5)
    assert set(fit.to_dict()) == {"sz_equiv_mm", "objective", "evals", "converged"}


def test_stopping_fit_needs_enough_points():
    with pytest.raises(DataError):
        fit_stopping_equiv([(0.0, 1.0), (1.0, 0.5)], ModelKind.CASE_I, FITTED)
    with pytest.raises(DomainError):
        fit_stopping_equiv(
            [(0.0, 1.0), (1.0, 0.5), (2.0, 0.3)], ModelKind.CASE_I, FITTED, bounds=(1.0, 40.0)
        )


def test_read_count_data_names_bad_line():
    rows = read_count_data(["g_mm,count_rate", "0,120", "", "1.5,80.5"])
    assert rows == [(0.0, 120.0), (1.5, 80.5)]
    with pytest.raises(DataError, match="line 3"):
        read_count_data(["g_mm,count_rate", "0,120", "x,3"])
    with pytest.raises(DataError, match="line 1"):
        read_count_data(["g,rate", "0,1"])


def test_case_ii_is_half_log_of_window_ratio():
    for g in (0.1, 1.0, 4.5, 12.0, 37.0):
        expected = 0.5 * math.log(1.0 + (FITTED.window_radius_w / g) ** 2)
        assert flux(ModelKind.CASE_II, g, FITTED) == pytest.approx(expected, rel=1e-12)


def test_case_iii_far_branch_decays_as_inverse_square():
    s = FITTED.slowing_ratio
    w = FITTED.window_radius_w
    for g in (1e3, 1e4):
        assert flux(ModelKind.CASE_III, g, FITTED) / (s * w * w / (g * g)) == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("kind", [ModelKind.CASE_I, ModelKind.CASE_II, ModelKind.CASE_III])
@pytest.mark.parametrize("g", [0.0, 0.5, 1.5, 2.5, 10.0])
def test_source_average_matches_adaptive_quadrature(kind, g):
    g_break = case_iii_branch_jump(FITTED).g_star
    extent = FITTED.source_extent
    breaks = [p for p in (g_break,) if g < p < g + extent]
    exact, _ = integrate.quad(
        lambda x: flux(kind, x, FITTED), g, g + extent,
        points=breaks or None, epsabs=0.0, epsrel=1e-11, limit=400,
    )
    assert source_averaged_flux(kind, g, FITTED) == pytest.approx(exact / extent, rel=1e-6)


def test_source_average_of_case_ii_at_contact_has_closed_form():
    w, e = FITTED.window_radius_w, FITTED.source_extent
    expected = (0.5 * e * math.log1p(w * w / (e * e)) + w * math.atan(e / w)) / e
    assert source_averaged_flux(ModelKind.CASE_II, 0.0, FITTED) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("kind", [ModelKind.GEOMETRIC, ModelKind.CASE_I, ModelKind.CASE_II])
def test_fluxes_never_increase_with_distance(kind):
    g = np.linspace(0.0, FITTED.stopping_distance_l, 202)[1:-1]
    pointwise = np.array([flux(kind, x, FITTED) for x in g])
    assert np.all(pointwise >= 0)
    assert np.all(np.diff(pointwise) <= 1e-12)
    assert np.all(np.diff(averaged_curve(kind, g, FITTED)) <= 1e-12)


def noiseless_counts(sz: float, g: np.ndarray) -> list:
    curve = normalized_curves([ModelKind.CASE_I], g, 0.0, FITTED.with_sz(sz))[ModelKind.CASE_I]
    return list(zip(g, 500.0 * curve))


DENSE_G = np.concatenate([np.arange(0.0, 5.0, 0.1), np.arange(5.0, 30.5, 0.5)])


def test_noiseless_self_fit_has_no_residual():
    data = noiseless_counts(16.0, DENSE_G)
    at_truth = fit_stopping_equiv(data, ModelKind.CASE_I, FITTED, bounds=(16.0 - 1e-9, 16.0 + 1e-9))
    assert at_truth.objective < 1e-10
    free = fit_stopping_equiv(data, ModelKind.CASE_I, FITTED)
    assert free.sz_equiv_mm == pytest.approx(16.0, abs=0.01)


def test_bounds_excluding_truth_pin_the_fit_to_the_nearer_bound():
    data = noiseless_counts(16.0, DENSE_G)
    interior = fit_stopping_equiv(data, ModelKind.CASE_I, FITTED)
    pinned = fit_stopping_equiv(data, ModelKind.CASE_I, FITTED, bounds=(20.0, 30.0))
    assert pinned.sz_equiv_mm == pytest.approx(20.0, abs=0.01)
    assert pinned.objective > interior.objective


def test_count_data_line_numbers_count_physical_lines():
    with pytest.raises(DataError, match="line 4"):
        read_count_data(io.StringIO('g_mm,count_rate\n"1\n",2\nx,3\n'))
