#!/usr/bin/env python3
"""
End-to-end tests for the mottlab command line.
"""

import json
import os
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

# Add the mottlab package to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "."))

from mottlab import artifacts
from mottlab.artifacts import ArtifactWriter
from mottlab.chamber import ChamberGeometry, ScaleParams, sample_positions
from mottlab.cli import main
from mottlab.empirics import TrackRecord, emit_tracks
from mottlab.geiger import GeigerGeometry, ModelKind, normalized_curves

SVG_NS = "{http://www.w3.org/2000/svg}"


def write_track_csv(path, n=3000, seed=12):
    geometry = ChamberGeometry.petri_dish()
    positions, _ = sample_positions(n, seed, ScaleParams(coeff=1.0, gamma=1.0), geometry)
    records = [TrackRecord(i, x, y) for i, (x, y, _) in enumerate(positions.tolist())]
    with open(path, "w", encoding="utf-8", newline="") as f:
        emit_tracks(records, f, calibration=0.1, source_xy=(640.0, 480.0))


def test_zero_samples_is_a_usage_error(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["chamber-simulate", "--seed", "1", "--n", "0", "--out", str(out)])
    assert code == 2
    assert not out.exists() or not any(out.iterdir())
    assert "error:" in capsys.readouterr().err


def test_simulate_requires_seed(tmp_path):
    assert main(["chamber-simulate", "--n", "10", "--out", str(tmp_path)]) == 2


def test_simulate_is_byte_identical_for_same_seed(tmp_path):
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["chamber-simulate", "--seed", "5", "--n", "2000", "--out", str(out)]) == 0
        runs.append(out)
    for artifact in ("samples.csv", "model_cdf.csv", "empirical_cdf.csv", "summary.json"):
        assert (runs[0] / artifact).read_bytes() == (runs[1] / artifact).read_bytes()
    header = (runs[0] / "samples.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "x_mm,y_mm,z_mm,t_s"
    assert (runs[0] / "model_cdf.csv").read_text().startswith("radius_mm,model_count\n")


def test_simulate_svg_has_two_series_and_axis_labels(tmp_path):
    assert main(["chamber-simulate", "--seed", "3", "--n", "1000", "--out", str(tmp_path)]) == 0
    root = ET.parse(tmp_path / "cdf_overlay.svg").getroot()
    assert root.get("version") == "1.1"
    assert len(root.findall(f"{SVG_NS}polyline")) == 2
    texts = [t.text for t in root.iter(f"{SVG_NS}text")]
    assert "planar radius (mm)" in texts
    assert "cumulative counts" in texts


def test_formats_filter_artifacts(tmp_path):
    code = main(
        ["chamber-simulate", "--seed", "3", "--n", "500", "--out", str(tmp_path), "--formats", "csv"]
    )
    assert code == 0
    assert sorted(p.suffix for p in tmp_path.iterdir()) == [".csv", ".csv", ".csv"]


def test_bad_config_is_a_usage_error(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"chamber": {}, "plotting": {}}))
    code = main(["chamber-simulate", "--config", str(config), "--seed", "1", "--n", "10", "--out", str(tmp_path / "o")])
    assert code == 2


def test_fit_writes_result_without_cutoff(tmp_path):
    data = tmp_path / "tracks.csv"
    write_track_csv(data)
    out = tmp_path / "fit"
    code = main(
        [
            "chamber-fit",
            "--data", str(data),
            "--calibration", "0.1",
            "--source-xy", "640", "480",
            "--out", str(out),
        ]
    )
    assert code == 0
    result = json.loads((out / "fit_result.json").read_text(encoding="utf-8"))
    assert "cutoff" not in result
    assert abs(result["params"]["count_scale"]["value"] - 3000) < 0.05 * 3000
    lines = (out / "residuals.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "radius_mm,data_count,model_count,residual"
    assert len(lines) == 3001


def test_fit_without_calibration_is_a_usage_error(tmp_path):
    data = tmp_path / "tracks.csv"
    write_track_csv(data, n=10)
    code = main(["chamber-fit", "--data", str(data), "--source-xy", "0", "0", "--out", str(tmp_path)])
    assert code == 2


def test_fit_names_malformed_line(tmp_path, capsys):
    data = tmp_path / "tracks.csv"
    data.write_text("frame,x,y\n1,10,10\n2,oops,4\n", encoding="utf-8")
    code = main(
        ["chamber-fit", "--data", str(data), "--calibration", "1", "--source-xy", "0", "0", "--out", str(tmp_path / "o")]
    )
    assert code == 3
    assert "line 3" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_geiger_curves_default_grid(tmp_path):
    assert main(["geiger-curves", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "geiger_curves.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "g_mm,geometric,case_i,case_ii,case_iii"
    assert len(lines) == 82
    first = [float(v) for v in lines[1].split(",")]
    assert first == [0.0, 1.0, 1.0, 1.0, 1.0]
    for line in lines[1:]:
        assert all(np.isfinite(float(v)) for v in line.split(","))
    root = ET.parse(tmp_path / "geiger_curves.svg").getroot()
    assert len(root.findall(f"{SVG_NS}polyline")) == 4


def test_geiger_zero_flux_normalisation_fails_numerically(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"geiger": {"g_norm_mm": 30.0}}))
    code = main(["geiger-curves", "--config", str(config), "--out", str(tmp_path / "o")])
    assert code == 4
    assert "geometric" in capsys.readouterr().err


def test_geiger_fit_sz_on_synthetic_data(tmp_path):
    g = np.concatenate([np.arange(0.0, 5.0, 0.1), np.arange(5.0, 30.5, 0.5)])
    truth = GeigerGeometry().with_sz(16.0)
    curve = normalized_curves([ModelKind.CASE_I], g, 0.0, truth)[ModelKind.CASE_I]
    rates = 250.0 * curve * (1.0 + 0.02 * np.random.default_rng(0).standard_normal(len(g)))
    data = tmp_path / "counts.csv"
    data.write_text(
        "g_mm,count_rate\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(g.tolist(), rates.tolist())),
        encoding="utf-8",
    )
    out = tmp_path / "o"
    assert main(["geiger-curves", "--data", str(data), "--fit-sz", "--out", str(out)]) == 0
    fit = json.loads((out / "sz_fit.json").read_text(encoding="utf-8"))
    assert fit["kind"] == "case_i"
    assert abs(fit["sz_equiv_mm"] - 16.0) < 0.5
    root = ET.parse(out / "geiger_curves.svg").getroot()
    assert len(root.findall(f"{SVG_NS}polyline")) == 4
    assert len(root.findall(f"{SVG_NS}g")) == 1


def test_fit_sz_needs_data(tmp_path):
    assert main(["geiger-curves", "--fit-sz", "--out", str(tmp_path)]) == 2


def test_failed_commit_leaves_no_artifacts(tmp_path, monkeypatch):
    writer = ArtifactWriter(tmp_path / "out", frozenset({"csv", "json"}))
    writer.add_json("a.json", {"n": 1})
    writer.add_json("b.json", {"n": 2})
    writer.add_json("c.json", {"n": 3})
    real_replace = artifacts.os.replace
    calls = []

    def flaky_replace(src, dst):
        calls.append(dst)
        if len(calls) == 2:
            raise OSError("disk full")
        real_replace(src, dst)

    monkeypatch.setattr(artifacts.os, "replace", flaky_replace)
    with pytest.raises(OSError):
        writer.commit()
    assert list((tmp_path / "out").iterdir()) == []
