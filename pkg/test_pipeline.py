"""
End-to-end runs of the pipeline and the command line on a coarse single-radius config.
"""
from __future__ import annotations

import json

import pytest

from src.errors import ConfigError, StageError
from src.main import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main, parse_arguments
from src.pipeline import REPORT_NAME, run_pipeline, run_shield_only, run_sweep_only
from src.materials import KEVLAR
from src.solvers.formfind import thin_wall_stress
from src.writers import file_sha256

SMALL_CONFIG = {
    "mesh": {"subdivision_level": 3},
    "sweep": {"radius_min": 5.2, "radius_max": 5.2, "step": 0.1},
    "shield": {"layer_height": 0.25, "meridian_count": 8},
    "fea": {"contour_levels": 4},
}
PIPELINE_ARTIFACTS = {
    "designs/r5.200.obj", "pareto.csv", "membrane.obj", "fea_membrane.csv", "contours_membrane.csv",
    "shield_inner.obj", "shield_outer.obj", "fea_shield.csv", "toolpaths.csv", "meridians.csv",
}


def _write_config(directory, document):
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "config.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def _report(out_dir):
    return json.loads((out_dir / REPORT_NAME).read_text(encoding="utf-8"))


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    return _write_config(tmp_path_factory.mktemp("config"), SMALL_CONFIG)


@pytest.fixture(scope="module")
def full_run(small_config, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("run")
    return out_dir, run_pipeline(str(small_config), str(out_dir))


def test_full_run_writes_every_artifact(full_run):
    out_dir, report = full_run

    assert set(report.artifacts) == PIPELINE_ARTIFACTS
    assert all((out_dir / name).is_file() for name in PIPELINE_ARTIFACTS)
    assert set(report.timings) == {"sweep", "membrane_fea", "shield", "toolpaths", "budget", "report"}


def test_report_summarises_each_stage(full_run):
    out_dir, _ = full_run
    results = _report(out_dir)["results"]

    assert results["status"] == "ok"
    assert results["selected_design"]["radius_m"] == 5.2
    assert results["sweep"]["points"][0]["pareto_rank"] == 0
    assert results["membrane"]["thin_wall_stress_pa"] == pytest.approx(52.7e6, rel=0.03)
    assert results["shield"]["thickness_m"] == pytest.approx(0.5)
    assert results["shield"]["governing"] == "radiation"
    assert results["toolpaths"]["meridians"] == 8
    assert results["budget"]["excavated_volume_m3"] == pytest.approx(113.10, abs=0.01)
    assert results["deployment"]["drilling_h"] == 20.0
    assert "output_dir" not in results["config"]


def test_manifest_hashes_match_the_files(full_run):
    out_dir, _ = full_run
    manifest = _report(out_dir)["manifest"]

    assert {entry["path"] for entry in manifest} == PIPELINE_ARTIFACTS
    for entry in manifest:
        assert entry["sha256"] == file_sha256(out_dir / entry["path"])
        assert entry["bytes"] == (out_dir / entry["path"]).stat().st_size


def test_runs_are_reproducible(full_run, small_config, tmp_path):
    first_dir, _ = full_run
    run_pipeline(str(small_config), str(tmp_path))

    for name in ("pareto.csv", "toolpaths.csv", "membrane.obj", "shield_outer.obj", "fea_shield.csv"):
        assert (tmp_path / name).read_bytes() == (first_dir / name).read_bytes()
    assert _report(tmp_path)["results"] == _report(first_dir)["results"]
    assert _report(tmp_path)["manifest"] == _report(first_dir)["manifest"]


def test_failed_stage_leaves_a_partial_report(tmp_path):
    config = _write_config(tmp_path / "config", {**SMALL_CONFIG, "dose": {"target_transmission": 1e-9}})
    out_dir = tmp_path / "out"
    with pytest.raises(StageError) as error:
        run_pipeline(str(config), str(out_dir))

    assert error.value.stage == "shield"
    report = _report(out_dir)
    assert report["results"]["status"] == "failed"
    assert report["results"]["failed_stage"] == "shield"
    assert report["results"]["error"].startswith("ThicknessSizingError")
    assert {entry["path"] for entry in report["manifest"]} == {
        "designs/r5.200.obj", "pareto.csv", "membrane.obj", "fea_membrane.csv", "contours_membrane.csv"}
    assert not (out_dir / "toolpaths.csv").exists()


def test_infeasible_sweep_reports_the_nearest_design(tmp_path):
    config = _write_config(tmp_path / "config", {**SMALL_CONFIG, "sweep": {"radius_min": 3.0, "radius_max": 3.0}})
    out_dir = tmp_path / "out"
    with pytest.raises(StageError):
        run_sweep_only(str(config), str(out_dir))

    results = _report(out_dir)["results"]
    assert results["failed_stage"] == "sweep"
    assert results["nearest_design"]["radius_m"] == 3.0
    assert {entry["path"] for entry in _report(out_dir)["manifest"]} == {"designs/r3.000.obj", "pareto.csv"}


def test_sweep_only_stops_after_selection(small_config, tmp_path):
    report = run_sweep_only(str(small_config), str(tmp_path))

    assert report.artifacts == ["designs/r5.200.obj", "pareto.csv", "membrane.obj"]
    assert "shield" not in report.results


def test_shield_only_reuses_a_membrane(full_run, small_config, tmp_path):
    first_dir, _ = full_run
    report = run_shield_only(str(small_config), str(first_dir / "membrane.obj"), str(tmp_path))

    first = _report(first_dir)["results"]
    assert report.results["membrane_source"] == "membrane.obj"
    assert report.results["shield"]["thickness_m"] == first["shield"]["thickness_m"]
    assert report.results["toolpaths"]["layers"] == first["toolpaths"]["layers"]
    assert report.results["budget"]["shield_volume_m3"] == pytest.approx(first["budget"]["shield_volume_m3"])
    assert "sweep" not in report.results
    assert (tmp_path / "toolpaths.csv").is_file()


def test_invalid_config_is_rejected_before_any_stage(tmp_path):
    config = _write_config(tmp_path / "config", {"formfind": {"pressure": -1}})
    with pytest.raises(ConfigError):
        run_pipeline(str(config), str(tmp_path / "out"))

    assert not (tmp_path / "out").exists()


def test_cli_exit_codes(small_config, tmp_path, capsys):
    invalid = _write_config(tmp_path / "invalid", {"sweep": {"step": 0}})
    failing = _write_config(tmp_path / "failing", {**SMALL_CONFIG, "dose": {"target_transmission": 1e-9}})

    assert main(["sweep", "--config", str(small_config), "--out", str(tmp_path / "ok")]) == EXIT_OK
    assert "Selected radius: 5.20 m" in capsys.readouterr().out
    assert main(["run", "--config", str(invalid), "--out", str(tmp_path / "bad")]) == EXIT_CONFIG
    assert main(["run", "--config", str(failing), "--out", str(tmp_path / "fail")]) == EXIT_STAGE


def test_cli_validate(tmp_path, capsys):
    good = _write_config(tmp_path / "good", {"output_dir": str(tmp_path / "out")})
    bad = _write_config(tmp_path / "bad", {"output_dir": str(tmp_path / "out"), "pod": {"height": -4}})

    assert main(["validate", "--config", str(good)]) == EXIT_OK
    assert capsys.readouterr().out.strip().endswith(": OK")
    assert main(["validate", "--config", str(bad)]) == EXIT_CONFIG
    assert "error: pod.height:" in capsys.readouterr().out


def test_cli_rejects_bad_job_counts():
    with pytest.raises(SystemExit):
        parse_arguments(["run", "--config", "c.json", "--jobs", "0"])
    assert parse_arguments(["shield", "--config", "c.json", "--membrane", "m.obj"]).membrane == "m.obj"


def test_missing_membrane_fails_the_shield_stage(small_config, tmp_path):
    out_dir = tmp_path / "out"
    code = main(["shield", "--config", str(small_config), "--membrane", str(tmp_path / "absent.obj"),
                 "--out", str(out_dir)])

    assert code == EXIT_STAGE
    results = _report(out_dir)["results"]
    assert results["status"] == "failed"
    assert results["failed_stage"] == "shield"
    assert results["error"].startswith("FileNotFoundError")
    assert _report(out_dir)["manifest"] == []


def test_membrane_utilisation_comes_from_the_fitted_sphere(full_run):
    out_dir, _ = full_run
    membrane = _report(out_dir)["results"]["membrane"]
    expected = thin_wall_stress(101325.0, membrane["fitted_radius_m"], KEVLAR.thickness)

    assert membrane["thin_wall_stress_pa"] == pytest.approx(expected)
    assert membrane["utilization"] == pytest.approx(expected / KEVLAR.allowable_stress)
    assert membrane["overstressed"] is False


def test_recorded_trace_comes_from_the_selected_relaxation(tmp_path):
    config = _write_config(tmp_path / "config", {**SMALL_CONFIG, "formfind": {"record_trace": True}})
    report = run_sweep_only(str(config), str(tmp_path / "out"))

    lines = (tmp_path / "out" / "relaxation_trace.csv").read_text(encoding="utf-8").splitlines()
    assert "relaxation_trace.csv" in report.artifacts
    assert lines[0] == "iteration,kinetic_energy_j,residual_n"
    assert len(lines) - 1 >= report.results["selected_design"]["relaxation_iterations"] + 1
