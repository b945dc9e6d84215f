from __future__ import annotations

import json

import pytest

from src.config import (DEFAULT_CONFIG_PATH, Finding, PipelineConfig, deep_merge, default_document,
                        load_config, validate_config, validate_document)
from src.errors import ConfigError
from src.materials import KEVLAR, SINTERED_REGOLITH


def _config_file(tmp_path, document):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def _errors(findings):
    return [finding for finding in findings if finding.severity == "error"]


@pytest.fixture
def out_override(tmp_path):
    return {"output_dir": str(tmp_path / "out")}


def test_default_config_is_valid(out_override):
    assert validate_config(DEFAULT_CONFIG_PATH, out_override) == []


def test_negative_pressure_is_one_error_at_its_key(tmp_path, out_override):
    path = _config_file(tmp_path, {"formfind": {"pressure": -1.0}})
    findings = validate_config(path, out_override)

    assert len(findings) == 1
    assert findings[0].path == "formfind.pressure"
    assert findings[0].severity == "error"


def test_unknown_keys_are_warnings(tmp_path, out_override):
    path = _config_file(tmp_path, {"colour": "grey", "shield": {"paint": True}})
    findings = validate_config(path, out_override)

    assert findings == [Finding("colour", "unknown key", "warning"),
                        Finding("shield.paint", "unknown key", "warning")]
    assert isinstance(load_config(path, out_override), PipelineConfig)


def test_inverted_sweep_range(tmp_path, out_override):
    path = _config_file(tmp_path, {"sweep": {"radius_min": 7.0, "radius_max": 4.0}})
    errors = _errors(validate_config(path, out_override))

    assert [finding.path for finding in errors] == ["sweep.radius_min"]


def test_material_references_and_strengths_are_checked(out_override):
    document = deep_merge(default_document(), out_override)
    document["shield_material"] = "basalt"
    document["materials"]["kevlar"]["allowable_stress"] = 4.0e9

    paths = [finding.path for finding in _errors(validate_document(document))]
    assert paths == ["materials.kevlar.allowable_stress", "shield_material"]


def test_pod_and_thickness_bounds_are_cross_checked(out_override):
    document = deep_merge(default_document(), out_override)
    document["pod"]["core_diameter"] = 6.5
    document["shield"]["thickness_bounds"] = [1.0, 0.5]

    paths = [finding.path for finding in _errors(validate_document(document))]
    assert paths == ["pod.core_diameter", "shield.thickness_bounds"]


def test_shield_density_must_match_its_material(out_override):
    document = deep_merge(default_document(), out_override)
    document["shield"]["density"] = 1800.0

    errors = _errors(validate_document(document))
    assert [finding.path for finding in errors] == ["shield.density"]
    assert "1500" in errors[0].message


def test_sweep_step_below_a_millimetre_is_rejected(tmp_path, out_override):
    path = _config_file(tmp_path, {"sweep": {"step": 0.0005}})

    assert [finding.path for finding in _errors(validate_config(path, out_override))] == ["sweep.step"]
    assert _errors(validate_config(_config_file(tmp_path, {"sweep": {"step": 0.001}}), out_override)) == []


def test_schema_errors_skip_the_cross_field_checks(out_override):
    document = deep_merge(default_document(), out_override)
    document["fea"]["solver"] = "lu"
    document["sweep"]["radius_min"] = 9.0

    assert [finding.path for finding in validate_document(document)] == ["fea.solver"]


def test_load_config_builds_the_pipeline_settings(tmp_path):
    path = _config_file(tmp_path, {"output_dir": str(tmp_path / "run"), "mesh": {"subdivision_level": 3}})
    config = load_config(path)

    assert config.subdivision_level == 3
    assert config.membrane == KEVLAR
    assert config.shield_mat == SINTERED_REGOLITH
    assert config.thickness_bounds == (0.05, 3.0)
    assert config.shield.layer_height == 0.05
    assert config.constraints.required_floor_area == pytest.approx(159.0)
    assert config.formfind.axial_stiffness is None
    assert config.design_settings().subdivision_level == 3
    assert config.source_path == str(path)


def test_overrides_apply_last(tmp_path):
    path = _config_file(tmp_path, {"output_dir": "ignored"})
    config = load_config(path, {"output_dir": str(tmp_path / "cli")})

    assert config.output_dir == str(tmp_path / "cli")


def test_invalid_config_raises_with_all_findings(tmp_path, out_override):
    path = _config_file(tmp_path, {"pod": {"height": 0}, "dose": {"halving_thickness": -0.5}})
    with pytest.raises(ConfigError) as error:
        load_config(path, out_override)

    assert [finding.path for finding in error.value.findings] == ["dose.halving_thickness", "pod.height"]


def test_unparseable_and_missing_files(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{ not json", encoding="utf-8")

    with pytest.raises(ConfigError, match="invalid JSON"):
        validate_config(broken)
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.json")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(_config_file(tmp_path, [1, 2]))


def test_deep_merge_overlays_nested_keys():
    base = {"a": {"b": 1, "c": [1, 2]}, "d": 4}
    merged = deep_merge(base, {"a": {"c": [3]}, "e": 5})

    assert merged == {"a": {"b": 1, "c": [3]}, "d": 4, "e": 5}
    assert base == {"a": {"b": 1, "c": [1, 2]}, "d": 4}
