"""
Pipeline configuration: one JSON document validated against config/schema.json.

Keys absent from a user document take their values from config/default.json.
"""
import copy
import logging
import math
import os
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional

from jsonschema import Draft202012Validator

from src.design_opt import DesignConstraints, DesignSettings, FloorModel
from src.errors import ConfigError, HabitatFormaError
from src.materials import MaterialSpec
from src.parsers import load_json_document
from src.shield import DoseConfig, PodSpec, ShieldSpec
from src.solvers.formfind import FormFindConfig

logger = logging.getLogger(__name__)

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config")
DEFAULT_CONFIG_PATH = os.path.join(CONFIG_DIR, "default.json")
SCHEMA_PATH = os.path.join(CONFIG_DIR, "schema.json")
ROOT_PATH = "(root)"
MATERIAL_KEYS = ("youngs_modulus", "poisson_ratio", "density", "thickness", "tensile_strength", "allowable_stress")


class Finding(NamedTuple):
    path: str
    message: str
    severity: str  # "error" or "warning"

    def __str__(self):
        return f"{self.severity}: {self.path}: {self.message}"


@dataclass(frozen=True)
class SweepConfig:
    radius_min: float = 4.0
    radius_max: float = 7.0
    step: float = 0.1
    selection_rule: str = "constrained_min_surface"


@dataclass(frozen=True)
class FeaConfig:
    solver: str = "cg"
    rtol: float = 1e-8
    gravity: float = 1.62
    contour_levels: int = 8


@dataclass(frozen=True)
class PipelineConfig:
    formfind: FormFindConfig
    floor_model: FloorModel
    constraints: DesignConstraints
    sweep: SweepConfig
    fea: FeaConfig
    shield: ShieldSpec
    pod: PodSpec
    dose: DoseConfig
    materials: dict
    membrane_material: str
    shield_material: str
    subdivision_level: int = 4
    max_vertices: int = 1_000_000
    thickness_bounds: tuple = (0.05, 3.0)
    thickness_resolution: float = 0.01
    deposition_rate: float = 1.0
    output_dir: str = "out"
    seed: int = 0
    source_path: Optional[str] = None
    document: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def membrane(self):
        return self.materials[self.membrane_material]

    @property
    def shield_mat(self):
        return self.materials[self.shield_material]

    def design_settings(self):
        return DesignSettings(self.formfind, self.floor_model, self.constraints,
                              self.subdivision_level, self.membrane, self.max_vertices)

    @classmethod
    def from_document(cls, document, source_path=None):
        """Builds a config from a merged, schema-valid document."""
        shield = dict(document["shield"])
        bounds = tuple(float(value) for value in shield.pop("thickness_bounds"))
        resolution = float(shield.pop("thickness_resolution"))
        materials = {
            name: MaterialSpec.from_dict(name, {key: values[key] for key in MATERIAL_KEYS})
            for name, values in document["materials"].items()
        }
        mesh = document["mesh"]
        return cls(
            formfind=_build(FormFindConfig, document["formfind"]),
            floor_model=_build(FloorModel, document["floor_model"]),
            constraints=_build(DesignConstraints, document["constraints"]),
            sweep=_build(SweepConfig, document["sweep"]),
            fea=_build(FeaConfig, document["fea"]),
            shield=_build(ShieldSpec, shield),
            pod=_build(PodSpec, document["pod"]),
            dose=_build(DoseConfig, document["dose"]),
            materials=materials,
            membrane_material=document["membrane_material"],
            shield_material=document["shield_material"],
            subdivision_level=int(mesh["subdivision_level"]),
            max_vertices=int(mesh["max_vertices"]),
            thickness_bounds=bounds,
            thickness_resolution=resolution,
            deposition_rate=float(document["deposition_rate"]),
            output_dir=document["output_dir"],
            seed=int(document.get("seed", 0)),
            source_path=source_path,
            document=document,
        )


def _build(cls, values):
    """Instantiates a dataclass from the keys it knows; unknown keys were already reported."""
    names = {item.name for item in fields(cls)}
    return cls(**{key: value for key, value in values.items() if key in names})


def deep_merge(base, override):
    """Recursively overlays `override` onto a copy of `base`; non-dict values replace."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_schema():
    return load_json_document(SCHEMA_PATH)


def default_document():
    return load_json_document(DEFAULT_CONFIG_PATH)


def _dotted(parts):
    return ".".join(str(part) for part in parts) or ROOT_PATH


def schema_findings(document, schema=None):
    """Schema violations as findings; keys the schema does not know are warnings."""
    validator = Draft202012Validator(schema if schema is not None else load_schema())
    findings = []
    for error in validator.iter_errors(document):
        location = list(error.absolute_path)
        if error.validator == "additionalProperties" and error.schema.get("additionalProperties") is False:
            known = set(error.schema.get("properties", {}))
            for key in sorted(set(error.instance) - known):
                findings.append(Finding(_dotted(location + [key]), "unknown key", "warning"))
            continue
        findings.append(Finding(_dotted(location), error.message, "error"))
    return findings


def _nearest_existing(directory):
    directory = os.path.abspath(directory)
    while not os.path.exists(directory):
        parent = os.path.dirname(directory)
        if parent == directory:
            break
        directory = parent
    return directory


def cross_field_findings(document):
    """Checks that span several keys. Assumes the document passed the schema."""
    findings = []
    sweep = document["sweep"]
    if sweep["radius_min"] > sweep["radius_max"]:
        findings.append(Finding("sweep.radius_min",
                                f"radius_min {sweep['radius_min']} exceeds radius_max {sweep['radius_max']}",
                                "error"))

    materials = document["materials"]
    for key in ("membrane_material", "shield_material"):
        if document[key] not in materials:
            findings.append(Finding(key, f"material '{document[key]}' is not defined under materials", "error"))
    for name, values in sorted(materials.items()):
        if values["allowable_stress"] > values["tensile_strength"]:
            findings.append(Finding(f"materials.{name}.allowable_stress",
                                    "allowable_stress exceeds tensile_strength", "error"))

    shield_material = materials.get(document["shield_material"])
    if shield_material is not None and not math.isclose(document["shield"]["density"], shield_material["density"]):
        findings.append(Finding("shield.density",
                                f"shield density {document['shield']['density']} differs from "
                                f"{document['shield_material']} density {shield_material['density']}",
                                "error"))

    lower, upper = document["shield"]["thickness_bounds"]
    if lower >= upper:
        findings.append(Finding("shield.thickness_bounds", "lower bound must be below the upper bound", "error"))
    pod = document["pod"]
    if pod["core_diameter"] >= pod["diameter"]:
        findings.append(Finding("pod.core_diameter", "core diameter must be smaller than the pod diameter", "error"))

    existing = _nearest_existing(document["output_dir"])
    if not (os.path.isdir(existing) and os.access(existing, os.W_OK)):
        findings.append(Finding("output_dir", f"{document['output_dir']} is not writable", "error"))
    return findings


def _resolve(config_path, overrides=None):
    user = load_json_document(config_path)
    if not isinstance(user, dict):
        raise ConfigError(f"{config_path}: top level must be a JSON object")
    document = deep_merge(default_document(), user)
    if overrides:
        document = deep_merge(document, overrides)
    return document


def validate_document(document):
    findings = schema_findings(document)
    if not any(finding.severity == "error" for finding in findings):
        findings.extend(cross_field_findings(document))
    return sorted(findings, key=lambda finding: (finding.path, finding.message))


def validate_config(config_path, overrides=None):
    """
    Validates a config file.

    Args:
        config_path: Path of the JSON config.
        overrides: Optional partial document applied on top (CLI options).

    Returns:
        Findings ordered by (path, message); empty for a valid config.

    Raises:
        ConfigError: the file is missing, unreadable or not JSON.
    """
    return validate_document(_resolve(config_path, overrides))


def load_config(config_path, overrides=None):
    """
    Loads, validates and builds a PipelineConfig.

    Warnings are logged. Any error finding raises ConfigError carrying all findings.
    """
    document = _resolve(config_path, overrides)
    findings = validate_document(document)
    for finding in findings:
        if finding.severity == "warning":
            logger.warning("Config %s: %s", config_path, finding)
    errors = [finding for finding in findings if finding.severity == "error"]
    if errors:
        raise ConfigError(f"{config_path}: {len(errors)} invalid setting(s); first: {errors[0]}", findings)
    try:
        return PipelineConfig.from_document(document, source_path=str(config_path))
    except HabitatFormaError as error:
        raise ConfigError(f"{config_path}: {error}", findings) from error
