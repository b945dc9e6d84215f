"""
Stage orchestration: sweep -> membrane FEA -> shield -> toolpaths -> budget -> report.

Every stage writes its artifacts as soon as it finishes, so a later failure
still leaves the earlier files on disk next to a partial report.json.
"""
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from src.config import load_config
from src.design_opt import mesh_ref_for, non_dominated_ranks, objective_matrix, sweep, sweep_radii
from src.errors import HabitatFormaError, NoFeasibleDesignError, PreconditionError, StageError
from src.parsers import read_obj
from src.shield import (deployment_timeline, generate_shield, regolith_budget, self_weight_stress,
                        size_thickness, toolpaths)
from src.solvers.fea import LoadCase, assemble_and_solve, element_to_vertex, extract_isocontours
from src.solvers.formfind import membrane_tension_check
from src.writers import (build_manifest, write_fea_csv, write_json_report, write_obj, write_polylines_csv,
                         write_relaxation_trace)

logger = logging.getLogger(__name__)

STAGES = ("sweep", "membrane_fea", "shield", "toolpaths", "budget", "report")
REPORT_NAME = "report.json"


@dataclass
class PipelineReport:
    """results is deterministic for a given config; timings is not."""

    results: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_dict(self, out_dir):
        return {
            "results": self.results,
            "manifest": build_manifest(out_dir, self.artifacts),
            "timings": self.timings,
        }


class PipelineRun:
    def __init__(self, config, out_dir):
        self.config = config
        self.out_dir = out_dir
        self.report = PipelineReport()
        self.report.results["status"] = "running"
        self.report.results["config"] = _config_echo(config)

    def path(self, relative_path):
        return os.path.join(self.out_dir, relative_path)

    def emit(self, relative_path):
        self.report.artifacts.append(relative_path)
        return self.path(relative_path)

    @contextmanager
    def stage(self, name):
        logger.info("Stage %s", name)
        start = time.perf_counter()
        try:
            yield
        except (HabitatFormaError, OSError) as error:
            self.report.timings[name] = time.perf_counter() - start
            self.fail(name, error)
            raise StageError(name, error) from error
        self.report.timings[name] = time.perf_counter() - start
        logger.debug("Stage %s finished in %.2f s", name, self.report.timings[name])

    def fail(self, name, error):
        logger.error("Stage %s failed: %s", name, error)
        self.report.results["status"] = "failed"
        self.report.results["failed_stage"] = name
        self.report.results["error"] = f"{type(error).__name__}: {error}"
        if name == "sweep":
            self._collect_sweep_files()
        self.write_report()

    def _collect_sweep_files(self):
        sweep_config = self.config.sweep
        try:
            radii = sweep_radii(sweep_config.radius_min, sweep_config.radius_max, sweep_config.step)
        except PreconditionError:
            radii = []
        for relative_path in [mesh_ref_for(radius) for radius in radii] + ["pareto.csv"]:
            if os.path.isfile(self.path(relative_path)) and relative_path not in self.report.artifacts:
                self.report.artifacts.append(relative_path)

    def write_report(self):
        write_json_report(self.path(REPORT_NAME), self.report.to_dict(self.out_dir))
        return self.path(REPORT_NAME)


def _config_echo(config):
    """The merged config document without output_dir, which varies between runs."""
    return {key: value for key, value in config.document.items() if key != "output_dir"}


def _ranked_points(points):
    evaluated = [p for p in points if not p.failed]
    ranks = dict(zip(map(id, evaluated), non_dominated_ranks(objective_matrix(evaluated)).tolist()))
    rows = []
    for point in points:
        row = point.summary()
        row["pareto_rank"] = ranks.get(id(point))
        rows.append(row)
    return rows


def run_sweep_stage(run, jobs=1):
    config = run.config
    try:
        outcome = sweep(config.sweep.radius_min, config.sweep.radius_max, config.sweep.step,
                        config.design_settings(), config.sweep.selection_rule, jobs=jobs, out_dir=run.out_dir)
    except NoFeasibleDesignError as error:
        run.report.results["nearest_design"] = error.nearest.summary()
        raise
    run.report.artifacts.extend(outcome.artifacts)
    selected = outcome.selected
    write_obj(selected.mesh, run.emit("membrane.obj"), comment=f"selected membrane r={selected.radius:.3f} m")

    front = outcome.front
    run.report.results["sweep"] = {
        "radii": len(outcome.points),
        "failed": sum(1 for p in outcome.points if p.failed),
        "front_size": len(front.points),
        "knee_radius_m": front.points[front.knee_index].radius if front.knee_index is not None else None,
        "selection_rule": front.selection_rule,
        "required_floor_area_m2": front.required_floor_area,
        "points": _ranked_points(outcome.points),
    }
    run.report.results["selected_design"] = selected.summary()

    if config.formfind.record_trace:
        write_relaxation_trace(run.emit("relaxation_trace.csv"), selected.formfind.trace)
    return selected


def run_membrane_stage(run, selected):
    config = run.config
    membrane = config.membrane
    mesh = selected.mesh
    result = assemble_and_solve(mesh, membrane, [LoadCase.pressure(config.formfind.pressure)],
                                mesh.boundary_vertices, solver=config.fea.solver, rtol=config.fea.rtol)
    write_fea_csv(run.emit("fea_membrane.csv"), result)

    vertex_stress = element_to_vertex(mesh, result.von_mises)
    low, high = float(vertex_stress.min()), float(vertex_stress.max())
    levels = np.linspace(low, high, config.fea.contour_levels + 2)[1:-1] if high > low else []
    contours = extract_isocontours(mesh, vertex_stress, levels)
    write_polylines_csv(run.emit("contours_membrane.csv"),
                        [(index, level, polylines) for index, (level, polylines) in enumerate(contours)],
                        index_column="level_index", value_column="level")

    check = membrane_tension_check(selected.formfind, membrane)
    run.report.results["membrane"] = {
        "material": membrane.name,
        "fitted_radius_m": selected.formfind.fitted_sphere.radius,
        "thin_wall_stress_pa": check.max_stress,
        "utilization": check.utilization,
        "strength_utilization": check.strength_utilization,
        "overstressed": check.overstressed,
        "fea_max_von_mises_pa": result.max_von_mises,
        "fea_max_displacement_m": result.max_displacement,
        "fea_utilization": result.max_von_mises / membrane.allowable_stress,
        "cg_iterations": result.iterations,
    }
    return result


def run_shield_stage(run, membrane_mesh):
    config = run.config
    material = config.shield_mat
    sizing = size_thickness(membrane_mesh, config.shield, material, config.dose,
                            config.thickness_bounds, config.thickness_resolution, config.fea.gravity)
    spec = replace(config.shield, thickness=sizing.thickness)
    shells = generate_shield(membrane_mesh, spec)
    write_obj(shells.inner, run.emit("shield_inner.obj"), comment=f"shield inner face, gap {spec.gap} m")
    write_obj(shells.outer, run.emit("shield_outer.obj"), comment=f"shield outer face, thickness {spec.thickness} m")

    _, analysis = self_weight_stress(membrane_mesh, spec, material, sizing.thickness, config.fea.gravity,
                                     solver=config.fea.solver)
    write_fea_csv(run.emit("fea_shield.csv"), analysis)

    run.report.results["shield"] = {
        "material": material.name,
        "thickness_m": sizing.thickness,
        "governing": sizing.governing,
        "structural_thickness_m": sizing.structural_thickness,
        "radiation_thickness_m": sizing.radiation_thickness,
        "max_von_mises_pa": analysis.max_von_mises,
        "max_displacement_m": analysis.max_displacement,
        "allowable_stress_pa": sizing.allowable_stress,
        "min_membrane_gap_m": shells.min_membrane_gap,
        "surface_dose_msv_per_year": config.dose.surface_dose,
        "shielded_dose_msv_per_year": config.dose.shielded_dose(sizing.thickness),
        "sizing_evaluations": sizing.evaluations,
    }
    return spec, shells


def run_toolpath_stage(run, spec, shells):
    layers, curves = toolpaths(shells.mid, spec)
    write_polylines_csv(run.emit("toolpaths.csv"),
                        [(layer.layer_index, layer.z, layer.contours) for layer in layers])
    write_polylines_csv(run.emit("meridians.csv"),
                        [(index, azimuth, [curve]) for index, (azimuth, curve) in enumerate(curves)],
                        index_column="meridian_index", value_column="azimuth_rad")
    run.report.results["toolpaths"] = {
        "layer_height_m": spec.layer_height,
        "layers": len(layers),
        "contours": sum(len(layer.contours) for layer in layers),
        "contour_length_m": sum(layer.path_length for layer in layers),
        "meridians": len(curves),
        "meridian_length_m": sum(curve.length for _, curve in curves),
    }


def run_budget_stage(run, spec, shells):
    config = run.config
    budget = regolith_budget(config.pod, shells.mid, spec, config.deposition_rate)
    timeline = deployment_timeline(config.pod, budget)
    if budget.margin_volume < 0:
        logger.warning("Shield needs %.1f m3 more regolith than the pod excavation yields", -budget.margin_volume)
    run.report.results["budget"] = budget.to_dict()
    run.report.results["deployment"] = {
        "drilling_h": timeline.drilling_hours,
        "printing_h": timeline.printing_hours,
        "total_h": timeline.total_hours,
    }


def _finish(run):
    with run.stage("report"):
        run.report.results["status"] = "ok"
        run.report.timings["report"] = 0.0
        run.write_report()
    logger.info("Report written to %s", run.path(REPORT_NAME))
    return run.report


def _start(config_path, out_dir):
    overrides = {"output_dir": out_dir} if out_dir is not None else None
    config = load_config(config_path, overrides)
    os.makedirs(config.output_dir, exist_ok=True)
    return PipelineRun(config, config.output_dir)


def run_pipeline(config_path, out_dir=None, jobs=1):
    """
    Runs every stage for one config file.

    Args:
        config_path: JSON config path.
        out_dir: Overrides output_dir from the config.
        jobs: Worker processes for the design sweep.

    Returns:
        PipelineReport of the finished run.

    Raises:
        ConfigError: the config does not validate.
        StageError: a stage failed; report.json names it.
    """
    run = _start(config_path, out_dir)
    with run.stage("sweep"):
        selected = run_sweep_stage(run, jobs)
    with run.stage("membrane_fea"):
        run_membrane_stage(run, selected)
    with run.stage("shield"):
        spec, shells = run_shield_stage(run, selected.mesh)
    with run.stage("toolpaths"):
        run_toolpath_stage(run, spec, shells)
    with run.stage("budget"):
        run_budget_stage(run, spec, shells)
    return _finish(run)


def run_sweep_only(config_path, out_dir=None, jobs=1):
    """Sweep and selection only: designs/, pareto.csv, membrane.obj and report.json."""
    run = _start(config_path, out_dir)
    with run.stage("sweep"):
        run_sweep_stage(run, jobs)
    return _finish(run)


def run_shield_only(config_path, membrane_path, out_dir=None):
    """Shield, toolpaths and budget for an existing membrane OBJ."""
    run = _start(config_path, out_dir)
    with run.stage("shield"):
        membrane_mesh = read_obj(membrane_path)
        run.report.results["membrane_source"] = os.path.basename(str(membrane_path))
        spec, shells = run_shield_stage(run, membrane_mesh)
    with run.stage("toolpaths"):
        run_toolpath_stage(run, spec, shells)
    with run.stage("budget"):
        run_budget_stage(run, spec, shells)
    return _finish(run)
