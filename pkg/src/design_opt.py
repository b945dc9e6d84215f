"""
Design radius sweep, Pareto filtering and design selection.

Objectives per radius: maximise enclosed volume, minimise shell surface,
maximise total floor area. On a one-dimensional monotone sweep every point is
Pareto-optimal, so the default selection is constraint-first: the feasible
point with the least shell surface.
"""
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from shapely.geometry import Polygon

from src.errors import HabitatFormaError, NoFeasibleDesignError, PreconditionError, SweepError
from src.geometry import DEFAULT_CHAIN_TOLERANCE, DEFAULT_MAX_VERTICES, Plane, enclosed_volume, generate_cap_mesh, slice_by_plane, surface_area
from src.materials import KEVLAR
from src.solvers.formfind import FormFindConfig, form_find
from src.writers import write_obj, write_pareto_csv

logger = logging.getLogger(__name__)

SELECTION_RULES = ("constrained_min_surface", "knee")
MONOTONE_TOLERANCE = 1e-9
MIN_SWEEP_STEP = 1e-3  # design file names carry the radius to the millimetre


@dataclass(frozen=True)
class FloorModel:
    """
    Floor accounting for a domed habitat.

    Defaults are a calibration: a mezzanine at 3.15 m plus the pod floor
    gives about 167 m2 at r = 5.2 m.
    """

    mezzanine_height: float = 3.15
    include_pod_floor: bool = True
    pod_radius: float = 3.0
    min_cross_section_radius: float = 1.0
    base_offset: float = 1e-6

    def __post_init__(self):
        if not self.mezzanine_height >= 0:
            raise PreconditionError("mezzanine_height must be >= 0")
        if not self.pod_radius > 0:
            raise PreconditionError("pod_radius must be > 0")
        if not self.min_cross_section_radius >= 0:
            raise PreconditionError("min_cross_section_radius must be >= 0")


@dataclass(frozen=True)
class DesignConstraints:
    crew_count: int = 6
    # Calibrated so six crew need 159 m2, just under the 167 m2 design.
    area_per_crew: float = 26.5

    @property
    def required_floor_area(self):
        return self.crew_count * self.area_per_crew


@dataclass(frozen=True)
class DesignSettings:
    formfind: FormFindConfig = field(default_factory=FormFindConfig)
    floor_model: FloorModel = field(default_factory=FloorModel)
    constraints: DesignConstraints = field(default_factory=DesignConstraints)
    subdivision_level: int = 4
    membrane: object = KEVLAR
    max_vertices: int = DEFAULT_MAX_VERTICES


@dataclass(frozen=True, eq=False)
class DesignPoint:
    radius: float
    volume: float
    shell_surface: float
    floor_area_total: float
    feasible: bool
    mesh_ref: str
    note: Optional[str] = None
    iterations: int = 0
    fitted_radius: Optional[float] = None
    mesh: object = field(default=None, repr=False)
    formfind: object = field(default=None, repr=False)

    @property
    def failed(self):
        return self.note is not None

    def summary(self):
        return {
            "radius_m": self.radius,
            "volume_m3": self.volume,
            "shell_surface_m2": self.shell_surface,
            "floor_area_m2": self.floor_area_total,
            "feasible": self.feasible,
            "fitted_radius_m": self.fitted_radius,
            "relaxation_iterations": self.iterations,
            "mesh_ref": self.mesh_ref,
            "note": self.note,
        }


@dataclass(frozen=True)
class ParetoFront:
    points: tuple
    knee_index: Optional[int]
    selection_rule: str
    required_floor_area: Optional[float] = None


class SweepOutcome(NamedTuple):
    points: list
    front: ParetoFront
    selected: DesignPoint
    artifacts: list


def mesh_ref_for(radius):
    return f"designs/r{radius:.3f}.obj"


def _slice_area(mesh, height, tolerance):
    loops = slice_by_plane(mesh, Plane.horizontal(height), tolerance)
    return sum(Polygon(loop.points[:, :2]).area for loop in loops if loop.closed)


def floor_area_total(mesh, model, tolerance=DEFAULT_CHAIN_TOLERANCE):
    """
    Base disc + mezzanine slice + optional pod floor, in square metres.

    The mezzanine counts only when its slice radius sqrt(A/pi) reaches
    min_cross_section_radius.
    """
    base = _slice_area(mesh, model.base_offset, tolerance)
    mezzanine = _slice_area(mesh, model.mezzanine_height, tolerance)
    if mezzanine > 0 and math.sqrt(mezzanine / math.pi) < model.min_cross_section_radius:
        mezzanine = 0.0
    pod = math.pi * model.pod_radius ** 2 if model.include_pod_floor else 0.0
    return base + mezzanine + pod


def evaluate_design(radius, formfind_config, floor_model, constraints, subdivision_level=4, membrane=KEVLAR,
                    max_vertices=DEFAULT_MAX_VERTICES):
    """
    Generates, form-finds and measures one design radius.

    Form-finding failures do not raise: they return an infeasible point with
    the error text in `note`.
    """
    if not (math.isfinite(radius) and radius > 0):
        raise PreconditionError(f"design radius must be > 0, got {radius!r}")
    reference = mesh_ref_for(radius)
    try:
        cap = generate_cap_mesh(radius, subdivision_level, max_vertices)
        result = form_find(cap, formfind_config, membrane)
        mesh = result.mesh
        floor = floor_area_total(mesh, floor_model)
        volume = enclosed_volume(mesh, Plane.horizontal(0.0))
        shell = surface_area(mesh)
    except HabitatFormaError as error:
        logger.warning("Design r=%.3f m failed: %s", radius, error)
        return DesignPoint(radius, 0.0, 0.0, 0.0, False, reference, note=f"{type(error).__name__}: {error}")

    feasible = floor >= constraints.required_floor_area
    fitted = result.fitted_sphere.radius if result.fitted_sphere else None
    logger.debug("r=%.3f m: V=%.2f m3, S=%.2f m2, floor=%.2f m2, feasible=%s",
                 radius, volume, shell, floor, feasible)
    return DesignPoint(radius, volume, shell, floor, feasible, reference,
                       iterations=result.iterations, fitted_radius=fitted, mesh=mesh, formfind=result)


def objective_matrix(points):
    """Rows of (-volume, shell surface, -floor area): every column is minimised."""
    return np.array([[-p.volume, p.shell_surface, -p.floor_area_total] for p in points], dtype=float).reshape(-1, 3)


def dominance_matrix(objectives):
    """dominates[i, j] is True when row i dominates row j (all objectives minimised)."""
    objectives = np.asarray(objectives, dtype=float)
    no_worse = np.all(objectives[:, None, :] <= objectives[None, :, :], axis=2)
    better = np.any(objectives[:, None, :] < objectives[None, :, :], axis=2)
    return no_worse & better


def non_dominated_mask(objectives):
    objectives = np.asarray(objectives, dtype=float)
    if len(objectives) == 0:
        return np.zeros(0, dtype=bool)
    return ~dominance_matrix(objectives).any(axis=0)


def non_dominated_ranks(objectives):
    """
    Front number of every row (0 = non-dominated), by repeated peeling of
    the non-dominated set.
    """
    dominates = dominance_matrix(objectives)
    remaining_dominators = dominates.sum(axis=0)
    ranks = np.full(len(dominates), -1, dtype=int)
    current = np.flatnonzero(remaining_dominators == 0)
    rank = 0
    while len(current):
        ranks[current] = rank
        remaining_dominators = remaining_dominators - dominates[current].sum(axis=0)
        remaining_dominators[ranks >= 0] = -1
        current = np.flatnonzero(remaining_dominators == 0)
        rank += 1
    return ranks


def knee_index(objectives):
    """
    Index of the point farthest from the chord joining the two most distant
    points after min-max normalisation. Ties go to the lowest index.
    """
    objectives = np.asarray(objectives, dtype=float)
    if len(objectives) <= 2:
        return 0
    low, high = objectives.min(axis=0), objectives.max(axis=0)
    span = np.where(high > low, high - low, 1.0)
    normalised = (objectives - low) / span
    pairwise = np.linalg.norm(normalised[:, None, :] - normalised[None, :, :], axis=2)
    first, second = np.unravel_index(int(np.argmax(pairwise)), pairwise.shape)
    chord = normalised[second] - normalised[first]
    chord_length = np.linalg.norm(chord)
    if chord_length == 0:
        return 0
    relative = normalised - normalised[first]
    along = relative @ chord / chord_length
    distance = np.linalg.norm(relative - np.outer(along, chord / chord_length), axis=1)
    return int(np.flatnonzero(distance >= distance.max() - 1e-12)[0])


def pareto_front(points, selection_rule="constrained_min_surface", required_floor_area=None):
    """
    Non-dominated subset under (max volume, min shell surface, max floor area).

    Failed evaluations are left out. Points are kept in radius order and
    duplicate objective triples all survive.
    """
    if selection_rule not in SELECTION_RULES:
        raise PreconditionError(f"unknown selection rule '{selection_rule}'")
    candidates = sorted((p for p in points if not p.failed), key=lambda p: p.radius)
    if not candidates:
        return ParetoFront((), None, selection_rule, required_floor_area)
    mask = non_dominated_mask(objective_matrix(candidates))
    front = tuple(p for p, keep in zip(candidates, mask) if keep)
    knee = knee_index(objective_matrix(front))
    return ParetoFront(front, knee, selection_rule, required_floor_area)


def select_design(front, rule=None):
    """
    Picks the final design from a front.

    constrained_min_surface: feasible point with the least shell surface.
    knee: the front's knee point. Ties go to the smaller radius.
    """
    rule = rule or front.selection_rule
    if rule not in SELECTION_RULES:
        raise PreconditionError(f"unknown selection rule '{rule}'")
    if not front.points:
        raise PreconditionError("cannot select from an empty Pareto front")
    if rule == "knee":
        return front.points[front.knee_index or 0]
    feasible = [p for p in front.points if p.feasible]
    if not feasible:
        nearest = max(front.points, key=lambda p: (p.floor_area_total, -p.radius))
        raise NoFeasibleDesignError(nearest, front.required_floor_area)
    return min(feasible, key=lambda p: (p.shell_surface, p.radius))


def sweep_radii(radius_min, radius_max, step):
    if not (math.isfinite(radius_min) and math.isfinite(radius_max) and radius_min > 0):
        raise PreconditionError("sweep bounds must be finite and positive")
    if radius_min > radius_max:
        raise PreconditionError(f"radius_min {radius_min} exceeds radius_max {radius_max}")
    if not step >= MIN_SWEEP_STEP:
        raise PreconditionError(f"sweep step must be >= {MIN_SWEEP_STEP} m, got {step!r}")
    count = int(math.floor((radius_max - radius_min) / step + 1e-9)) + 1
    return [round(radius_min + k * step, 10) for k in range(count)]


def check_monotone(points):
    """Messages for every objective that decreases between consecutive radii."""
    ordered = [p for p in sorted(points, key=lambda p: p.radius) if not p.failed]
    messages = []
    for name in ("volume", "shell_surface", "floor_area_total"):
        for before, after in zip(ordered, ordered[1:]):
            earlier, later = getattr(before, name), getattr(after, name)
            if later < earlier - MONOTONE_TOLERANCE * max(abs(earlier), 1.0):
                messages.append(f"{name} drops from {earlier:.4f} at r={before.radius:.3f} "
                                f"to {later:.4f} at r={after.radius:.3f}")
    return messages


def _evaluate_radius(task):
    radius, settings = task
    return evaluate_design(radius, settings.formfind, settings.floor_model, settings.constraints,
                           settings.subdivision_level, settings.membrane, settings.max_vertices)


def sweep(radius_min, radius_max, step, settings, rule="constrained_min_surface", jobs=1, out_dir=None):
    """
    Evaluates every radius on the grid and selects a design.

    Args:
        radius_min, radius_max, step: Sweep grid in metres (bounds inclusive).
        settings: DesignSettings.
        rule: Selection rule.
        jobs: Worker processes; results are collated by radius regardless.
        out_dir: When given, per-radius OBJ files and pareto.csv are written here.

    Returns:
        SweepOutcome(points, front, selected, artifacts) where artifacts are
        paths relative to out_dir.

    Raises:
        SweepError: every radius failed.
        NoFeasibleDesignError: no point meets the floor-area constraint (the
            CSV is still written).
    """
    radii = sweep_radii(radius_min, radius_max, step)
    logger.info("Sweeping %d radii from %.3f to %.3f m", len(radii), radii[0], radii[-1])
    tasks = [(radius, settings) for radius in radii]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            points = list(executor.map(_evaluate_radius, tasks))
    else:
        points = [_evaluate_radius(task) for task in tasks]
    points.sort(key=lambda p: p.radius)

    if all(p.failed for p in points):
        raise SweepError(f"all {len(points)} design points failed; first error: {points[0].note}")
    for message in check_monotone(points):
        logger.warning("Monotonicity check: %s", message)

    front = pareto_front(points, rule, settings.constraints.required_floor_area)
    selection_error = None
    try:
        selected = select_design(front, rule)
    except NoFeasibleDesignError as error:
        selected, selection_error = None, error

    artifacts = []
    if out_dir is not None:
        front_ids = {id(p) for p in front.points}
        for point in points:
            if point.mesh is not None:
                write_obj(point.mesh, os.path.join(out_dir, point.mesh_ref), comment=f"form-found cap r={point.radius:.3f} m")
                artifacts.append(point.mesh_ref)
        write_pareto_csv(os.path.join(out_dir, "pareto.csv"), points,
                         [id(p) in front_ids for p in points],
                         [p is selected for p in points])
        artifacts.append("pareto.csv")

    if selection_error is not None:
        raise selection_error
    logger.info("Selected r=%.3f m (%s): floor %.1f m2, shell %.1f m2",
                selected.radius, rule, selected.floor_area_total, selected.shell_surface)
    return SweepOutcome(points, front, selected, artifacts)
