import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse

from src.errors import (ConvergenceError, DegenerateFitError, DivergenceError, MeshError,
                        PreconditionError)
from src.geometry import Point3, mean_edge_length
from src.materials import KEVLAR

logger = logging.getLogger(__name__)

DEFAULT_PRESSURE = 101325.0
NODAL_MASS = 1.0
PROGRESS_INTERVAL = 2000


@dataclass(frozen=True)
class FormFindConfig:
    """
    Dynamic relaxation settings.

    axial_stiffness is the edge spring EA in newtons; None derives it from the
    membrane material as E * t * mean edge length. residual_tolerance None
    means 1e-4 * pressure * mean triangle area (never below 1e-6 N).
    """

    pressure: float = DEFAULT_PRESSURE
    axial_stiffness: Optional[float] = None
    rest_length_factor: float = 1.0
    kinetic_damping: bool = True
    viscous_damping: float = 0.0
    max_iterations: int = 100_000
    residual_tolerance: Optional[float] = None
    time_step_safety: float = 0.5
    record_trace: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.pressure) and self.pressure >= 0):
            raise PreconditionError(f"pressure must be finite and >= 0, got {self.pressure!r}")
        if self.axial_stiffness is not None and not (math.isfinite(self.axial_stiffness) and self.axial_stiffness > 0):
            raise PreconditionError(f"axial_stiffness must be > 0, got {self.axial_stiffness!r}")
        if not (math.isfinite(self.rest_length_factor) and self.rest_length_factor > 0):
            raise PreconditionError("rest_length_factor must be > 0")
        if not (math.isfinite(self.viscous_damping) and self.viscous_damping >= 0):
            raise PreconditionError("viscous_damping must be >= 0")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise PreconditionError("max_iterations must be a positive integer")
        if self.residual_tolerance is not None and not (
                math.isfinite(self.residual_tolerance) and self.residual_tolerance > 0):
            raise PreconditionError("residual_tolerance must be > 0")
        if not 0 < self.time_step_safety <= 1:
            raise PreconditionError("time_step_safety must lie in (0, 1]")


class SphereFit(NamedTuple):
    center: Point3
    radius: float
    rms: float


@dataclass(frozen=True, eq=False)
class FormFoundResult:
    mesh: object
    iterations: int
    final_residual: float
    fitted_sphere: Optional[SphereFit]
    max_edge_tension: float
    pressure: float
    residual_tolerance: float
    axial_stiffness: float
    rest_lengths: np.ndarray
    trace: tuple = ()


class MembraneCheck(NamedTuple):
    max_stress: float
    allowable_stress: float
    utilization: float
    strength_utilization: float
    overstressed: bool


def derive_axial_stiffness(mesh, material=KEVLAR):
    """Edge spring EA from a membrane material, using the mean edge length as strip width."""
    return material.youngs_modulus * material.thickness * mean_edge_length(mesh)


def resolve_tolerance(mesh, config):
    if config.residual_tolerance is not None:
        return config.residual_tolerance
    mean_area = float(mesh.triangle_areas().mean()) if mesh.triangle_count else 0.0
    return max(1e-4 * config.pressure * mean_area, 1e-6)


class _ForceModel:
    """Out-of-balance nodal forces from edge springs and internal pressure."""

    def __init__(self, mesh, stiffness, rest_lengths, pressure):
        self.edges = mesh.edges
        self.triangles = mesh.triangles
        self.stiffness = stiffness
        self.rest_lengths = rest_lengths
        self.pressure = pressure
        vertex_count, edge_count, face_count = mesh.vertex_count, len(self.edges), mesh.triangle_count
        edge_ids = np.arange(edge_count)
        self.edge_incidence = sparse.csr_matrix(
            (np.r_[np.ones(edge_count), -np.ones(edge_count)],
             (np.r_[self.edges[:, 0], self.edges[:, 1]], np.r_[edge_ids, edge_ids])),
            shape=(vertex_count, edge_count),
        )
        self.face_incidence = sparse.csr_matrix(
            (np.full(3 * face_count, 1.0 / 3.0),
             (self.triangles.T.reshape(-1), np.tile(np.arange(face_count), 3))),
            shape=(vertex_count, face_count),
        )

    def tensions(self, positions):
        chord = positions[self.edges[:, 1]] - positions[self.edges[:, 0]]
        length = np.linalg.norm(chord, axis=1)
        tension = self.stiffness * (length - self.rest_lengths) / self.rest_lengths
        return chord, length, tension

    def forces(self, positions):
        chord, length, tension = self.tensions(positions)
        forces = self.edge_incidence @ ((tension / length)[:, None] * chord)
        if self.pressure:
            corners = positions[self.triangles]
            area_vectors = 0.5 * np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
            forces += self.pressure * (self.face_incidence @ area_vectors)
        return forces, tension


def _max_free_force(forces, free):
    if not free.any():
        return 0.0
    return float(np.linalg.norm(forces[free], axis=1).max())


def residual_norm(mesh, config, rest_lengths=None, material=KEVLAR):
    """
    Largest out-of-balance force magnitude over free vertices, in newtons.

    Rest lengths default to the current edge lengths times rest_length_factor;
    pass FormFoundResult.rest_lengths to check a relaxed mesh.
    """
    stiffness = config.axial_stiffness or derive_axial_stiffness(mesh, material)
    if rest_lengths is None:
        rest_lengths = config.rest_length_factor * mesh.edge_lengths()
    model = _ForceModel(mesh, stiffness, np.asarray(rest_lengths, dtype=float), config.pressure)
    forces, _ = model.forces(np.array(mesh.vertices))
    return _max_free_force(forces, ~mesh.anchored)


def _log_progress(iteration, total, residual, tolerance):
    logger.debug("relaxation %d/%d: residual %.4g N (tolerance %.4g N)", iteration, total, residual, tolerance)


def form_find(mesh, config, material=KEVLAR):
    """
    Relaxes an anchored membrane mesh under internal pressure.

    Explicit pseudo-dynamics with lumped unit masses. The time step is
    time_step_safety * sqrt(2m / S_max), where S_max is the largest summed
    edge stiffness at a vertex. With kinetic damping, all velocities are
    zeroed and the step is undone whenever the kinetic energy drops.

    Args:
        mesh: TriMesh with at least one anchored vertex.
        config: FormFindConfig.
        material: membrane material used when config.axial_stiffness is None.

    Returns:
        FormFoundResult. The residual is checked before each step, so the
        returned geometry is exactly the one that met the tolerance.

    Raises:
        ConvergenceError: max_iterations reached above tolerance.
        DivergenceError: a coordinate became non-finite.
    """
    if not mesh.anchored.any():
        raise PreconditionError("form finding needs at least one anchored vertex")
    if mesh.triangle_count == 0:
        raise PreconditionError("form finding needs a triangulated mesh")

    stiffness = config.axial_stiffness or derive_axial_stiffness(mesh, material)
    rest_lengths = config.rest_length_factor * mesh.edge_lengths()
    if np.any(rest_lengths <= 0):
        raise MeshError("mesh has zero-length edges")
    tolerance = resolve_tolerance(mesh, config)
    model = _ForceModel(mesh, stiffness, rest_lengths, config.pressure)

    free = ~mesh.anchored
    edge_stiffness = stiffness / rest_lengths
    nodal_stiffness = np.bincount(mesh.edges.reshape(-1), weights=np.repeat(edge_stiffness, 2),
                                  minlength=mesh.vertex_count)
    dt = config.time_step_safety * math.sqrt(2.0 * NODAL_MASS / nodal_stiffness.max())
    damping = config.viscous_damping * dt / 2.0

    positions = np.array(mesh.vertices)
    velocities = np.zeros_like(positions)
    previous_energy = 0.0
    trace = []
    logger.debug("Relaxing %r: EA=%.4g N, dt=%.4g s, tolerance=%.4g N", mesh, stiffness, dt, tolerance)

    iteration = 0
    while True:
        forces, tension = model.forces(positions)
        forces[~free] = 0.0
        residual = _max_free_force(forces, free)
        if config.record_trace:
            trace.append((iteration, previous_energy, residual))
        if iteration % PROGRESS_INTERVAL == 0:
            _log_progress(iteration, config.max_iterations, residual, tolerance)
        if residual <= tolerance:
            break
        if iteration >= config.max_iterations:
            raise ConvergenceError(residual, iteration, tolerance)

        iteration += 1
        velocities = ((1.0 - damping) * velocities + (dt / NODAL_MASS) * forces) / (1.0 + damping)
        stepped = positions + dt * velocities
        if not np.all(np.isfinite(stepped)):
            raise DivergenceError(iteration)
        energy = 0.5 * NODAL_MASS * float(np.einsum("ij,ij->", velocities, velocities))
        if config.kinetic_damping and energy < previous_energy:
            # Energy peak passed: restart from rest at the last position.
            velocities[:] = 0.0
            previous_energy = 0.0
            continue
        positions = stepped
        previous_energy = energy

    relaxed = mesh.with_vertices(positions)
    try:
        fitted = fit_sphere(positions[free])
    except DegenerateFitError as error:
        logger.warning("No sphere fit for the relaxed mesh: %s", error)
        fitted = None
    logger.info("Form finding converged in %d iterations (residual %.3g N)", iteration, residual)
    return FormFoundResult(
        mesh=relaxed,
        iterations=iteration,
        final_residual=residual,
        fitted_sphere=fitted,
        max_edge_tension=float(tension.max()) if len(tension) else 0.0,
        pressure=config.pressure,
        residual_tolerance=tolerance,
        axial_stiffness=stiffness,
        rest_lengths=rest_lengths,
        trace=tuple(trace),
    )


def fit_sphere(points):
    """
    Algebraic least-squares sphere through a point cloud.

    Solves |p|^2 = 2 c.p + (r^2 - |c|^2) for centre c and radius r, after
    shifting the points to their centroid.

    Returns:
        SphereFit(center, radius, rms) with rms the root-mean-square radial deviation.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) < 4:
        raise DegenerateFitError(f"sphere fit needs at least 4 points, got {len(points)}")
    centroid = points.mean(axis=0)
    shifted = points - centroid
    system = np.column_stack([2.0 * shifted, np.ones(len(points))])
    rhs = np.einsum("ij,ij->i", shifted, shifted)
    solution, _, rank, singular_values = np.linalg.lstsq(system, rhs, rcond=None)
    if rank < 4 or singular_values[-1] <= 1e-10 * singular_values[0]:
        raise DegenerateFitError("points are coplanar or otherwise degenerate")
    center = solution[:3]
    radius_sq = solution[3] + center @ center
    if radius_sq <= 0:
        raise DegenerateFitError("no real sphere fits the points")
    radius = math.sqrt(radius_sq)
    deviations = np.linalg.norm(shifted - center, axis=1) - radius
    absolute_center = center + centroid
    return SphereFit(Point3(*map(float, absolute_center)), radius, float(np.sqrt(np.mean(deviations ** 2))))


def thin_wall_stress(pressure, radius, thickness):
    """Membrane stress of a pressurised spherical shell, pR/(2t)."""
    return pressure * radius / (2.0 * thickness)


def membrane_tension_check(result, material):
    """
    Compares the thin-wall membrane stress of a form-found shape with the material.

    A utilization above 1 is flagged and logged, not raised.
    """
    if result.fitted_sphere is None:
        raise PreconditionError("membrane check needs a fitted sphere")
    stress = thin_wall_stress(result.pressure, result.fitted_sphere.radius, material.thickness)
    utilization = stress / material.allowable_stress
    check = MembraneCheck(
        max_stress=stress,
        allowable_stress=material.allowable_stress,
        utilization=utilization,
        strength_utilization=stress / material.tensile_strength,
        overstressed=utilization > 1.0,
    )
    if check.overstressed:
        logger.warning("Membrane stress %.3g MPa exceeds the allowable %.3g MPa",
                       stress / 1e6, material.allowable_stress / 1e6)
    return check
