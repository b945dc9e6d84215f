"""
Linear-elastic membrane finite elements on triangle meshes.

Each triangle is a constant strain triangle (CST) in its own plane. Element
stiffness is rotated to global coordinates, assembled into a sparse matrix
and solved with Jacobi-preconditioned conjugate gradient (or a direct sparse
factorisation when exact linearity matters).
"""
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from src.errors import MeshError, PreconditionError, RigidBodyModeError
from src.geometry import DEFAULT_CHAIN_TOLERANCE, contour_polylines
from src.materials import LUNAR_GRAVITY
from src.solvers.cg import preconditioned_cg

logger = logging.getLogger(__name__)

AXES = {"x": 0, "y": 1, "z": 2}
LOAD_KINDS = ("internal_pressure", "gravity_self_weight", "nodal_forces")
SOLVERS = ("cg", "direct")
EQUILIBRIUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class LoadCase:
    """
    One load case.

    internal_pressure: magnitude in Pa, acting along the outward triangle normals.
    gravity_self_weight: magnitude in m/s^2 along the unit direction.
    nodal_forces: explicit (vertex, (fx, fy, fz)) pairs in newtons.
    """

    kind: str
    magnitude: float = 0.0
    direction: tuple = (0.0, 0.0, -1.0)
    forces: tuple = ()

    def __post_init__(self):
        if self.kind not in LOAD_KINDS:
            raise PreconditionError(f"unknown load kind '{self.kind}', expected one of {LOAD_KINDS}")
        if not math.isfinite(self.magnitude):
            raise PreconditionError("load magnitude must be finite")
        direction = tuple(float(value) for value in self.direction)
        if self.kind == "gravity_self_weight" and abs(math.sqrt(sum(v * v for v in direction)) - 1.0) > 1e-9:
            raise PreconditionError("gravity direction must be a unit vector")
        forces = tuple((int(vertex), tuple(float(value) for value in force)) for vertex, force in self.forces)
        if any(len(force) != 3 or not all(math.isfinite(v) for v in force) for _, force in forces):
            raise PreconditionError("nodal forces must be finite 3-vectors")
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "forces", forces)

    @classmethod
    def pressure(cls, pressure):
        return cls("internal_pressure", float(pressure))

    @classmethod
    def gravity(cls, acceleration=LUNAR_GRAVITY, direction=(0.0, 0.0, -1.0)):
        return cls("gravity_self_weight", float(acceleration), tuple(direction))

    @classmethod
    def nodal(cls, forces):
        items = forces.items() if isinstance(forces, Mapping) else forces
        return cls("nodal_forces", forces=tuple(items))

    def scaled(self, factor):
        if self.kind == "nodal_forces":
            return LoadCase.nodal([(vertex, tuple(factor * v for v in force)) for vertex, force in self.forces])
        return LoadCase(self.kind, self.magnitude * factor, self.direction)


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    displacements: np.ndarray
    element_stress: np.ndarray
    von_mises: np.ndarray
    max_displacement: float
    max_von_mises: float
    reaction_sum: np.ndarray
    total_load: np.ndarray
    element_axes: np.ndarray
    iterations: int = 0
    relative_residual: float = 0.0


class ElementGeometry(NamedTuple):
    axis_1: np.ndarray
    axis_2: np.ndarray
    normal: np.ndarray
    area: np.ndarray
    strain_displacement: np.ndarray
    transform: np.ndarray


def plane_stress_matrix(youngs_modulus, poisson_ratio):
    factor = youngs_modulus / (1.0 - poisson_ratio ** 2)
    return factor * np.array([
        [1.0, poisson_ratio, 0.0],
        [poisson_ratio, 1.0, 0.0],
        [0.0, 0.0, 0.5 * (1.0 - poisson_ratio)],
    ])


def element_geometry(mesh):
    """Local frames, areas, CST strain-displacement matrices and 6x9 frame transforms."""
    corners = mesh.vertices[mesh.triangles]
    edge_01 = corners[:, 1] - corners[:, 0]
    edge_02 = corners[:, 2] - corners[:, 0]
    normal = np.cross(edge_01, edge_02)
    double_area = np.linalg.norm(normal, axis=1)
    if np.any(double_area <= 0):
        raise MeshError(f"{int(np.sum(double_area <= 0))} degenerate triangles cannot carry membrane stress")
    normal /= double_area[:, None]
    axis_1 = edge_01 / np.linalg.norm(edge_01, axis=1)[:, None]
    axis_2 = np.cross(normal, axis_1)

    relative = corners - corners[:, :1]
    x = np.einsum("fij,fj->fi", relative, axis_1)
    y = np.einsum("fij,fj->fi", relative, axis_2)
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)

    count = mesh.triangle_count
    strain_displacement = np.zeros((count, 3, 6))
    strain_displacement[:, 0, 0::2] = b
    strain_displacement[:, 1, 1::2] = c
    strain_displacement[:, 2, 0::2] = c
    strain_displacement[:, 2, 1::2] = b
    strain_displacement /= double_area[:, None, None]

    transform = np.zeros((count, 6, 9))
    for node in range(3):
        transform[:, 2 * node, 3 * node:3 * node + 3] = axis_1
        transform[:, 2 * node + 1, 3 * node:3 * node + 3] = axis_2
    return ElementGeometry(axis_1, axis_2, normal, 0.5 * double_area, strain_displacement, transform)


def element_dofs(mesh):
    return (3 * mesh.triangles[:, :, None] + np.arange(3)).reshape(-1, 9)


def assemble_stiffness(mesh, material):
    """
    Global (3V, 3V) CSR stiffness matrix before any constraint is applied.

    Returns:
        (stiffness, ElementGeometry)
    """
    geometry = element_geometry(mesh)
    elasticity = plane_stress_matrix(material.youngs_modulus, material.poisson_ratio)
    local = np.einsum("fki,kl,flj->fij", geometry.strain_displacement, elasticity, geometry.strain_displacement)
    local *= (material.thickness * geometry.area)[:, None, None]
    global_blocks = np.einsum("fki,fkl,flj->fij", geometry.transform, local, geometry.transform)

    dofs = element_dofs(mesh)
    rows = np.repeat(dofs, 9, axis=1).reshape(-1)
    cols = np.tile(dofs, (1, 9)).reshape(-1)
    size = 3 * mesh.vertex_count
    stiffness = sparse.coo_matrix((global_blocks.reshape(-1), (rows, cols)), shape=(size, size)).tocsr()
    return stiffness, geometry


def nodal_load_vector(mesh, material, loads):
    """Consistent (3V,) load vector: pressure and self-weight lumped equally to triangle corners."""
    forces = np.zeros((mesh.vertex_count, 3))
    for load in loads:
        if load.kind == "internal_pressure":
            share = load.magnitude * mesh.face_area_vectors() / 3.0
            for corner in range(3):
                np.add.at(forces, mesh.triangles[:, corner], share)
        elif load.kind == "gravity_self_weight":
            weight = material.density * material.thickness * mesh.triangle_areas() * load.magnitude / 3.0
            share = weight[:, None] * np.asarray(load.direction)
            for corner in range(3):
                np.add.at(forces, mesh.triangles[:, corner], share)
        else:
            for vertex, force in load.forces:
                if not 0 <= vertex < mesh.vertex_count:
                    raise PreconditionError(f"nodal force on unknown vertex {vertex}")
                forces[vertex] += force
    return forces.reshape(-1)


def normalize_supports(mesh, fixed):
    """
    Turns a vertex collection or a {vertex: axes} mapping into {vertex: {axis indices}}.

    A plain collection (or boolean mask) pins all three translations.
    """
    if isinstance(fixed, Mapping):
        items = fixed.items()
    else:
        fixed = np.asarray(list(fixed) if not isinstance(fixed, np.ndarray) else fixed)
        if fixed.dtype == bool:
            fixed = np.flatnonzero(fixed)
        items = ((vertex, "xyz") for vertex in fixed.reshape(-1))
    supports = {}
    for vertex, axes in items:
        vertex = int(vertex)
        if not 0 <= vertex < mesh.vertex_count:
            raise PreconditionError(f"support on unknown vertex {vertex}")
        try:
            supports.setdefault(vertex, set()).update(AXES[axis] for axis in str(axes).lower())
        except KeyError:
            raise PreconditionError(f"support axes must be drawn from 'xyz', got '{axes}'") from None
    return supports


def roller_ring_supports(mesh, ring=None):
    """
    Vertical supports on a base ring plus the minimum in-plane restraint.

    Every ring vertex is held in z. The first ring vertex is also held in x
    and y, and the ring vertex farthest from it is held against rotation
    about the vertical axis. The ring can expand radially.
    """
    ring = mesh.boundary_vertices if ring is None else np.asarray(ring, dtype=np.int64)
    if len(ring) < 3:
        raise PreconditionError("a roller ring needs at least 3 vertices")
    supports = {int(vertex): "z" for vertex in ring}
    first = int(ring[0])
    offsets = mesh.vertices[ring, :2] - mesh.vertices[first, :2]
    farthest = int(ring[int(np.argmax(np.linalg.norm(offsets, axis=1)))])
    dx, dy = mesh.vertices[farthest, :2] - mesh.vertices[first, :2]
    supports[first] = "xyz"
    supports[farthest] = "zy" if abs(dx) >= abs(dy) else "zx"
    return supports


def check_rigid_body_modes(vertices, supports):
    """Raises RigidBodyModeError unless the supports restrain all six rigid motions."""
    if not supports:
        raise RigidBodyModeError("no supported vertices")
    centre = vertices.mean(axis=0)
    scale = max(float(np.abs(vertices - centre).max()), 1.0)
    rows = []
    for vertex, axes in sorted(supports.items()):
        arm = (vertices[vertex] - centre) / scale
        for axis in sorted(axes):
            mode = np.zeros(6)
            mode[axis] = 1.0
            for rotation in range(3):
                mode[3 + rotation] = np.cross(np.eye(3)[rotation], arm)[axis]
            rows.append(mode)
    rank = np.linalg.matrix_rank(np.array(rows), tol=1e-9)
    if rank < 6:
        raise RigidBodyModeError(f"supports restrain only {rank} of 6 rigid-body modes")


def assemble_and_solve(mesh, material, loads, fixed, solver="cg", rtol=1e-8):
    """
    Static membrane analysis.

    Args:
        mesh: TriMesh, manifold, no degenerate triangles.
        material: MaterialSpec (thickness and density are used for self-weight).
        loads: Iterable of LoadCase.
        fixed: Vertex collection (all translations held) or {vertex: "xyz"-subset}.
        solver: "cg" (default) or "direct".
        rtol: Relative residual target for the iterative solve.

    Returns:
        AnalysisResult. Degrees of freedom with no stiffness and no load (for
        instance out-of-plane motion of a flat patch) are held automatically.

    Raises:
        RigidBodyModeError: supports insufficient or a loaded unknown without stiffness.
        SolverError: the iterative solve did not converge.
    """
    if solver not in SOLVERS:
        raise PreconditionError(f"solver must be one of {SOLVERS}, got '{solver}'")
    loads = list(loads)
    supports = normalize_supports(mesh, fixed)
    check_rigid_body_modes(mesh.vertices, supports)
    stiffness, geometry = assemble_stiffness(mesh, material)
    load = nodal_load_vector(mesh, material, loads)

    size = 3 * mesh.vertex_count
    constrained = np.zeros(size, dtype=bool)
    for vertex, axes in supports.items():
        constrained[[3 * vertex + axis for axis in axes]] = True
    diagonal = stiffness.diagonal()
    unstiffened = (diagonal <= 1e-12 * diagonal.max()) & ~constrained
    if unstiffened.any():
        if np.any(load[unstiffened] != 0):
            raise RigidBodyModeError("load applied along a direction with no membrane stiffness")
        logger.debug("Holding %d unknowns without stiffness", int(unstiffened.sum()))
        constrained |= unstiffened
    free = ~constrained

    displacements = np.zeros(size)
    iterations, relative = 0, 0.0
    if free.any():
        reduced = stiffness[free][:, free]
        rhs = load[free]
        if solver == "cg":
            outcome = preconditioned_cg(reduced, rhs, rtol=rtol)
            displacements[free] = outcome.solution
            iterations, relative = outcome.iterations, outcome.relative_residual
        elif np.any(rhs != 0):
            displacements[free] = spsolve(reduced.tocsc(), rhs)
            relative = float(np.linalg.norm(rhs - reduced @ displacements[free]) / np.linalg.norm(rhs))

    reactions = stiffness @ displacements - load
    reactions[free] = 0.0
    reaction_sum = reactions.reshape(-1, 3).sum(axis=0)
    total_load = load.reshape(-1, 3).sum(axis=0)
    imbalance = np.linalg.norm(reaction_sum + total_load)
    if imbalance > EQUILIBRIUM_TOLERANCE * max(np.linalg.norm(total_load), 1e-300):
        logger.warning("Equilibrium check: reactions and loads differ by %.3g N", imbalance)

    element_displacements = displacements[element_dofs(mesh)]
    local = np.einsum("fij,fj->fi", geometry.transform, element_displacements)
    strain = np.einsum("fij,fj->fi", geometry.strain_displacement, local)
    stress = strain @ plane_stress_matrix(material.youngs_modulus, material.poisson_ratio).T
    equivalent = plane_stress_von_mises(stress)
    nodal = displacements.reshape(-1, 3)
    result = AnalysisResult(
        displacements=nodal,
        element_stress=stress,
        von_mises=equivalent,
        max_displacement=float(np.linalg.norm(nodal, axis=1).max()) if len(nodal) else 0.0,
        max_von_mises=float(equivalent.max()) if len(equivalent) else 0.0,
        reaction_sum=reaction_sum,
        total_load=total_load,
        element_axes=np.stack([geometry.axis_1, geometry.axis_2], axis=1),
        iterations=iterations,
        relative_residual=relative,
    )
    logger.debug("Membrane analysis: max displacement %.4g m, max von Mises %.4g Pa",
                 result.max_displacement, result.max_von_mises)
    return result


def plane_stress_von_mises(stress):
    """von Mises stress of (sxx, syy, sxy) rows."""
    stress = np.asarray(stress, dtype=float).reshape(-1, 3)
    sxx, syy, sxy = stress.T
    return np.sqrt(np.maximum(sxx ** 2 - sxx * syy + syy ** 2 + 3.0 * sxy ** 2, 0.0))


def von_mises_field(result):
    return plane_stress_von_mises(result.element_stress)


def polar_angles(mesh, origin=(0.0, 0.0, 0.0)):
    """Angle of each triangle centroid from the +z axis through origin, in radians."""
    relative = mesh.centroids() - np.asarray(origin, dtype=float)
    return np.arctan2(np.hypot(relative[:, 0], relative[:, 1]), relative[:, 2])


def directional_stress(result, directions):
    """Normal stress per element along given global directions projected into each element plane."""
    axes = result.element_axes
    cos = np.einsum("fj,fj->f", directions, axes[:, 0])
    sin = np.einsum("fj,fj->f", directions, axes[:, 1])
    norm = np.hypot(cos, sin)
    norm[norm == 0] = 1.0
    cos, sin = cos / norm, sin / norm
    sxx, syy, sxy = result.element_stress.T
    return sxx * cos ** 2 + syy * sin ** 2 + 2.0 * sxy * cos * sin


def meridional_stress(result, mesh, origin=(0.0, 0.0, 0.0)):
    """
    Meridional normal stress for a shell of revolution about the vertical axis.

    Elements centred on the axis use their first local axis, where the
    meridian direction is undefined.
    """
    relative = mesh.centroids() - np.asarray(origin, dtype=float)
    horizontal = np.hypot(relative[:, 0], relative[:, 1])
    distance = np.linalg.norm(relative, axis=1)
    safe = np.where(horizontal > 1e-12, horizontal, 1.0)
    directions = np.stack([
        relative[:, 2] * relative[:, 0] / safe,
        relative[:, 2] * relative[:, 1] / safe,
        -horizontal,
    ], axis=1) / distance[:, None]
    on_axis = horizontal <= 1e-12
    directions[on_axis] = result.element_axes[on_axis, 0]
    return directional_stress(result, directions)


def element_to_vertex(mesh, element_values):
    """Area-weighted average of element values at each vertex."""
    element_values = np.asarray(element_values, dtype=float)
    areas = mesh.triangle_areas()
    weighted = np.zeros(mesh.vertex_count)
    weights = np.zeros(mesh.vertex_count)
    for corner in range(3):
        weighted += np.bincount(mesh.triangles[:, corner], weights=areas * element_values, minlength=mesh.vertex_count)
        weights += np.bincount(mesh.triangles[:, corner], weights=areas, minlength=mesh.vertex_count)
    return np.divide(weighted, weights, out=np.zeros_like(weighted), where=weights > 0)


def extract_isocontours(mesh, scalar, levels, tolerance=DEFAULT_CHAIN_TOLERANCE):
    """
    Marching-triangles contours of a per-vertex scalar field.

    Returns:
        List of (level, polylines) in the order of levels; levels outside the
        field range give empty polyline lists.
    """
    scalar = np.asarray(scalar, dtype=float).reshape(-1)
    if len(scalar) != mesh.vertex_count:
        raise PreconditionError(f"expected {mesh.vertex_count} vertex values, got {len(scalar)}")
    contours = []
    for level in levels:
        if not math.isfinite(level):
            raise PreconditionError("contour levels must be finite")
        contours.append((float(level), contour_polylines(mesh, scalar - level, tolerance)))
    return contours
