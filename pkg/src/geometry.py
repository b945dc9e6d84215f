"""
Triangle mesh geometry for the habitat pipeline.

Meshes are immutable numpy-backed values. Everything here is a pure function
of its arguments, so meshes can be shared freely between sweep workers.
"""
import logging
import math
import numbers
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import trimesh

from src.errors import MeshError, MeshLimitError, PreconditionError, SelfIntersectionError
from src.graph_utils import boundary_edges, chain_segments, edge_use_counts

logger = logging.getLogger(__name__)

DEFAULT_MAX_VERTICES = 1_000_000
DEFAULT_CHAIN_TOLERANCE = 1e-7
MIN_LOOP_LENGTH = 1e-3
BASE_PLANE_TOLERANCE = 1e-6
# Offsets that shrink an edge below this fraction of its length count as folds.
MIN_OFFSET_EDGE_SCALE = 0.05


class Point3(NamedTuple):
    x: float
    y: float
    z: float


def _readonly(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TriMesh:
    """
    Indexed triangle surface with per-vertex anchor flags.

    Attributes:
        vertices: (V, 3) float coordinates in metres.
        triangles: (F, 3) vertex indices, counter-clockwise seen from outside.
        anchored: (V,) booleans, True for fixed boundary-ring vertices.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    anchored: np.ndarray = None

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float).reshape(-1, 3)
        triangles = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.anchored is None:
            anchored = np.zeros(len(vertices), dtype=bool)
        else:
            anchored = np.array(self.anchored, dtype=bool).reshape(-1)

        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertex coordinates must be finite")
        if len(anchored) != len(vertices):
            raise MeshError(f"anchored has {len(anchored)} flags for {len(vertices)} vertices")
        if len(triangles):
            if triangles.min() < 0 or triangles.max() >= len(vertices):
                raise MeshError("triangle index out of range")
            if np.any((triangles[:, 0] == triangles[:, 1])
                      | (triangles[:, 1] == triangles[:, 2])
                      | (triangles[:, 2] == triangles[:, 0])):
                raise MeshError("triangle repeats a vertex")
            _, counts = edge_use_counts(triangles)
            if np.any(counts > 2):
                raise MeshError("mesh is not manifold: an edge is shared by more than two triangles")

        object.__setattr__(self, "vertices", _readonly(vertices))
        object.__setattr__(self, "triangles", _readonly(triangles))
        object.__setattr__(self, "anchored", _readonly(anchored))

    @property
    def vertex_count(self):
        return len(self.vertices)

    @property
    def triangle_count(self):
        return len(self.triangles)

    @cached_property
    def edges(self):
        return _readonly(edge_use_counts(self.triangles)[0])

    @property
    def edge_count(self):
        return len(self.edges)

    @property
    def euler_characteristic(self):
        return self.vertex_count - self.edge_count + self.triangle_count

    @cached_property
    def boundary_vertices(self):
        """Sorted indices of vertices on edges used by a single triangle."""
        return _readonly(np.unique(boundary_edges(self.triangles)))

    def face_area_vectors(self):
        """Per-triangle normal vectors with length equal to the triangle area."""
        corners = self.vertices[self.triangles]
        return 0.5 * np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])

    def triangle_areas(self):
        return np.linalg.norm(self.face_area_vectors(), axis=1)

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def edge_lengths(self):
        edges = self.edges
        return np.linalg.norm(self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]], axis=1)

    def with_vertices(self, vertices):
        """Same connectivity and anchors, new coordinates."""
        return TriMesh(vertices, self.triangles, self.anchored)

    def __repr__(self):
        return (f"TriMesh(V={self.vertex_count}, F={self.triangle_count}, "
                f"anchored={int(self.anchored.sum())})")


@dataclass(frozen=True, eq=False)
class Plane:
    origin: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        origin = np.array(self.origin, dtype=float).reshape(3)
        normal = np.array(self.normal, dtype=float).reshape(3)
        if not (np.all(np.isfinite(origin)) and np.all(np.isfinite(normal))):
            raise PreconditionError("plane origin and normal must be finite")
        if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
            raise PreconditionError(f"plane normal must have unit length, got {np.linalg.norm(normal):.12g}")
        object.__setattr__(self, "origin", _readonly(origin))
        object.__setattr__(self, "normal", _readonly(normal))

    @classmethod
    def from_normal(cls, origin, normal):
        """Builds a plane from any non-zero normal vector."""
        normal = np.asarray(normal, dtype=float)
        length = np.linalg.norm(normal)
        if not length > 0:
            raise PreconditionError("plane normal must be non-zero")
        return cls(origin, normal / length)

    @classmethod
    def horizontal(cls, z=0.0):
        return cls((0.0, 0.0, float(z)), (0.0, 0.0, 1.0))

    def signed_distances(self, points):
        return (np.asarray(points, dtype=float) - self.origin) @ self.normal


@dataclass(frozen=True, eq=False)
class Polyline3:
    """
    Ordered points. A closed polyline stores each point once and has an
    implied segment from the last point back to the first.
    """

    points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        points = np.array(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise PreconditionError("polyline points must be finite")
        if self.closed:
            if len(points) < 3:
                raise PreconditionError("a closed polyline needs at least 3 points")
            if np.array_equal(points[0], points[-1]):
                raise PreconditionError("a closed polyline must not repeat its first point")
        object.__setattr__(self, "points", _readonly(points))
        object.__setattr__(self, "closed", bool(self.closed))

    def __len__(self):
        return len(self.points)

    @property
    def length(self):
        if len(self.points) < 2:
            return 0.0
        steps = np.diff(self.points, axis=0)
        total = float(np.linalg.norm(steps, axis=1).sum())
        if self.closed:
            total += float(np.linalg.norm(self.points[0] - self.points[-1]))
        return total

    def reversed(self):
        return Polyline3(self.points[::-1].copy(), self.closed)


def predicted_vertex_count(subdivision_level):
    rings = 2 ** subdivision_level
    return 1 + 3 * rings * (rings + 1)


def generate_cap_mesh(radius, subdivision_level, max_vertices=DEFAULT_MAX_VERTICES):
    """
    Generates a hemispherical cap centred on the origin with its base ring in z=0.

    The cap is a hexagonal ring lattice: ring j of n = 2**subdivision_level
    sits at polar angle j*pi/(2n) and holds 6j vertices. Every interior vertex
    has six neighbours, triangle areas stay within a factor of two of each
    other, and each level quadruples the triangle count. Base-ring vertices
    are anchored and lie exactly on z=0.

    Args:
        radius: Cap radius in metres.
        subdivision_level: Integer >= 1.
        max_vertices: Cap on the generated vertex count.

    Returns:
        A TriMesh with V - E + F = 1.
    """
    if not (isinstance(radius, numbers.Real) and math.isfinite(radius) and radius > 0):
        raise PreconditionError(f"radius must be a positive finite number, got {radius!r}")
    if int(subdivision_level) != subdivision_level or subdivision_level < 1:
        raise PreconditionError(f"subdivision_level must be an integer >= 1, got {subdivision_level!r}")
    subdivision_level = int(subdivision_level)
    expected = predicted_vertex_count(subdivision_level)
    if expected > max_vertices:
        raise MeshLimitError(
            f"subdivision level {subdivision_level} gives {expected} vertices, above the cap of {max_vertices}"
        )

    rings = 2 ** subdivision_level
    radius = float(radius)
    vertices = np.empty((expected, 3))
    vertices[0] = (0.0, 0.0, radius)
    starts = [0]
    for j in range(1, rings + 1):
        start = 1 + 3 * j * (j - 1)
        starts.append(start)
        polar = 0.5 * math.pi * j / rings
        azimuth = 2.0 * math.pi * np.arange(6 * j) / (6 * j)
        if j == rings:
            ring_radius, height = radius, 0.0
        else:
            ring_radius, height = radius * math.sin(polar), radius * math.cos(polar)
        vertices[start:start + 6 * j, 0] = ring_radius * np.cos(azimuth)
        vertices[start:start + 6 * j, 1] = ring_radius * np.sin(azimuth)
        vertices[start:start + 6 * j, 2] = height

    def ring_index(j, positions):
        if j == 0:
            return np.zeros_like(positions)
        return starts[j] + np.mod(positions, 6 * j)

    blocks = []
    for j in range(1, rings + 1):
        sextant = np.arange(6)[:, None]
        k_up = np.arange(j)[None, :]
        outer = ring_index(j, sextant * j + k_up)
        outer_next = ring_index(j, sextant * j + k_up + 1)
        inner = ring_index(j - 1, sextant * (j - 1) + k_up)
        blocks.append(np.stack([outer, outer_next, inner], axis=-1).reshape(-1, 3))
        if j > 1:
            k_down = np.arange(j - 1)[None, :]
            inner = ring_index(j - 1, sextant * (j - 1) + k_down)
            outer_next = ring_index(j, sextant * j + k_down + 1)
            inner_next = ring_index(j - 1, sextant * (j - 1) + k_down + 1)
            blocks.append(np.stack([inner, outer_next, inner_next], axis=-1).reshape(-1, 3))
    triangles = np.concatenate(blocks)

    anchored = np.zeros(expected, dtype=bool)
    anchored[starts[rings]:] = True
    mesh = TriMesh(vertices, triangles, anchored)
    logger.debug("Generated cap r=%.3f m level %d: %r", radius, subdivision_level, mesh)
    return mesh


def surface_area(mesh):
    """Sum of triangle areas in square metres (0 for an empty mesh)."""
    if mesh.triangle_count == 0:
        return 0.0
    return float(mesh.triangle_areas().sum())


def enclosed_volume(mesh, base_plane):
    """
    Volume between a cap surface and its base plane.

    Sums signed tetrahedra from a point of the base plane; the base closure
    lies in that plane and contributes nothing.

    Raises:
        PreconditionError: a boundary vertex is farther than 1e-6 m from the plane.
    """
    if mesh.triangle_count == 0:
        return 0.0
    boundary = mesh.boundary_vertices
    if len(boundary):
        offsets = np.abs(base_plane.signed_distances(mesh.vertices[boundary]))
        if offsets.max() > BASE_PLANE_TOLERANCE:
            raise PreconditionError(
                f"mesh boundary is {offsets.max():.3g} m off the base plane (tolerance {BASE_PLANE_TOLERANCE} m)"
            )
    corners = mesh.vertices[mesh.triangles] - base_plane.origin
    signed = np.einsum("ij,ij->i", corners[:, 0], np.cross(corners[:, 1], corners[:, 2])).sum() / 6.0
    return float(abs(signed))


def mean_edge_length(mesh):
    lengths = mesh.edge_lengths()
    return float(lengths.mean()) if len(lengths) else 0.0


def _merge_close_points(points, closed, tolerance):
    kept = [points[0]]
    for point in points[1:]:
        if np.linalg.norm(point - kept[-1]) > tolerance:
            kept.append(point)
    if closed and len(kept) > 1 and np.linalg.norm(kept[-1] - kept[0]) <= tolerance:
        kept.pop()
    return np.array(kept)


def contour_polylines(mesh, values, tolerance=DEFAULT_CHAIN_TOLERANCE, min_length=MIN_LOOP_LENGTH):
    """
    Zero-level contours of a per-vertex scalar field.

    A vertex counts as above the contour when its value is strictly positive.
    Crossing points are linearly interpolated on each cut edge, then the
    per-triangle segments are chained through shared edges.

    Args:
        mesh: TriMesh.
        values: (V,) scalar values; the contour is values == 0.
        tolerance: consecutive points closer than this are merged.
        min_length: polylines shorter than this are dropped.

    Returns:
        List of Polyline3, ordered by the smallest cut edge of each chain.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if len(values) != mesh.vertex_count:
        raise PreconditionError(f"expected {mesh.vertex_count} vertex values, got {len(values)}")
    if not np.all(np.isfinite(values)):
        raise PreconditionError("contour values must be finite")
    if mesh.triangle_count == 0:
        return []

    above = values > 0.0
    flags = above[mesh.triangles]
    count = flags.sum(axis=1)
    crossing = (count == 1) | (count == 2)
    if not crossing.any():
        return []

    tri = mesh.triangles[crossing]
    flags = flags[crossing]
    tri_next = np.roll(tri, -1, axis=1)
    cut = flags != np.roll(flags, -1, axis=1)
    low = np.minimum(tri, tri_next)
    high = np.maximum(tri, tri_next)
    slots = np.argsort(~cut, axis=1, kind="stable")[:, :2]
    rows = np.arange(len(tri))[:, None]
    low = low[rows, slots]
    high = high[rows, slots]

    keys = np.unique(np.stack([low.reshape(-1), high.reshape(-1)], axis=1), axis=0)
    d_low = values[keys[:, 0]]
    d_high = values[keys[:, 1]]
    t = d_low / (d_low - d_high)
    start = mesh.vertices[keys[:, 0]]
    crossings = start + t[:, None] * (mesh.vertices[keys[:, 1]] - start)
    position = {(int(u), int(v)): point for (u, v), point in zip(keys, crossings)}

    segments = [((int(a0), int(b0)), (int(a1), int(b1)))
                for (a0, a1), (b0, b1) in zip(low, high)]

    polylines = []
    for nodes, closed in chain_segments(segments):
        points = _merge_close_points(np.array([position[node] for node in nodes]), closed, tolerance)
        if len(points) < (3 if closed else 2):
            continue
        polyline = Polyline3(points, closed)
        if polyline.length < min_length:
            continue
        polylines.append(polyline)
    return polylines


def slice_by_plane(mesh, plane, tolerance=DEFAULT_CHAIN_TOLERANCE, min_length=MIN_LOOP_LENGTH):
    """Intersection of a mesh with a plane as chained polylines (empty when they miss)."""
    return contour_polylines(mesh, plane.signed_distances(mesh.vertices), tolerance, min_length)


def vertex_normals(mesh):
    """Area-weighted unit vertex normals; zero rows for vertices without triangles."""
    area_vectors = mesh.face_area_vectors()
    accumulated = np.zeros((mesh.vertex_count, 3))
    for corner in range(3):
        for axis in range(3):
            accumulated[:, axis] += np.bincount(
                mesh.triangles[:, corner], weights=area_vectors[:, axis], minlength=mesh.vertex_count
            )
    lengths = np.linalg.norm(accumulated, axis=1)
    normals = np.zeros_like(accumulated)
    valid = lengths > 0
    normals[valid] = accumulated[valid] / lengths[valid, None]
    return normals


def offset_mesh(mesh, distance, base_plane=None):
    """
    Moves every vertex along its outward area-weighted normal.

    Args:
        mesh: TriMesh with a normal at every vertex.
        distance: Offset in metres; negative moves inwards.
        base_plane: Optional Plane. When given, boundary-vertex normals are
            projected into it so the boundary ring stays in that plane.

    Returns:
        A TriMesh with the same connectivity and anchors.

    Raises:
        SelfIntersectionError: the offset collapses or inverts an edge or a
            triangle, as happens past the local radius of curvature.
    """
    if not math.isfinite(distance):
        raise PreconditionError(f"offset distance must be finite, got {distance!r}")
    if distance == 0:
        return mesh

    normals = vertex_normals(mesh)
    if np.any(np.linalg.norm(normals, axis=1) == 0):
        raise PreconditionError("mesh has vertices without a well-defined normal")
    if base_plane is not None:
        boundary = mesh.boundary_vertices
        projected = normals[boundary] - np.outer(normals[boundary] @ base_plane.normal, base_plane.normal)
        lengths = np.linalg.norm(projected, axis=1)
        if np.any(lengths < 1e-9):
            raise PreconditionError("boundary normal is perpendicular to the base plane")
        normals[boundary] = projected / lengths[:, None]

    edges = mesh.edges
    chord = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    curvature = np.einsum("ij,ij->i", normals[edges[:, 1]] - normals[edges[:, 0]], chord)
    curvature /= np.einsum("ij,ij->i", chord, chord)
    scale = 1.0 + distance * curvature
    if np.any(scale <= MIN_OFFSET_EDGE_SCALE):
        worst = int(np.argmin(scale))
        raise SelfIntersectionError(
            f"offset {distance:.4g} m exceeds the local radius of curvature near edge "
            f"{tuple(int(i) for i in edges[worst])}"
        )

    moved = mesh.with_vertices(mesh.vertices + distance * normals)
    flips = np.einsum("ij,ij->i", moved.face_area_vectors(), mesh.face_area_vectors()) <= 0
    if np.any(flips):
        raise SelfIntersectionError(f"offset {distance:.4g} m inverts {int(flips.sum())} triangles")
    return moved


def point_surface_distance(points, mesh):
    """Exact distance from each point to the nearest triangle of a mesh."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if mesh.triangle_count == 0:
        raise PreconditionError("cannot measure distance to an empty mesh")
    surface = trimesh.Trimesh(vertices=mesh.vertices, faces=mesh.triangles, process=False)
    _, distances, _ = trimesh.proximity.closest_point(surface, points)
    return np.asarray(distances, dtype=float)


if __name__ == "__main__":
    for level in range(1, 6):
        cap = generate_cap_mesh(1.0, level)
        area = surface_area(cap)
        volume = enclosed_volume(cap, Plane.horizontal(0.0))
        print(f"level {level}: {cap!r} area error {area / (2 * math.pi) - 1:+.3%} "
              f"volume error {volume / (2 * math.pi / 3) - 1:+.3%}")
