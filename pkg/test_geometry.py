"""
Geometry tests: cap generation, metrics, slicing and offsets against the
analytic hemisphere.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from src.errors import MeshError, MeshLimitError, PreconditionError, SelfIntersectionError
from src.geometry import (Plane, Polyline3, TriMesh, enclosed_volume, generate_cap_mesh, offset_mesh,
                          point_surface_distance, predicted_vertex_count, slice_by_plane, surface_area,
                          vertex_normals)
from src.graph_utils import boundary_loops, chain_segments
from src.solvers.formfind import fit_sphere

BASE = Plane.horizontal(0.0)


@pytest.fixture(scope="module")
def unit_cap():
    return generate_cap_mesh(1.0, 5)


@pytest.fixture(scope="module")
def habitat_cap():
    return generate_cap_mesh(5.2, 4)


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_cap_is_a_disc_with_anchored_boundary(level):
    cap = generate_cap_mesh(1.0, level)

    assert cap.euler_characteristic == 1
    assert cap.vertex_count == predicted_vertex_count(level)
    assert np.array_equal(np.flatnonzero(cap.anchored), cap.boundary_vertices)


def test_cap_boundary_lies_on_base_circle():
    cap = generate_cap_mesh(5.2, 3)
    ring = cap.vertices[cap.boundary_vertices]

    assert np.all(ring[:, 2] == 0.0)
    assert np.allclose(np.hypot(ring[:, 0], ring[:, 1]), 5.2, atol=1e-9)
    assert len(boundary_loops(cap.triangles)) == 1


def test_cap_triangles_quadruple_and_stay_uniform():
    counts = [generate_cap_mesh(1.0, level).triangle_count for level in range(1, 6)]
    assert all(later == 4 * earlier for earlier, later in zip(counts, counts[1:]))

    areas = generate_cap_mesh(1.0, 5).triangle_areas()
    assert areas.max() / areas.min() < 4.0


def test_cap_faces_point_outwards(unit_cap):
    radial = np.einsum("ij,ij->i", unit_cap.face_area_vectors(), unit_cap.centroids())
    assert np.all(radial > 0)


@pytest.mark.parametrize("radius", [1.0, 5.2, 6.0])
def test_cap_reproduces_hemisphere_area_and_volume(radius):
    cap = generate_cap_mesh(radius, 5)

    assert surface_area(cap) == pytest.approx(2 * math.pi * radius ** 2, rel=0.01)
    assert enclosed_volume(cap, BASE) == pytest.approx(2 * math.pi * radius ** 3 / 3, rel=0.01)


def test_hemisphere_volume_at_habitat_radius():
    assert enclosed_volume(generate_cap_mesh(5.2, 5), BASE) == pytest.approx(294.5, rel=0.01)


def test_metric_errors_shrink_with_level():
    area_errors, volume_errors = [], []
    for level in range(2, 6):
        cap = generate_cap_mesh(1.0, level)
        area_errors.append(abs(surface_area(cap) - 2 * math.pi))
        volume_errors.append(abs(enclosed_volume(cap, BASE) - 2 * math.pi / 3))

    assert all(later < earlier for earlier, later in zip(area_errors, area_errors[1:]))
    assert all(later < earlier for earlier, later in zip(volume_errors, volume_errors[1:]))


def test_cap_rejects_bad_arguments():
    with pytest.raises(PreconditionError):
        generate_cap_mesh(0.0, 3)
    with pytest.raises(PreconditionError):
        generate_cap_mesh(-1.0, 3)
    with pytest.raises(PreconditionError):
        generate_cap_mesh(1.0, 0)
    with pytest.raises(MeshLimitError):
        generate_cap_mesh(1.0, 10)
    with pytest.raises(MeshLimitError):
        generate_cap_mesh(1.0, 4, max_vertices=100)


def test_surface_area_of_simple_triangles():
    right = TriMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    collinear = TriMesh([(0, 0, 0), (1, 0, 0), (2, 0, 0)], [(0, 1, 2)])
    empty = TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int))

    assert surface_area(right) == pytest.approx(0.5)
    assert surface_area(collinear) == 0.0
    assert surface_area(empty) == 0.0


def test_flat_disc_encloses_nothing():
    cap = generate_cap_mesh(2.0, 3)
    flat = cap.vertices.copy()
    flat[:, 2] = 0.0

    assert enclosed_volume(cap.with_vertices(flat), BASE) == pytest.approx(0.0, abs=1e-12)


def test_volume_needs_boundary_on_base_plane():
    cap = generate_cap_mesh(1.0, 3)
    with pytest.raises(PreconditionError):
        enclosed_volume(cap, Plane.horizontal(0.5))


def test_mesh_validation():
    with pytest.raises(MeshError):
        TriMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 3)])
    with pytest.raises(MeshError):
        TriMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 1)])
    with pytest.raises(MeshError):
        TriMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1)],
                [(0, 1, 2), (1, 0, 3), (0, 1, 4)])
    with pytest.raises(MeshError):
        TriMesh([(0, 0, float("nan")), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])


def test_mesh_arrays_are_read_only(habitat_cap):
    with pytest.raises(ValueError):
        habitat_cap.vertices[0, 0] = 1.0


def test_plane_and_polyline_invariants():
    with pytest.raises(PreconditionError):
        Plane((0, 0, 0), (0, 0, 2))
    assert np.allclose(Plane.from_normal((0, 0, 0), (0, 0, 2)).normal, (0, 0, 1))
    with pytest.raises(PreconditionError):
        Polyline3([(0, 0, 0), (1, 0, 0)], closed=True)
    with pytest.raises(PreconditionError):
        Polyline3([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 0)], closed=True)

    square = Polyline3([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)], closed=True)
    assert square.length == pytest.approx(4.0)
    assert square.reversed().length == pytest.approx(4.0)


def test_slice_just_above_base_is_one_closed_circle():
    cap = generate_cap_mesh(5.2, 5)
    loops = slice_by_plane(cap, Plane.horizontal(1e-6))

    assert len(loops) == 1
    assert loops[0].closed
    assert loops[0].length == pytest.approx(2 * math.pi * 5.2, rel=0.01)


def test_slice_at_base_plane_follows_the_ring():
    cap = generate_cap_mesh(5.2, 4)
    loops = slice_by_plane(cap, BASE)

    assert len(loops) == 1
    assert loops[0].closed
    assert np.allclose(loops[0].points[:, 2], 0.0)


def test_slice_at_or_beyond_apex_is_empty(habitat_cap):
    assert slice_by_plane(habitat_cap, Plane.horizontal(5.2)) == []
    assert slice_by_plane(habitat_cap, Plane.horizontal(10.4)) == []


@pytest.mark.parametrize("height", [1.0, 3.15, 4.5])
def test_slice_length_matches_circle_at_height(height):
    cap = generate_cap_mesh(5.2, 5)
    loops = slice_by_plane(cap, Plane.horizontal(height))

    total = sum(loop.length for loop in loops)
    assert all(loop.closed for loop in loops)
    assert total == pytest.approx(2 * math.pi * math.sqrt(5.2 ** 2 - height ** 2), rel=0.01)


def test_vertical_slice_is_an_open_arch(habitat_cap):
    arches = slice_by_plane(habitat_cap, Plane((0, 0, 0), (0, 1, 0)))

    assert len(arches) == 1
    assert not arches[0].closed
    assert arches[0].length == pytest.approx(math.pi * 5.2, rel=0.01)


def test_chain_segments_orders_open_and_closed_chains():
    chains = chain_segments([(3, 4), (1, 2), (2, 3), (10, 11), (11, 12), (12, 10)])

    assert chains[0] == ([1, 2, 3, 4], False)
    nodes, closed = chains[1]
    assert closed
    assert sorted(nodes) == [10, 11, 12]
    assert nodes[0] == 10


def test_zero_offset_is_identity(habitat_cap):
    assert offset_mesh(habitat_cap, 0.0) is habitat_cap


@pytest.mark.parametrize("distance, expected", [(0.4, 5.6), (-0.2, 5.0)])
def test_sphere_offset_is_a_sphere(habitat_cap, distance, expected):
    moved = offset_mesh(habitat_cap, distance)

    assert moved.triangle_count == habitat_cap.triangle_count
    assert np.array_equal(moved.triangles, habitat_cap.triangles)
    assert fit_sphere(moved.vertices).radius == pytest.approx(expected, rel=0.01)


def test_offset_vertices_keep_their_distance_from_the_surface(habitat_cap):
    moved = offset_mesh(habitat_cap, 0.4)
    distances = point_surface_distance(moved.vertices, habitat_cap)

    assert np.all(np.abs(distances - 0.4) <= 0.05 * 0.4)


def test_offsets_compose(habitat_cap):
    stepwise = offset_mesh(offset_mesh(habitat_cap, 0.3), 0.2)
    direct = offset_mesh(habitat_cap, 0.5)

    assert np.max(np.linalg.norm(stepwise.vertices - direct.vertices, axis=1)) <= 0.05 * 0.5


def test_offset_on_base_plane_keeps_ring_flat(habitat_cap):
    moved = offset_mesh(habitat_cap, 0.4, base_plane=BASE)
    ring = moved.vertices[moved.boundary_vertices]

    assert np.allclose(ring[:, 2], 0.0)
    assert np.allclose(np.hypot(ring[:, 0], ring[:, 1]), 5.6, atol=1e-9)


def test_offset_past_the_centre_folds():
    with pytest.raises(SelfIntersectionError):
        offset_mesh(generate_cap_mesh(1.0, 3), -1.2)


def test_vertex_normals_are_radial_on_a_sphere(unit_cap):
    normals = vertex_normals(unit_cap)
    interior = ~unit_cap.anchored

    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)
    assert np.all(np.einsum("ij,ij->i", normals[interior], unit_cap.vertices[interior]) > 0.99)


def test_point_surface_distance_is_exact_for_a_triangle():
    triangle = TriMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    points = [(0.2, 0.2, 0.5), (2.0, 0.0, 0.0), (-1.0, -1.0, 0.0)]

    assert point_surface_distance(points, triangle) == pytest.approx([0.5, 1.0, math.sqrt(2)])
