"""
Artifact writers: OBJ meshes, CSV tables and the JSON pipeline report.

All writers produce byte-identical output for identical input: fixed float
formatting, '\\n' line endings and sorted JSON keys.
"""
import csv
import hashlib
import json
import os

POLYLINE_COLUMNS = ("contour_index", "point_index", "x_m", "y_m", "z_m")
PARETO_COLUMNS = ("radius_m", "volume_m3", "shell_surface_m2", "floor_area_m2", "feasible", "on_front", "selected")
FEA_COLUMNS = ("record", "index", "ux_m", "uy_m", "uz_m", "von_mises_pa")


def _ensure_parent(file_path):
    os.makedirs(os.path.dirname(os.path.abspath(file_path)), exist_ok=True)


def _fixed(value, digits=9):
    return f"{float(value):.{digits}f}"


def _sci(value):
    return f"{float(value):.9e}"


def write_obj(mesh, file_path, comment=None):
    """
    Saves a TriMesh as ASCII OBJ.

    Coordinates are written with repr() so they read back bit-for-bit.
    Anchored vertices go to '# anchor <index>' lines (1-based, like faces).

    Returns:
        The path to the saved file
    """
    _ensure_parent(file_path)
    lines = []
    if comment:
        lines.extend(f"# {text}" for text in comment.splitlines())
    lines.append(f"# vertices {mesh.vertex_count} triangles {mesh.triangle_count}")
    lines.extend(f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.vertices)
    lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles)
    lines.extend(f"# anchor {index + 1}" for index in mesh.anchored.nonzero()[0])
    with open(file_path, "w", encoding="utf-8", newline="\n") as obj_file:
        obj_file.write("\n".join(lines) + "\n")
    return file_path


def write_polylines_csv(file_path, groups, index_column="layer_index", value_column="layer_z_m"):
    """
    Saves grouped polylines, one row per point.

    Args:
        file_path: Output CSV path.
        groups: Iterable of (group_index, group_value, polylines).
        index_column: Header of the group index column.
        value_column: Header of the group value column (layer z, level, azimuth).

    Returns:
        Number of point rows written.
    """
    _ensure_parent(file_path)
    rows = 0
    with open(file_path, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow((index_column, value_column) + POLYLINE_COLUMNS)
        for group_index, group_value, polylines in groups:
            for contour_index, polyline in enumerate(polylines):
                for point_index, (x, y, z) in enumerate(polyline.points):
                    writer.writerow((group_index, _fixed(group_value), contour_index, point_index,
                                     _fixed(x), _fixed(y), _fixed(z)))
                    rows += 1
    return rows


def write_pareto_csv(file_path, points, on_front, selected):
    """Saves design points sorted by radius with front and selection flags."""
    _ensure_parent(file_path)
    with open(file_path, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(PARETO_COLUMNS)
        for point, front_flag, selected_flag in zip(points, on_front, selected):
            writer.writerow((
                _fixed(point.radius, 6),
                _fixed(point.volume, 6),
                _fixed(point.shell_surface, 6),
                _fixed(point.floor_area_total, 6),
                str(bool(point.feasible)).lower(),
                str(bool(front_flag)).lower(),
                str(bool(selected_flag)).lower(),
            ))
    return file_path


def write_fea_csv(file_path, result):
    """Saves per-vertex displacements followed by per-element von Mises stresses."""
    _ensure_parent(file_path)
    with open(file_path, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(FEA_COLUMNS)
        for index, (ux, uy, uz) in enumerate(result.displacements):
            writer.writerow(("vertex", index, _sci(ux), _sci(uy), _sci(uz), ""))
        for index, stress in enumerate(result.von_mises):
            writer.writerow(("element", index, "", "", "", _sci(stress)))
    return file_path


def write_relaxation_trace(file_path, trace):
    """Saves (iteration, kinetic energy, residual) rows of a relaxation run."""
    _ensure_parent(file_path)
    with open(file_path, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(("iteration", "kinetic_energy_j", "residual_n"))
        for iteration, kinetic_energy, residual in trace:
            writer.writerow((iteration, _sci(kinetic_energy), _sci(residual)))
    return file_path


def file_sha256(file_path):
    digest = hashlib.sha256()
    with open(file_path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def build_manifest(out_dir, relative_paths):
    """Content hashes of emitted files, sorted by path."""
    manifest = []
    for relative_path in sorted(set(relative_paths)):
        full_path = os.path.join(out_dir, relative_path)
        manifest.append({
            "path": relative_path.replace(os.sep, "/"),
            "sha256": file_sha256(full_path),
            "bytes": os.path.getsize(full_path),
        })
    return manifest


def write_json_report(file_path, report):
    _ensure_parent(file_path)
    with open(file_path, "w", encoding="utf-8", newline="\n") as json_file:
        json.dump(report, json_file, indent=2, sort_keys=True, allow_nan=False)
        json_file.write("\n")
    return file_path
