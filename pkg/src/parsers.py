import json
import logging
import math
import os

import numpy as np

from src.errors import ConfigError, ObjParseError
from src.geometry import TriMesh

logger = logging.getLogger(__name__)

ANCHOR_TAG = "anchor"
# OBJ records that carry no geometry we use.
IGNORED_RECORDS = {"vn", "vt", "vp", "o", "g", "s", "l", "usemtl", "mtllib"}


def _parse_index(token, path, line_number):
    try:
        index = int(token.split("/")[0])
    except ValueError:
        raise ObjParseError(path, line_number, f"invalid vertex reference '{token}'") from None
    if index < 1:
        raise ObjParseError(path, line_number, f"vertex references must be positive 1-based indices, got {index}")
    return index - 1


def read_obj(file_path):
    """
    Parses an ASCII OBJ file into a TriMesh.

    Only 'v' and triangular 'f' records are read. Anchored vertices are
    listed in '# anchor <index>' comment lines using 1-based indices.

    Args:
        file_path: Path to the .obj file.

    Returns:
        A TriMesh.

    Raises:
        ObjParseError: malformed record, non-triangle face or dangling index,
            with the offending line number.
    """
    vertices = []
    triangles = []
    anchors = []
    face_lines = []
    anchor_lines = []

    with open(file_path, "rb") as obj_file:
        for line_number, raw_bytes in enumerate(obj_file, start=1):
            try:
                line = raw_bytes.decode("utf-8").strip()
            except UnicodeDecodeError as error:
                raise ObjParseError(file_path, line_number, f"invalid UTF-8 ({error.reason})") from None
            if not line:
                continue
            if line.startswith("#"):
                words = line[1:].split()
                if len(words) == 2 and words[0] == ANCHOR_TAG:
                    anchors.append(_parse_index(words[1], file_path, line_number))
                    anchor_lines.append(line_number)
                continue

            record, *fields = line.split()
            if record == "v":
                if len(fields) < 3:
                    raise ObjParseError(file_path, line_number, "vertex record needs three coordinates")
                try:
                    coordinates = [float(value) for value in fields[:3]]
                except ValueError:
                    raise ObjParseError(file_path, line_number, f"invalid vertex coordinates: {line}") from None
                if not all(math.isfinite(value) for value in coordinates):
                    raise ObjParseError(file_path, line_number, f"non-finite vertex coordinates: {line}")
                vertices.append(coordinates)
            elif record == "f":
                if len(fields) != 3:
                    raise ObjParseError(
                        file_path, line_number, f"face has {len(fields)} vertices; only triangles are supported"
                    )
                triangles.append([_parse_index(token, file_path, line_number) for token in fields])
                face_lines.append(line_number)
            elif record not in IGNORED_RECORDS:
                raise ObjParseError(file_path, line_number, f"unknown record '{record}'")

    vertex_count = len(vertices)
    for triangle, line_number in zip(triangles, face_lines):
        if max(triangle) >= vertex_count:
            raise ObjParseError(file_path, line_number, f"face references vertex {max(triangle) + 1} of {vertex_count}")
        if len(set(triangle)) != 3:
            raise ObjParseError(file_path, line_number, "face repeats a vertex")
    for index, line_number in zip(anchors, anchor_lines):
        if index >= vertex_count:
            raise ObjParseError(file_path, line_number, f"anchor references vertex {index + 1} of {vertex_count}")

    anchored = np.zeros(vertex_count, dtype=bool)
    anchored[anchors] = True
    mesh = TriMesh(np.array(vertices, dtype=float).reshape(-1, 3),
                   np.array(triangles, dtype=np.int64).reshape(-1, 3),
                   anchored)
    logger.debug("Read %r from %s", mesh, file_path)
    return mesh


def load_json_document(file_path):
    """
    Loads a JSON document.

    Raises:
        ConfigError: the file is missing, unreadable or not valid JSON.
    """
    if not os.path.isfile(file_path):
        raise ConfigError(f"config file not found: {file_path}")
    try:
        with open(file_path, "r", encoding="utf-8") as json_file:
            return json.load(json_file)
    except json.JSONDecodeError as error:
        raise ConfigError(f"{file_path}:{error.lineno}:{error.colno}: invalid JSON: {error.msg}") from error
    except OSError as error:
        raise ConfigError(f"cannot read config file {file_path}: {error}") from error
