#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Mesh-resolution convergence of the generated hemisphere caps.

For each subdivision level prints the relative error of surface area,
enclosed volume and the slice length at a chosen height against the
analytic hemisphere, plus the time to generate the mesh. Optionally
writes the table as CSV.

USAGE:
    python scripts/convergence_study.py --radius 5.2 --max-level 6 --height 3.15 --csv convergence.csv
"""
import argparse
import csv
import math
import os
import sys
import time

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.geometry import Plane, enclosed_volume, generate_cap_mesh, slice_by_plane, surface_area  # noqa: E402

COLUMNS = ("level", "vertices", "triangles", "area_error", "volume_error", "slice_error", "seconds")


def study(radius, max_level, height):
    """
    Returns one row per level 1..max_level with relative errors against
    2*pi*r^2, (2/3)*pi*r^3 and 2*pi*sqrt(r^2 - h^2).
    """
    if not 0 <= height < radius:
        raise ValueError("slice height must lie in [0, radius)")
    area_exact = 2.0 * math.pi * radius ** 2
    volume_exact = 2.0 * math.pi * radius ** 3 / 3.0
    slice_exact = 2.0 * math.pi * math.sqrt(radius ** 2 - height ** 2)
    rows = []
    for level in range(1, max_level + 1):
        start = time.perf_counter()
        cap = generate_cap_mesh(radius, level)
        elapsed = time.perf_counter() - start
        loops = slice_by_plane(cap, Plane.horizontal(max(height, 1e-6)))
        rows.append({
            "level": level,
            "vertices": cap.vertex_count,
            "triangles": cap.triangle_count,
            "area_error": abs(surface_area(cap) - area_exact) / area_exact,
            "volume_error": abs(enclosed_volume(cap, Plane.horizontal(0.0)) - volume_exact) / volume_exact,
            "slice_error": abs(sum(loop.length for loop in loops) - slice_exact) / slice_exact,
            "seconds": elapsed,
        })
    return rows


def parse_arguments():
    parser = argparse.ArgumentParser(description="Cap mesh convergence against the analytic hemisphere")
    parser.add_argument("--radius", type=float, default=5.2, help="Cap radius in metres (default: 5.2)")
    parser.add_argument("--max-level", type=int, default=6, help="Highest subdivision level (default: 6)")
    parser.add_argument("--height", type=float, default=3.15, help="Slice height in metres (default: 3.15)")
    parser.add_argument("--csv", dest="csv_path", help="Optional CSV output path")
    return parser.parse_args()


if __name__ == "__main__":
    args = parse_arguments()
    rows = study(args.radius, args.max_level, args.height)
    print(f"{'level':>5} {'V':>8} {'F':>8} {'area':>10} {'volume':>10} {'slice':>10} {'time':>8}")
    for row in rows:
        print(f"{row['level']:>5} {row['vertices']:>8} {row['triangles']:>8} {row['area_error']:>10.3%} "
              f"{row['volume_error']:>10.3%} {row['slice_error']:>10.3%} {row['seconds']:>7.3f}s")
    if args.csv_path:
        with open(args.csv_path, "w", encoding="utf-8", newline="") as csv_file:
            writer = csv.DictWriter(csv_file, fieldnames=COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        print(f"Saved {args.csv_path}")
