"""
Regolith shield over the form-found membrane.

Offsets the membrane into inner, mid and outer shield surfaces, sizes the
shield thickness against self-weight stress and radiation attenuation, slices
print toolpaths and balances the excavated regolith against the shield volume.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from shapely.geometry import LinearRing

from src.errors import PreconditionError, ShieldOverlapError, ThicknessSizingError
from src.geometry import Plane, Polyline3, offset_mesh, point_surface_distance, slice_by_plane, surface_area
from src.materials import LUNAR_GRAVITY
from src.solvers.fea import LoadCase, assemble_and_solve

logger = logging.getLogger(__name__)

BASE_PLANE = Plane.horizontal(0.0)
OVERLAP_FACTOR = 0.95
THICKNESS_BOUNDS = (0.05, 3.0)
THICKNESS_RESOLUTION = 0.01


@dataclass(frozen=True)
class ShieldSpec:
    gap: float = 0.15
    thickness: float = 0.5
    density: float = 1500.0
    bulking_factor: float = 1.3
    layer_height: float = 0.05
    meridian_count: int = 24

    def __post_init__(self):
        if not self.gap >= 0:
            raise PreconditionError("shield gap must be >= 0")
        if not self.thickness > 0:
            raise PreconditionError("shield thickness must be > 0")
        if not self.density >= 0:
            raise PreconditionError("shield density must be >= 0")
        if not self.bulking_factor >= 1:
            raise PreconditionError("bulking factor must be >= 1")
        if not self.layer_height > 0:
            raise PreconditionError("layer height must be > 0")
        if int(self.meridian_count) != self.meridian_count or self.meridian_count < 4:
            raise PreconditionError("meridian_count must be an integer >= 4")


@dataclass(frozen=True)
class PodSpec:
    diameter: float = 6.0
    height: float = 4.0
    core_diameter: float = 1.5
    drill_duration: float = 20.0

    def __post_init__(self):
        if min(self.diameter, self.height, self.core_diameter, self.drill_duration) <= 0:
            raise PreconditionError("pod dimensions and drill duration must be positive")
        if self.core_diameter >= self.diameter:
            raise PreconditionError("pod core diameter must be smaller than the pod diameter")


@dataclass(frozen=True)
class DoseConfig:
    """Single exponential attenuation model; the defaults are placeholders."""

    target_transmission: float = 0.5
    halving_thickness: float = 0.5
    surface_dose: float = 300.0  # mSv per year

    def shielded_dose(self, thickness):
        return self.surface_dose * 2.0 ** (-thickness / self.halving_thickness)


@dataclass(frozen=True, eq=False)
class ToolpathLayer:
    z: float
    contours: tuple
    layer_index: int = 0

    @property
    def path_length(self):
        return sum(contour.length for contour in self.contours)


class ShieldShells(NamedTuple):
    inner: object
    outer: object
    mid: object
    min_membrane_gap: float


class ThicknessSizing(NamedTuple):
    thickness: float
    structural_thickness: float
    radiation_thickness: float
    governing: str
    max_von_mises: float
    allowable_stress: float
    evaluations: int


@dataclass(frozen=True)
class RegolithBudget:
    excavated_volume: float
    available_loose_volume: float
    shield_volume: float
    shield_mass: float
    margin_volume: float
    print_duration_estimate: float
    drill_rate: float

    def to_dict(self):
        return {
            "excavated_volume_m3": self.excavated_volume,
            "available_loose_volume_m3": self.available_loose_volume,
            "shield_volume_m3": self.shield_volume,
            "shield_mass_kg": self.shield_mass,
            "margin_volume_m3": self.margin_volume,
            "print_duration_h": self.print_duration_estimate,
            "drill_rate_m3_per_h": self.drill_rate,
        }


class DeploymentTimeline(NamedTuple):
    drilling_hours: float
    printing_hours: float
    total_hours: float


def generate_shield(membrane, spec, base_plane=BASE_PLANE):
    """
    Offsets the membrane into the shield's inner, mid and outer surfaces.

    Boundary rings stay in the base plane. The inner face must keep at
    least 95% of the gap from the membrane everywhere.

    Raises:
        SelfIntersectionError: an offset folds the surface.
        ShieldOverlapError: the inner face comes too close to the membrane.
    """
    inner = offset_mesh(membrane, spec.gap, base_plane)
    mid = offset_mesh(membrane, spec.gap + 0.5 * spec.thickness, base_plane)
    outer = offset_mesh(membrane, spec.gap + spec.thickness, base_plane)

    min_gap = float(point_surface_distance(inner.vertices, membrane).min())
    if min_gap < OVERLAP_FACTOR * spec.gap:
        raise ShieldOverlapError(
            f"shield inner face comes within {min_gap:.4f} m of the membrane (gap {spec.gap} m)"
        )
    logger.debug("Shield shells generated, minimum membrane clearance %.4f m", min_gap)
    return ShieldShells(inner, outer, mid, min_gap)


def attenuation_min_thickness(target_transmission, halving_thickness):
    """Thickness that cuts the transmitted dose to target_transmission: h * log2(1 / T)."""
    if not (0 < target_transmission <= 1):
        raise PreconditionError(f"target transmission must lie in (0, 1], got {target_transmission!r}")
    if not halving_thickness > 0:
        raise PreconditionError("halving thickness must be > 0")
    return halving_thickness * math.log2(1.0 / target_transmission)


def self_weight_stress(membrane, spec, material, thickness, gravity=LUNAR_GRAVITY, base_plane=BASE_PLANE,
                       solver="cg"):
    """Self-weight analysis of the shield mid-surface for one thickness, pinned on its base ring."""
    mid = offset_mesh(membrane, spec.gap + 0.5 * thickness, base_plane)
    return mid, assemble_and_solve(mid, material.with_thickness(thickness), [LoadCase.gravity(gravity)],
                                   mid.boundary_vertices, solver=solver)


def size_thickness(membrane, spec, material, dose_config, bounds=THICKNESS_BOUNDS,
                   resolution=THICKNESS_RESOLUTION, gravity=LUNAR_GRAVITY):
    """
    Shield thickness from the structural and radiation requirements.

    The structural thickness is the smallest one in bounds whose self-weight
    von Mises peak stays within the allowable stress, found by bisection to
    `resolution`. The radiation thickness comes from the attenuation model.
    The larger one governs.

    Returns:
        ThicknessSizing with both requirements and the governing one.

    Raises:
        ThicknessSizingError: no thickness in bounds satisfies both.
    """
    lower, upper = bounds
    allowable = material.allowable_stress
    radiation = attenuation_min_thickness(dose_config.target_transmission, dose_config.halving_thickness)
    evaluations = 0

    def peak_stress(thickness):
        nonlocal evaluations
        evaluations += 1
        stress = self_weight_stress(membrane, spec, material, thickness, gravity)[1].max_von_mises
        logger.debug("Shield t=%.3f m: peak von Mises %.4g Pa", thickness, stress)
        return stress

    stress = peak_stress(lower)
    if stress <= allowable:
        structural, governing_stress = lower, stress
    else:
        upper_stress = peak_stress(upper)
        if upper_stress > allowable:
            raise ThicknessSizingError(
                "no shield thickness within bounds keeps self-weight stress below the allowable stress",
                {"lower_bound_m": lower, "upper_bound_m": upper, "stress_at_lower_pa": stress,
                 "stress_at_upper_pa": upper_stress, "allowable_pa": allowable},
            )
        governing_stress = upper_stress
        while upper - lower > resolution:
            middle = 0.5 * (lower + upper)
            middle_stress = peak_stress(middle)
            if middle_stress <= allowable:
                upper, governing_stress = middle, middle_stress
            else:
                lower = middle
        structural = upper

    if radiation > bounds[1]:
        raise ThicknessSizingError(
            "radiation requirement exceeds the thickness upper bound",
            {"radiation_thickness_m": radiation, "upper_bound_m": bounds[1]},
        )
    thickness = max(structural, radiation)
    governing = "radiation" if radiation >= structural else "structural"
    logger.info("Shield thickness %.3f m (%s governs; structural %.3f m, radiation %.3f m)",
                thickness, governing, structural, radiation)
    return ThicknessSizing(thickness, structural, radiation, governing, governing_stress, allowable, evaluations)


def _counter_clockwise(loop):
    return loop if LinearRing(loop.points[:, :2]).is_ccw else loop.reversed()


def horizontal_layers(mid, layer_height):
    top = float(mid.vertices[:, 2].max())
    count = int(math.floor(top / layer_height + 1e-9)) + 1
    layers = []
    for index in range(count):
        z = index * layer_height
        sections = slice_by_plane(mid, Plane.horizontal(z))
        loops = [_counter_clockwise(loop) for loop in sections if loop.closed]
        open_count = len(sections) - len(loops)
        if open_count:
            logger.warning("Layer %d at z=%.3f m: dropped %d open slice polyline(s); mid-surface has a gap",
                           index, z, open_count)
        if loops:
            layers.append(ToolpathLayer(z, tuple(loops), index))
    return layers


def meridians(mid, count):
    """
    One base-to-apex guide curve per azimuth 2*pi*m/count, m = 0..count-1.
    """
    curves = []
    for index in range(count):
        azimuth = 2.0 * math.pi * index / count
        heading = np.array([math.cos(azimuth), math.sin(azimuth), 0.0])
        plane = Plane((0.0, 0.0, 0.0), (-math.sin(azimuth), math.cos(azimuth), 0.0))
        arches = [arch for arch in slice_by_plane(mid, plane) if not arch.closed]
        if not arches:
            logger.warning("No meridian found at azimuth %.1f deg", math.degrees(azimuth))
            continue
        points = max(arches, key=lambda arch: arch.length).points
        split = int(np.argmin(np.hypot(points[:, 0], points[:, 1])))
        halves = [points[:split + 1], points[split:]]
        half = max(halves, key=lambda part: float((part @ heading).mean()) if len(part) else -np.inf)
        if half[0, 2] > half[-1, 2]:
            half = half[::-1]
        if len(half) >= 2:
            curves.append((azimuth, Polyline3(half.copy(), False)))
    return curves


def toolpaths(mid, spec):
    """
    Horizontal print layers and vertical meridian guide curves.

    Returns:
        (layers, meridian_curves): layers bottom-up at z = k * layer_height
        with counter-clockwise closed contours (empty layers dropped), and a
        list of (azimuth, Polyline3) oriented from base to apex.
    """
    layers = horizontal_layers(mid, spec.layer_height)
    curves = meridians(mid, int(spec.meridian_count))
    logger.info("Toolpaths: %d layers, %.1f m of contour, %d meridians",
                len(layers), sum(layer.path_length for layer in layers), len(curves))
    return layers, curves


def regolith_budget(pod, mid, spec, deposition_rate=1.0):
    """
    Excavated regolith against the shield requirement.

    Shield volume is the thin-shell estimate surface_area(mid) * thickness.
    """
    if not deposition_rate > 0:
        raise PreconditionError("deposition rate must be > 0")
    excavated = math.pi * (pod.diameter / 2.0) ** 2 * pod.height
    available = excavated * spec.bulking_factor
    shield_volume = surface_area(mid) * spec.thickness
    return RegolithBudget(
        excavated_volume=excavated,
        available_loose_volume=available,
        shield_volume=shield_volume,
        shield_mass=shield_volume * spec.density,
        margin_volume=available - shield_volume,
        print_duration_estimate=shield_volume / deposition_rate,
        drill_rate=excavated / pod.drill_duration,
    )


def deployment_timeline(pod, budget):
    """Drilling then printing, in hours."""
    return DeploymentTimeline(pod.drill_duration, budget.print_duration_estimate,
                              pod.drill_duration + budget.print_duration_estimate)
