"""
Material parameters for the membrane and the printed regolith shield.

The default values are placeholders for preliminary sizing: a Kevlar fabric
membrane and sintered lunar regolith. Override them from the config file.
"""
import math
from dataclasses import dataclass, replace

from src.errors import PreconditionError

LUNAR_GRAVITY = 1.62


@dataclass(frozen=True)
class MaterialSpec:
    name: str
    youngs_modulus: float
    poisson_ratio: float
    density: float
    thickness: float
    tensile_strength: float
    allowable_stress: float

    def __post_init__(self):
        values = (self.youngs_modulus, self.poisson_ratio, self.density, self.thickness,
                  self.tensile_strength, self.allowable_stress)
        if not all(math.isfinite(value) for value in values):
            raise PreconditionError(f"material '{self.name}' has non-finite parameters")
        if self.youngs_modulus <= 0:
            raise PreconditionError(f"material '{self.name}': Young's modulus must be positive")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise PreconditionError(f"material '{self.name}': Poisson ratio must lie in [0, 0.5)")
        if self.density < 0:
            raise PreconditionError(f"material '{self.name}': density must be non-negative")
        if self.thickness <= 0:
            raise PreconditionError(f"material '{self.name}': thickness must be positive")
        if self.allowable_stress <= 0 or self.allowable_stress > self.tensile_strength:
            raise PreconditionError(
                f"material '{self.name}': allowable stress must be positive and at most the tensile strength"
            )

    def with_thickness(self, thickness):
        return replace(self, thickness=float(thickness))

    def to_dict(self):
        return {
            "youngs_modulus": self.youngs_modulus,
            "poisson_ratio": self.poisson_ratio,
            "density": self.density,
            "thickness": self.thickness,
            "tensile_strength": self.tensile_strength,
            "allowable_stress": self.allowable_stress,
        }

    @classmethod
    def from_dict(cls, name, values):
        return cls(name=name, **{key: float(value) for key, value in values.items()})


# Strength over a safety factor of 2.
KEVLAR = MaterialSpec(
    name="kevlar",
    youngs_modulus=70e9,
    poisson_ratio=0.3,
    density=1440.0,
    thickness=0.005,
    tensile_strength=3.0e9,
    allowable_stress=1.5e9,
)

SINTERED_REGOLITH = MaterialSpec(
    name="sintered_regolith",
    youngs_modulus=2e9,
    poisson_ratio=0.25,
    density=1500.0,
    thickness=0.3,
    tensile_strength=4.0e6,
    allowable_stress=2.0e6,
)

DEFAULT_MATERIALS = {material.name: material for material in (KEVLAR, SINTERED_REGOLITH)}
