"""
Exception types raised by the habitat pipeline.
"""


class HabitatFormaError(Exception):
    """Base class for every error raised by this package."""


class PreconditionError(HabitatFormaError, ValueError):
    """An argument is out of range or an operation precondition does not hold."""


class MeshError(HabitatFormaError, ValueError):
    """The mesh arrays do not describe a valid triangle mesh."""


class MeshLimitError(MeshError):
    """A generated mesh would exceed the configured vertex cap."""


class SelfIntersectionError(MeshError):
    """An offset folds or inverts part of the surface."""


class ObjParseError(HabitatFormaError):
    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{self.path}:{line_number}: {message}")


class DegenerateFitError(HabitatFormaError, ValueError):
    """Too few or coplanar points for a sphere fit."""


class FormFindError(HabitatFormaError):
    """Base class for dynamic relaxation failures."""


class ConvergenceError(FormFindError):
    def __init__(self, residual, iterations, tolerance):
        self.residual = residual
        self.iterations = iterations
        self.tolerance = tolerance
        super().__init__(
            f"relaxation did not converge after {iterations} iterations "
            f"(residual {residual:.4g} N > tolerance {tolerance:.4g} N)"
        )


class DivergenceError(FormFindError):
    def __init__(self, iteration):
        self.iteration = iteration
        super().__init__(
            f"relaxation diverged at iteration {iteration} (non-finite coordinates); "
            "reduce time_step_safety or increase rest_length_factor"
        )


class RigidBodyModeError(HabitatFormaError):
    """The supports leave the structure free to move as a rigid body."""


class SolverError(HabitatFormaError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message if residual is None else f"{message} (relative residual {residual:.3e})")


class NoFeasibleDesignError(HabitatFormaError):
    def __init__(self, nearest, required_floor_area=None):
        self.nearest = nearest
        self.required_floor_area = required_floor_area
        message = (f"no feasible design point; nearest candidate r={nearest.radius:.3f} m has "
                   f"{nearest.floor_area_total:.2f} m2 of floor area")
        if required_floor_area is not None:
            message += f", {required_floor_area:.2f} m2 required"
        super().__init__(message)


class SweepError(HabitatFormaError):
    """Every point of a design sweep failed."""


class ShieldOverlapError(HabitatFormaError):
    """The shield inner face comes closer to the membrane than allowed."""


class ThicknessSizingError(HabitatFormaError):
    def __init__(self, message, diagnostics):
        self.diagnostics = dict(diagnostics)
        details = ", ".join(f"{key}={value:.4g}" for key, value in sorted(self.diagnostics.items()))
        super().__init__(f"{message} ({details})")


class ConfigError(HabitatFormaError):
    def __init__(self, message, findings=()):
        self.findings = list(findings)
        super().__init__(message)


class StageError(HabitatFormaError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
