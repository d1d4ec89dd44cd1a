"""Exception hierarchy shared by every otfsdfrc module."""


class DfrcError(Exception):
    """Base class for all otfsdfrc errors."""


class GridError(DfrcError, ValueError):
    """Invalid OTFS frame geometry."""


class PlacementError(DfrcError, ValueError):
    """Invalid index lists or a placement that does not match its grid."""


class GeometryError(PlacementError):
    """A placement pattern cannot fit its guard region."""

    def __init__(self, message: str, dimension: str):
        self.dimension = dimension
        super().__init__(f"{message} (binding dimension: {dimension})")


class ChannelModelError(DfrcError, ValueError):
    """Invalid channel statistics."""


class InfeasibleProblemError(DfrcError):
    """The power and mainlobe constraints admit no design."""

    def __init__(self, message: str, constraint: str):
        self.constraint = constraint
        super().__init__(f"{message} [binding constraint: {constraint}]")


class SubproblemError(DfrcError):
    """An inner convex subproblem failed."""

    def __init__(self, message: str, stage: str, iteration: tuple[int, int]):
        self.stage = stage
        self.iteration = iteration
        n, m = iteration
        super().__init__(f"{stage} failed at AO iteration {n}, ADMM iteration {m}: {message}")


class ConfigValidationError(DfrcError):
    """Raised when an experiment document fails schema or semantic checks."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__(
            f"Configuration validation failed with {len(errors)} error(s):\n"
            + "\n".join(f"  - {e}" for e in errors)
        )


class ExperimentError(DfrcError):
    """Wraps any module error with the experiment stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
