"""Exception types shared across the package."""


class GridMismatch(ValueError):
    """Array shape does not match the grid it is used with."""


class SnapshotError(ValueError):
    """Malformed binary snapshot."""


class NonConvergence(RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class StepCollapse(RuntimeError):
    """Adaptive time step shrank below its floor."""


class DegenerateSpectrum(ValueError):
    """Leading generalized eigenvalue is numerically zero."""


class HypothesisViolation(ValueError):
    """Input violates the assumptions of a stability check."""


class ConfigError(ValueError):
    """Base class for run-configuration problems; carries a line number."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ConfigParseError(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class InvariantViolation(ConfigError):
    pass
