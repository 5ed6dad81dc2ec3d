"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        loc = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{loc}")


class PreconditionError(ValueError):
    """An operation was called outside its domain of validity."""


class ConvergenceError(RuntimeError):
    """A fixed-point or series iteration did not reach its tolerance."""

    def __init__(self, message, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message}: residual {residual:.3e} after {iterations} iterations")


class GridMismatchError(ValueError):
    """Two discretized objects live on incompatible grids."""


class CommensurabilityError(ValueError):
    """Delays or transit times are not integer multiples of the time step."""

    def __init__(self, message, suggested_n=None):
        self.suggested_n = suggested_n
        hint = f"; try n={suggested_n}" if suggested_n is not None else ""
        super().__init__(message + hint)


class SimulationError(RuntimeError):
    """The time stepper produced non-finite values."""

    def __init__(self, message, t):
        self.t = t
        super().__init__(f"{message} at t={t:.6g}")


class UnsupportedLawError(ValueError):
    """The requested control law is not available for this operation."""


class ContourError(RuntimeError):
    """The argument-principle contour passes too close to a zero."""

    def __init__(self, message, min_abs=None, region=None):
        self.min_abs = min_abs
        self.region = region
        super().__init__(message)
