"""Exception types shared across the package."""


class LevilinError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(LevilinError, ValueError):
    """A physical parameter violates its contract (wrong sign, range, ...)."""


class UntrappedAxisError(LevilinError, ValueError):
    """Pseudopotential is not confining along one or more axes."""

    def __init__(self, axes, message=None):
        self.axes = tuple(axes)
        super().__init__(message or f"untrapped axis/axes: {', '.join(self.axes)}")


class RotatingWaveError(LevilinError, ValueError):
    """Quadrature (rotating-wave) description is invalid: damping too large."""


class SimulationAbort(LevilinError, RuntimeError):
    """Integration aborted (instability or loss of confinement)."""

    def __init__(self, message, t=None):
        self.t = t
        super().__init__(message if t is None else f"{message} (t={t:.6g} s)")


class FitConvergenceError(LevilinError, RuntimeError):
    """Nonlinear fit did not converge; carries the last residual norm."""

    def __init__(self, message, residual_norm=None):
        self.residual_norm = residual_norm
        if residual_norm is not None:
            message = f"{message} (last residual norm {residual_norm:.6g})"
        super().__init__(message)


class LevtFormatError(LevilinError, ValueError):
    """Malformed LEVT binary container; names the offending byte offset."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class ConfigError(LevilinError, ValueError):
    """Run-configuration file fails schema validation."""


class OutOfRegimeWarning(UserWarning):
    """An approximate formula was evaluated outside its validity regime."""
