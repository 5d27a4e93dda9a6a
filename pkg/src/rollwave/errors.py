"""Exception hierarchy shared by all rollwave modules."""


class RollWaveError(Exception):
    """Base class for every error raised by the package."""


class DomainError(RollWaveError, ValueError):
    """An input lies outside the domain of the model (e.g. tau <= 0)."""


class NoHopfPointError(DomainError):
    """Raised when F <= 4: the constant state is subcharacteristic."""


class SolverError(RollWaveError, RuntimeError):
    """A numerical solver failed to converge or produce a valid answer."""


class H1ViolationError(SolverError):
    """Specific volume tau reached zero during an integration."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class TrackingError(SolverError):
    """Eigenvalue continuation in xi became ambiguous."""


class ContourError(RollWaveError):
    """An Evans contour passes too close to a root."""

    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample


class ConfigError(RollWaveError, ValueError):
    """Malformed or inconsistent run configuration."""
