"""Exception types shared across the package."""


class RaceDriverError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(RaceDriverError):
    """An input file does not match its documented schema."""


class AmbiguousProjection(RaceDriverError):
    """Nearest-point projection onto the reference line is not unique."""


class OutOfBand(RaceDriverError):
    """A line leaves the configured lateral band around the reference line."""


class SingularSystem(RaceDriverError):
    """Unregularized basis projection hit a rank-deficient normal matrix."""


class EmptyInput(RaceDriverError):
    """An operation requiring at least one element received none."""


class NotPSD(RaceDriverError):
    """A covariance matrix is not positive semi-definite within tolerance."""


class SingularInnovation(RaceDriverError):
    """The innovation covariance of a conditioning update is not invertible."""


class InsufficientDemos(RaceDriverError):
    """A track has no demonstration laps to fit a distribution from."""


class EmptyLibrary(RaceDriverError):
    """Variance transfer was requested against an empty demonstration library."""


class InfeasibleCorridor(RaceDriverError):
    """The drivable corridor is narrower than the vehicle at some station."""


class DegenerateLine(RaceDriverError):
    """A line has effectively zero length."""


class NumericalBlowup(RaceDriverError):
    """Vehicle state left sanity bounds, indicating an unstable simulation."""


class LocalizationLost(RaceDriverError):
    """The vehicle could not be projected onto the track or target line."""


class FloorReached(RaceDriverError):
    """Target speed reduction hit the configured floor at a corner."""

    def __init__(self, message: str, station: float | None = None):
        super().__init__(message)
        self.station = station


class Unresolvable(RaceDriverError):
    """Adaptation cannot make progress at a corner despite repeated attempts."""
