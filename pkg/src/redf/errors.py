"""Exception types raised across the package.

Every error is a subclass of RedfError so callers can catch the whole
family; the CLI maps each one to a single-line machine-parseable message.
"""


class RedfError(Exception):
    """Base class for all errors raised by this package."""


# --- data loading / preprocessing ---

class FormatError(RedfError):
    """CSV header malformed or too many rows unparseable."""


class RowError(RedfError):
    """A single CSV row failed to parse."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptySeriesError(RedfError):
    """Operation requires at least one observed value."""


class DegenerateScaleError(RedfError):
    """Scaler cannot be fit on a constant series."""


class SplitError(RedfError):
    """Train/test split would leave one side empty."""


class WindowError(RedfError):
    """Series too short for the requested window/horizon."""


# --- numerics / model ---

class ShapeError(RedfError):
    """Operands have incompatible shapes."""


class EmptyBatchError(RedfError):
    """Loss requires a non-empty batch."""


class StateError(RedfError):
    """Backward pass received caches from a different forward pass."""


class NumericError(RedfError):
    """Non-finite value encountered where finiteness is required."""


class DivergenceError(RedfError):
    """Training loss exploded past the divergence threshold."""


class ConfigError(RedfError):
    """Invalid configuration value."""


class GridError(RedfError):
    """No feasible hyperparameter combination in the grid."""


class DegenerateVarianceError(RedfError):
    """R-squared undefined for a constant actual series."""


# --- serving ---

class ArtifactError(RedfError):
    """Model artifact failed validation (magic/version/CRC/shape)."""


class ProtocolError(RedfError):
    """Malformed or oversized wire frame."""


class TimeoutError(RedfError):
    """Request did not complete within the deadline."""


class ConnectError(RedfError):
    """Could not connect to the remote endpoint."""


class ServerError(RedfError):
    """Server answered with an ERROR frame."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
