"""Exception types shared across the toolkit."""


class RippleKitError(Exception):
    """Base class for all toolkit errors."""


class TraceFormatError(RippleKitError):
    """A trace file violates the JSONL trace format.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateStatsError(RippleKitError):
    """Statistics carry no mass (all-zero frequencies) where a probability is required."""


class InvalidPairError(RippleKitError):
    """A pairwise operation was asked about a single neuron (i == j) or a shared link."""


class SizeLimitError(RippleKitError):
    """An instance exceeds a hard or configured size limit."""


class CalibrationError(RippleKitError):
    """Curve fitting produced non-positive hardware parameters."""


class CacheCapacityError(RippleKitError):
    """A cache operation cannot fit within the configured capacity."""


class ConfigError(RippleKitError):
    """Configuration file is malformed or contains unknown keys."""


class FileFormatError(RippleKitError):
    """A stats, placement, or profile file does not match its documented schema."""
