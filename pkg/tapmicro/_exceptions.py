from typing import Any, Dict, Optional


class TapMicroError(Exception):
    """Base class for every error raised by tapmicro."""

    def __init__(self, message: str = "tapmicro error"):
        self.message = message
        super().__init__(self.message)


class DimensionMismatchError(TapMicroError):
    """Exception raised when a tensor shape or layout does not match what an operation expects."""

    def __init__(self, message: str = "Tensor dimensions do not match"):
        super().__init__(message)


class InvalidQueryError(TapMicroError):
    """Exception raised for query points outside the clip or injected at the wrong time."""

    def __init__(self, message: str = "Invalid query point"):
        super().__init__(message)


class InvalidVideoError(TapMicroError):
    """Exception raised when frame values are not finite or fall outside [0, 1]."""

    def __init__(self, message: str = "Invalid video frames"):
        super().__init__(message)


class CoordinateRangeError(TapMicroError):
    """Exception raised when a coordinate target lies outside [0, extent]."""

    def __init__(self, message: str = "Coordinate out of range"):
        super().__init__(message)


class UnsupportedModeError(TapMicroError):
    """Exception raised when a component is asked for a mode it cannot run in."""

    def __init__(self, message: str = "Unsupported mode"):
        super().__init__(message)


class InvalidConfigError(TapMicroError):
    """Exception raised when a configuration fails validation."""

    def __init__(self, message: str = "Invalid configuration"):
        super().__init__(message)


class InvalidStorageError(TapMicroError):
    """Exception raised for errors in the storage operations."""

    def __init__(self, message: str = "Invalid storage operation"):
        super().__init__(message)


class InvalidStorageUsageError(TapMicroError):
    """Exception raised for errors in the usage of the storage."""

    def __init__(self, message: str = "Invalid usage of the storage"):
        super().__init__(message)


class NumericError(TapMicroError):
    """Exception raised when a loss or recurrent state stops being finite."""

    def __init__(self, message: str = "Non-finite value encountered", diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics: Dict[str, Any] = diagnostics or {}
        super().__init__(message)


class GenerationError(TapMicroError):
    """Exception raised when synthetic data cannot satisfy a request."""

    def __init__(self, message: str = "Synthetic data generation failed"):
        super().__init__(message)


class MetricError(TapMicroError):
    """Exception raised when metrics are requested on records with nothing to score."""

    def __init__(self, message: str = "Nothing to evaluate"):
        super().__init__(message)
