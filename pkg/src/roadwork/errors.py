class RoadworkError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RoadworkError):
    """Missing or inconsistent configuration."""


class InputError(RoadworkError, ValueError):
    """Input data violates a documented precondition."""


class TransportError(RoadworkError):
    """A tile could not be fetched. Non-fatal for the collector."""


class StoreError(RoadworkError):
    """The observation store cannot be written. Fatal for the collector."""


class HorizonError(RoadworkError):
    """The analysis horizon ended before the work-zone queue dissipated."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
