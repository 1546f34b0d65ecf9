"""Exception types shared across the simulator."""


class FedFairError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(FedFairError):
    """A config value or combination of values is invalid before any training starts."""


class ProtocolError(FedFairError):
    """The round protocol was violated (shape mismatch, duplicate round, ...)."""


class UndefinedMetricError(FedFairError):
    """A metric has no defined value for the given inputs (e.g. JFI of all zeros)."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class SchemaMismatchError(FedFairError):
    """A results file carries a schema version this code does not understand."""
