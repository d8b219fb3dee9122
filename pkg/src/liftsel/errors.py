"""Exception hierarchy shared across the package."""


class LiftselError(Exception):
    """Base class for all errors raised by this package."""


class MalformedRecordError(LiftselError):
    """An experiment record violates a structural invariant (no traffic,
    conversions exceeding visitors, non-positive profit or cost)."""


class TooFewObservationsError(LiftselError):
    """A statistic was requested on fewer observations than the estimator
    supports (the mixture-model floor is 100 tests)."""


class DataFormatError(LiftselError):
    """An input file could not be parsed into usable rows."""


class ConfigError(LiftselError):
    """A run configuration value is out of range or inconsistent."""
