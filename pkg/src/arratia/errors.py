"""Exception types shared across the package."""


class ArratiaError(Exception):
    """Base class for errors raised by this package."""


class UnboundedDriftError(ArratiaError):
    """Raised when a method that requires bounded drift receives one without
    a finite sup-norm certificate (the linear family)."""


class ConfigError(ArratiaError):
    """Invalid run configuration: unknown method, bad drift string, broken
    grid, insufficient margin, and similar."""


class MarginError(ArratiaError):
    """Evaluation point lies outside the safe window of a computed field or
    simulated ensemble."""
