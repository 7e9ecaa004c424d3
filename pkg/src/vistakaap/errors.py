"""Exception hierarchy shared by every module."""


class VistaKaapError(Exception):
    """Base class for all package errors."""


class ConfigError(VistaKaapError, ValueError):
    """Invalid configuration or argument value."""


class ShapeError(VistaKaapError, ValueError):
    """Input shape does not match what a model or scheme expects."""


class NumericError(VistaKaapError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class RejectedConfigurationError(ConfigError):
    """A fusion variant that is structurally disallowed (baseline #1)."""
