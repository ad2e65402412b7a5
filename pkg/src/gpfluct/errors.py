"""Exception types shared by the numerical modules and the command line."""


class ConfigError(ValueError):
    """Invalid user input: a configuration value or a malformed data file."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (no bracket, divergent series, ...)."""


class ToleranceError(NumericalError):
    """A computed invariant exceeded its tolerance."""
