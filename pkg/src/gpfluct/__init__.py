"""Gross-Pitaevskii fluctuation dynamics: scattering, condensate evolution,
pair-correlation kernels, quadratic generators, Bogoliubov propagation,
central-limit variances and exact truncated Fock-space checks."""

from .errors import ConfigError, NumericalError, ToleranceError

__version__ = "0.1.0"

__all__ = ["ConfigError", "NumericalError", "ToleranceError", "__version__"]
