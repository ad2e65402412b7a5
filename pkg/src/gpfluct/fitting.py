"""Power-law fits for N-sweeps."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError


@dataclass(frozen=True)
class PowerLaw:
    """value ~ C N^slope; `decay` is -slope."""

    slope: float
    intercept: float
    r_squared: float
    stderr: float
    ci95: tuple
    points: int

    @property
    def decay(self):
        return -self.slope

    @property
    def prefactor(self):
        return math.exp(self.intercept)


def fit_power_law(ns, values):
    """Least squares of log(value) on log(N), with a 95% interval on the slope."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if ns.size != values.size or ns.size < 2:
        raise ConfigError("a power-law fit needs at least two (N, value) pairs")
    if np.any(ns <= 0) or np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ConfigError("power-law fits need positive, finite N and values")
    res = stats.linregress(np.log(ns), np.log(values))
    if ns.size > 2:
        half = float(stats.t.ppf(0.975, ns.size - 2) * res.stderr)
    else:
        half = math.nan
    return PowerLaw(float(res.slope), float(res.intercept), float(res.rvalue ** 2), float(res.stderr),
                    (float(res.slope) - half, float(res.slope) + half), int(ns.size))
