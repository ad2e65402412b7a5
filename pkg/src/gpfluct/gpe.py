"""Condensate dynamics on a periodic cubic grid.

Both the limiting equation i d_t phi = -Delta phi + 8 pi a |phi|^2 phi and the
N-dependent equation with the convolution (N^3 V(N.) f(N.)) * |phi|^2 are
integrated by Strang splitting.  The narrow convolution kernel is applied
through its exact radial Fourier transform sampled at the grid modes.
"""

import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ToleranceError

FLAVORS = ("limiting", "modified")


@dataclass(frozen=True)
class Grid:
    """M^3 periodic grid on the box [-L/2, L/2)^3."""

    L: float
    M: int

    def __post_init__(self):
        if not (isinstance(self.M, (int, np.integer)) and self.M >= 8 and self.M % 2 == 0):
            raise ConfigError(f"grid size M must be an even integer >= 8, got {self.M!r}")
        if not (math.isfinite(self.L) and self.L > 0):
            raise ConfigError(f"box length L must be positive, got {self.L!r}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self):
        return self.L / self.M

    @property
    def size(self):
        return self.M ** 3

    @property
    def shape(self):
        return (self.M,) * 3

    @property
    def axis(self):
        return -0.5 * self.L + self.h * np.arange(self.M)

    def coords(self):
        return np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")

    @property
    def wavenumbers(self):
        return 2.0 * math.pi * np.fft.fftfreq(self.M, d=self.h)

    def momenta(self):
        k = self.wavenumbers
        return np.meshgrid(k, k, k, indexing="ij")

    def p_squared(self):
        px, py, pz = self.momenta()
        return px ** 2 + py ** 2 + pz ** 2

    def check_window(self, ell):
        if not self.L > 4.0 * ell:
            raise ConfigError(f"box length L = {self.L} must exceed 4 ell = {4.0 * ell}")

    def inner(self, f, g):
        return self.h ** 3 * np.vdot(f, g)

    def norm(self, f):
        return math.sqrt(self.h ** 3 * float(np.vdot(f, f).real))

    def laplacian(self, f):
        return np.fft.ifftn(-self.p_squared() * np.fft.fftn(f))

    def gradient(self, f):
        """Spectral gradient with the Nyquist component removed."""
        k = self.wavenumbers.copy()
        k[self.M // 2] = 0.0
        fh = np.fft.fftn(f)
        return np.stack([
            np.fft.ifftn(1j * k[:, None, None] * fh),
            np.fft.ifftn(1j * k[None, :, None] * fh),
            np.fft.ifftn(1j * k[None, None, :] * fh),
        ])

    def min_image(self, d):
        """Minimum-image reduction of index differences to [-M/2, M/2)."""
        return (d + self.M // 2) % self.M - self.M // 2


@dataclass(frozen=True)
class FieldState:
    grid: Grid
    values: np.ndarray
    t: float = 0.0
    flavor: str = "limiting"

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ConfigError(f"field flavor must be one of {FLAVORS}, got {self.flavor!r}")
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise ConfigError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def normalized(cls, grid, values, t=0.0, flavor="limiting"):
        values = np.asarray(values, dtype=complex)
        return cls(grid, values / grid.norm(values), t, flavor)

    @property
    def norm(self):
        return self.grid.norm(self.values)

    @property
    def flat(self):
        return self.values.reshape(-1)

    def with_flavor(self, flavor):
        return FieldState(self.grid, self.values, self.t, flavor)


@dataclass(frozen=True)
class EffectiveInteraction:
    """Fourier symbol of N^3 V(N.) f(N.) on the grid modes."""

    grid: Grid
    fourier_values: np.ndarray
    zero_mode: float
    N: float = field(default=math.inf)

    def convolve(self, density):
        return np.fft.ifftn(self.fourier_values * np.fft.fftn(density)).real


def radial_transform(fn, pieces, q, nodes=128):
    """4 pi int fn(r) sin(q r)/(q r) r^2 dr summed over (a, b) pieces."""
    q = np.asarray(q, dtype=float)
    x, w = np.polynomial.legendre.leggauss(nodes)
    out = np.zeros_like(q)
    for a, b in pieces:
        r = a + 0.5 * (b - a) * (x + 1.0)
        vals = fn(r) * r ** 2 * 0.5 * (b - a) * w
        out += np.sinc(np.multiply.outer(q, r) / math.pi) @ vals
    return 4.0 * math.pi * out


def build_interaction(scattering, potential, grid, nodes=128):
    """Exact radial transform of V f at |p|/N on every grid mode."""
    if potential != scattering.potential:
        raise ConfigError("potential does not match the scattering solution")
    if potential.is_zero:
        zeros = np.zeros(grid.shape)
        return EffectiveInteraction(grid, zeros, 0.0, scattering.N)
    p2 = grid.p_squared()
    uniq, inverse = np.unique(p2, return_inverse=True)
    q = np.sqrt(uniq) / scattering.N
    pieces = [(a, b) for a, b, _ in potential.pieces()]
    integrand = _piecewise(potential, scattering)
    coarse = radial_transform(integrand, pieces, q, nodes)
    fine = radial_transform(integrand, pieces, q, 2 * nodes)
    if np.max(np.abs(coarse - fine)) > 1e-10 * max(abs(fine[0]), 1e-300):
        raise NumericalError("radial Fourier quadrature of V f did not converge")
    values = fine[inverse].reshape(grid.shape)
    return EffectiveInteraction(grid, values, float(fine[0]), scattering.N)


def _piecewise(potential, scattering):
    pieces = potential.pieces()

    def fn(r):
        out = np.zeros_like(r)
        for a, b, v in pieces:
            m = (r >= a) & (r <= b)
            out[m] = v(r[m])
        return out * scattering.f(r)

    return fn


def contact_symbol(grid, a):
    return np.full(grid.shape, 8.0 * math.pi * a)


def _check_pair(state, interaction):
    if state.flavor == "modified":
        if not isinstance(interaction, EffectiveInteraction):
            raise ConfigError("modified-flavor fields need an EffectiveInteraction")
        if interaction.grid != state.grid:
            raise ConfigError("interaction and field live on different grids")
    else:
        if isinstance(interaction, EffectiveInteraction):
            raise ConfigError("limiting-flavor fields take a scattering length, not an EffectiveInteraction")


def mean_field(state, interaction):
    """Multiplication potential of the nonlinearity: 8 pi a |phi|^2 or W_N * |phi|^2."""
    _check_pair(state, interaction)
    rho = np.abs(state.values) ** 2
    if state.flavor == "modified":
        return interaction.convolve(rho)
    return 8.0 * math.pi * float(interaction) * rho


def time_derivative(state, interaction):
    phi = state.values
    return -1j * (-state.grid.laplacian(phi) + mean_field(state, interaction) * phi)


def gp_energy(state, a, v_ext=None):
    """int |grad phi|^2 + V_ext |phi|^2 + 4 pi a |phi|^4 with a spectral gradient."""
    g = state.grid
    phi = state.values
    fh = np.fft.fftn(phi)
    kinetic = g.h ** 3 / g.size * float(np.sum(g.p_squared() * np.abs(fh) ** 2))
    rho = np.abs(phi) ** 2
    energy = kinetic + 4.0 * math.pi * a * g.h ** 3 * float(np.sum(rho ** 2))
    if v_ext is not None:
        energy += g.h ** 3 * float(np.sum(np.asarray(v_ext) * rho))
    return energy


@dataclass
class Trajectory:
    states: list

    @property
    def times(self):
        return [s.t for s in self.states]

    @property
    def final(self):
        return self.states[-1]

    def at(self, t):
        """Cubic (four-point Lagrange) interpolation in time, renormalised."""
        times = self.times
        if not times[0] - 1e-12 <= t <= times[-1] + 1e-12:
            raise ConfigError(f"time {t} outside the trajectory range [{times[0]}, {times[-1]}]")
        i = bisect_left(times, t)
        if i < len(times) and abs(times[i] - t) <= 1e-12 * max(1.0, abs(t)):
            return self.states[i]
        if i > 0 and abs(times[i - 1] - t) <= 1e-12 * max(1.0, abs(t)):
            return self.states[i - 1]
        lo = min(max(i - 2, 0), max(len(times) - 4, 0))
        idx = range(lo, min(lo + 4, len(times)))
        values = np.zeros_like(self.states[0].values)
        for j in idx:
            weight = 1.0
            for k in idx:
                if k != j:
                    weight *= (t - times[k]) / (times[j] - times[k])
            values = values + weight * self.states[j].values
        ref = self.states[0]
        return FieldState.normalized(ref.grid, values, t, ref.flavor)


def evolve(state, interaction, t_end, dt, sample_times=None):
    """Strang split-step propagation from state.t to t_end.

    Returns a Trajectory with the initial state and the states at
    `sample_times` (default: only t_end).  Each interval between samples is
    split into the smallest number of equal steps not exceeding dt.
    """
    _check_pair(state, interaction)
    g = state.grid
    if not dt > 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    if dt > g.h ** 2 / math.pi * (1 + 1e-12):
        raise ConfigError(f"dt = {dt} exceeds the splitting bound h^2/pi = {g.h ** 2 / math.pi:.6g}")
    if t_end < state.t:
        raise ConfigError(f"t_end = {t_end} precedes the initial time {state.t}")
    targets = sorted(set([float(t) for t in (sample_times or [])] + [float(t_end)]))
    if targets[0] < state.t - 1e-14:
        raise ConfigError("sample times must not precede the initial time")
    if state.flavor == "modified":
        symbol = interaction.fourier_values
    else:
        symbol = None
        coupling = 8.0 * math.pi * float(interaction)
    p2 = g.p_squared()

    def potential(phi):
        rho = np.abs(phi) ** 2
        if symbol is None:
            return coupling * rho
        return np.fft.ifftn(symbol * np.fft.fftn(rho)).real

    states = [state]
    phi = state.values.copy()
    t = state.t
    for target in targets:
        span = target - t
        if span <= 1e-14:
            continue
        n = max(1, int(math.ceil(span / dt - 1e-9)))
        step = span / n
        kinetic = np.exp(-1j * step * p2)
        phi = phi * np.exp(-0.5j * step * potential(phi))
        for i in range(n):
            phi = np.fft.ifftn(kinetic * np.fft.fftn(phi))
            factor = 0.5 if i == n - 1 else 1.0
            phi = phi * np.exp(-1j * factor * step * potential(phi))
        t = target
        drift = abs(g.norm(phi) - 1.0)
        if drift > 1e-6:
            raise ToleranceError(f"norm drift {drift:.3g} exceeds 1e-6; use a smaller dt")
        states.append(FieldState(g, phi.copy(), t, state.flavor))
    return Trajectory(states)


def constant_field(grid, flavor="limiting"):
    return FieldState(grid, np.full(grid.shape, grid.L ** -1.5, dtype=complex), 0.0, flavor)


def plane_wave(grid, n, flavor="limiting"):
    """e^{i k.x}/L^{3/2} with k = 2 pi n / L."""
    x, y, z = grid.coords()
    k = 2.0 * math.pi * np.asarray(n, dtype=float) / grid.L
    return FieldState(grid, np.exp(1j * (k[0] * x + k[1] * y + k[2] * z)) * grid.L ** -1.5, 0.0, flavor)


def smooth_datum(grid, seed=0, max_mode=1, amplitude=0.4, flavor="limiting"):
    """Normalised constant plus random low Fourier modes |n_i| <= max_mode."""
    rng = np.random.default_rng(seed)
    x, y, z = grid.coords()
    values = np.ones(grid.shape, dtype=complex)
    span = range(-max_mode, max_mode + 1)
    for nx in span:
        for ny in span:
            for nz in span:
                if nx == ny == nz == 0:
                    continue
                c = amplitude * (rng.normal() + 1j * rng.normal()) / (1 + nx * nx + ny * ny + nz * nz)
                k = 2.0 * math.pi / grid.L
                values += c * np.exp(1j * k * (nx * x + ny * y + nz * z))
    return FieldState.normalized(grid, values, 0.0, flavor)


def mass_outside(state, radius):
    """Mass of the field outside the ball |x| < radius (box-leak diagnostic)."""
    x, y, z = state.grid.coords()
    outside = x ** 2 + y ** 2 + z ** 2 >= radius ** 2
    return state.grid.h ** 3 * float(np.sum(np.abs(state.values[outside]) ** 2))
