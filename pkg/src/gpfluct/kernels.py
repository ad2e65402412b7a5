"""Pair-correlation kernels on the grid and their hyperbolic functions.

Two-point kernels are stored as operator matrices in the orthonormal grid
basis: the matrix of a kernel K(x, y) is h^3 K.  Composition of kernels is
then a plain matrix product, the identity kernel is the identity matrix and
the Hilbert-Schmidt norm is the Frobenius norm.  `KernelPack.kernel` converts
back to kernel values.

Conventions: with phi the condensate, q = 1 - h^3 phi phi^H.  eta = q k q^T
is symmetric; its rows are orthogonal to phi (phi^H eta = 0) and it
annihilates conj(phi).  The same holds for sigma and p = gamma - 1.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .cells import cell_radial_integral
from .errors import ConfigError, NumericalError
from .formats import write_binary
from .scattering import w_limit, w_limit_derivative

SERIES_CAP = 40


@dataclass(frozen=True)
class RadialProfile:
    """A radial pair profile g(|z|) supported in |z| <= support."""

    label: str
    value: Callable
    derivative: Callable
    support: float
    breakpoints: tuple = ()

    @property
    def is_zero(self):
        return self.support <= 0.0

    def cell_integral(self, fn, h, nodes=64):
        """int over one cell of fn(r) for an fn built from this profile."""
        if self.is_zero:
            return 0.0
        return cell_radial_integral(fn, h, self.support, self.breakpoints, nodes)

    def cell_average(self, h, nodes=64):
        return self.cell_integral(self.value, h, nodes) / h ** 3

    def cell_moment(self, h, nodes=64):
        """(1/h^3) int_cell |z| g'(|z|) dz, the diagonal weight of gradient terms."""
        return self.cell_integral(lambda r: r * self.derivative(r), h, nodes) / h ** 3


def _geometric_cuts(lo, hi):
    cuts = []
    r = lo
    while r < hi:
        cuts.append(r)
        r *= 2.0
    return tuple(cuts)


def finite_profile(scattering):
    """N w(N |z|) with derivative N^2 w'(N |z|)."""
    if scattering.potential.is_zero:
        return RadialProfile("finite", _zero, _zero, 0.0)
    core = scattering.support / scattering.N
    return RadialProfile(
        "finite", scattering.rescaled_w, scattering.rescaled_dw, scattering.ell,
        _geometric_cuts(core, scattering.ell))


def limit_profile(a, ell):
    if a == 0.0:
        return RadialProfile("limiting", _zero, _zero, 0.0)
    return RadialProfile(
        "limiting", lambda r: w_limit(r, a, ell), lambda r: w_limit_derivative(r, a, ell), ell,
        _geometric_cuts(ell / 1024.0, ell))


def indicator_profile(ell):
    return RadialProfile(
        "indicator", lambda r: np.where(np.asarray(r) <= ell, 1.0, 0.0), _zero, ell)


def _zero(r):
    return np.zeros_like(np.asarray(r, dtype=float))


@lru_cache(maxsize=8)
def _offsets(M):
    ix, iy, iz = np.unravel_index(np.arange(M ** 3), (M, M, M))
    return ix, iy, iz


@lru_cache(maxsize=8)
def displacement_index(M):
    """n x n indices into the flattened table of displacements x - y (mod M)."""
    ix, iy, iz = _offsets(M)
    dx = (ix[:, None] - ix[None, :]) % M
    dy = (iy[:, None] - iy[None, :]) % M
    dz = (iz[:, None] - iz[None, :]) % M
    return (dx * M + dy) * M + dz


def displacement_vectors(grid):
    """Minimum-image displacement vectors for every table offset, shape (3, M^3)."""
    ix, iy, iz = _offsets(grid.M)
    return np.stack([grid.min_image(ix), grid.min_image(iy), grid.min_image(iz)]) * grid.h


def profile_table(profile, grid, nodes=64):
    """g at each minimum-image displacement; the zero offset holds the cell average."""
    r = np.linalg.norm(displacement_vectors(grid), axis=0)
    table = np.zeros(grid.size)
    if profile.is_zero:
        return table
    off = r > 0.0
    table[off] = profile.value(r[off])
    table[0] = profile.cell_average(grid.h, nodes)
    return table


def gradient_tables(profile, grid):
    """Components of grad g(z) = g'(r) z/r at off-diagonal displacements (zero at z = 0)."""
    z = displacement_vectors(grid)
    r = np.linalg.norm(z, axis=0)
    out = np.zeros((3, grid.size))
    if profile.is_zero:
        return out
    off = r > 0.0
    out[:, off] = profile.derivative(r[off]) * z[:, off] / r[off]
    return out


def two_point(table, grid):
    """Dense matrix T[x, y] = table[x - y]."""
    return table[displacement_index(grid.M)]


def circulant_op(symbol, grid):
    """Operator matrix of the Fourier multiplier `symbol` on the grid modes."""
    table = np.fft.ifftn(symbol).real.reshape(-1)
    return two_point(table, grid)


def projector(phi, h):
    return np.eye(phi.size) - h ** 3 * np.outer(phi, phi.conj())


def hs(op):
    return float(np.linalg.norm(op))


def op_norm(op):
    return float(np.linalg.norm(op, 2))


def hyperbolic_series(eta, tol, cap=SERIES_CAP):
    """Powers X^j and X^j eta (X = eta conj(eta)) until both series terms drop below tol.

    Returns (x_powers, eta_powers) with x_powers[0] = identity.
    """
    n = eta.shape[0]
    x_mat = eta @ eta.conj()
    x_powers = [np.eye(n, dtype=complex)]
    eta_powers = [eta.astype(complex)]
    norm_eta = hs(eta)
    prev = math.inf
    for j in range(1, cap):
        xp = x_powers[-1] @ x_mat
        ep = xp @ eta
        term = max(hs(xp) / math.factorial(2 * j), hs(ep) / math.factorial(2 * j + 1))
        if term >= prev and term > tol:
            raise NumericalError(
                f"cosh/sinh series terms stopped decreasing at order {j}; ||eta||_HS = {norm_eta:.6g} "
                "is too large for this grid")
        x_powers.append(xp)
        eta_powers.append(ep)
        if term < tol:
            return x_powers, eta_powers
        prev = term
    raise NumericalError(
        f"cosh/sinh series did not reach tolerance {tol:g} in {cap} terms; ||eta||_HS = {norm_eta:.6g}")


def cosh_sinh(x_powers, eta_powers, s=1.0):
    """gamma = sum s^{2j} X^j/(2j)!, sigma = sum s^{2j+1} X^j eta/(2j+1)!."""
    gamma = np.zeros_like(x_powers[0])
    sigma = np.zeros_like(eta_powers[0])
    for j, (xp, ep) in enumerate(zip(x_powers, eta_powers)):
        gamma = gamma + s ** (2 * j) / math.factorial(2 * j) * xp
        sigma = sigma + s ** (2 * j + 1) / math.factorial(2 * j + 1) * ep
    return gamma, sigma


@dataclass(frozen=True, eq=False)
class KernelPack:
    grid: object
    t: float
    flavor: str
    profile: RadialProfile
    field: np.ndarray
    k: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    tol: float
    N: float
    ell: float
    scattering_length: float
    pair_table: np.ndarray = field(repr=False)
    x_powers: tuple = field(repr=False, default=())
    eta_powers: tuple = field(repr=False, default=())

    @property
    def p(self):
        return self.gamma - np.eye(self.grid.size)

    @property
    def r(self):
        return self.sigma - self.eta

    @property
    def mu(self):
        return self.eta - self.k

    @property
    def projector(self):
        return projector(self.field, self.grid.h)

    def member(self, name):
        if name not in ("k", "eta", "gamma", "sigma", "p", "r", "mu"):
            raise ConfigError(f"unknown kernel {name!r}")
        return getattr(self, name)

    def kernel(self, name):
        """Kernel values K(x, y) (not the operator matrix)."""
        return self.member(name) / self.grid.h ** 3

    def hyperbolic(self, s):
        return cosh_sinh(self.x_powers, self.eta_powers, s)

    def hs_norm(self, name):
        return hs(self.member(name))

    def residuals(self):
        """Symmetry, hyperbolic and orthogonality residuals (operator-matrix norms)."""
        h3 = self.grid.h ** 3
        phi = self.field
        out = {f"symmetry_{name}": float(np.max(np.abs(self.member(name) - self.member(name).T)))
               for name in ("k", "eta", "sigma")}
        eye = np.eye(self.grid.size)
        out["hyperbolic"] = hs(self.gamma @ self.gamma - self.sigma @ self.sigma.conj() - eye)
        out["commutation"] = hs(self.gamma @ self.sigma - self.sigma @ self.gamma.conj())
        for name in ("eta", "sigma", "p"):
            g = phi.conj() @ self.member(name)
            out[f"orthogonality_{name}"] = math.sqrt(h3 * float(np.vdot(g, g).real))
        q = self.projector
        out["idempotence"] = hs(q @ self.eta @ q.T - self.eta)
        return out


def build_kernels(state, scattering, grid=None, tol=1e-12, nodes=64):
    """Kernel pack for a modified-flavor field (profile N w(N.)) or a
    limiting-flavor field (profile w_inf)."""
    grid = state.grid if grid is None else grid
    if grid != state.grid:
        raise ConfigError("field and kernel grids differ")
    if not 1e-14 <= tol <= 1e-8:
        raise ConfigError(f"series tolerance must lie in [1e-14, 1e-8], got {tol}")
    grid.check_window(scattering.ell)
    if state.flavor == "modified":
        profile = finite_profile(scattering)
        flavor, N = "finite_N", scattering.N
    else:
        profile = limit_profile(scattering.scattering_length, scattering.ell)
        flavor, N = "limiting", math.inf
    h3 = grid.h ** 3
    phi = state.flat.copy()
    table = profile_table(profile, grid, nodes)
    pair = two_point(table, grid)
    k = -h3 * pair * np.outer(phi, phi)
    q = projector(phi, grid.h)
    eta = q @ k @ q.T
    eta = 0.5 * (eta + eta.T)
    x_powers, eta_powers = hyperbolic_series(eta, tol)
    gamma, sigma = cosh_sinh(x_powers, eta_powers)
    return KernelPack(
        grid=grid, t=state.t, flavor=flavor, profile=profile, field=phi, k=k, eta=eta,
        gamma=gamma, sigma=0.5 * (sigma + sigma.T), tol=tol, N=N, ell=scattering.ell,
        scattering_length=scattering.scattering_length, pair_table=table,
        x_powers=tuple(x_powers), eta_powers=tuple(eta_powers))


def eta_dot(pack, state, phi_dot):
    """Time derivative of eta by the product rule through k and both projections."""
    if abs(state.t - pack.t) > 1e-12 * max(1.0, abs(pack.t)):
        raise ConfigError(f"field time {state.t} does not match kernel time {pack.t}")
    phi = pack.field
    if not np.allclose(state.flat, phi, rtol=0.0, atol=1e-13):
        raise ConfigError("field does not match the one the kernels were built from")
    grid = pack.grid
    h3 = grid.h ** 3
    dphi = np.asarray(phi_dot, dtype=complex).reshape(-1)
    pair = two_point(pack.pair_table, grid)
    k_dot = -h3 * pair * (np.outer(dphi, phi) + np.outer(phi, dphi))
    q = pack.projector
    q_dot = -h3 * (np.outer(dphi, phi.conj()) + np.outer(phi, dphi.conj()))
    out = q_dot @ pack.k @ q.T + q @ k_dot @ q.T + q @ pack.k @ q_dot.T
    return 0.5 * (out + out.T)


# near-diagonal structure, used for sub-grid corrections of HS norms

@dataclass(frozen=True)
class Core:
    """Near-diagonal form c_x(z) = radial(x) g(|z|) + |z| g'(|z|) zhat^T angular(x) zhat
    of a kernel at (x, x - z), for |z| inside one cell."""

    profile: RadialProfile
    radial: np.ndarray
    angular: np.ndarray = None


def _gram(pa, pb, h, nodes):
    """Cell integrals of products of g_a, r g_a' with g_b, r g_b'."""
    if pa.is_zero or pb.is_zero:
        return dict(vv=0.0, vd=0.0, dv=0.0, dd=0.0)
    support = max(pa.support, pb.support)
    cuts = tuple(sorted(set(pa.breakpoints + pb.breakpoints + (pa.support, pb.support))))

    def integral(fn):
        return cell_radial_integral(fn, h, support, cuts, nodes)

    return dict(
        vv=integral(lambda r: pa.value(r) * pb.value(r)),
        vd=integral(lambda r: pa.value(r) * r * pb.derivative(r)),
        dv=integral(lambda r: r * pa.derivative(r) * pb.value(r)),
        dd=integral(lambda r: r ** 2 * pa.derivative(r) * pb.derivative(r)))


def _pair_integral(ca, cb, gram):
    """int_cell c_a conj(c_b) dz for every grid point; angular averages are
    those of the full sphere (exact when the profiles live inside the
    inscribed ball of the cell)."""
    out = ca.radial * cb.radial.conj() * gram["vv"]
    tra = None if ca.angular is None else np.trace(ca.angular, axis1=1, axis2=2)
    trb = None if cb.angular is None else np.trace(cb.angular, axis1=1, axis2=2)
    if trb is not None:
        out = out + ca.radial * trb.conj() / 3.0 * gram["vd"]
    if tra is not None:
        out = out + cb.radial.conj() * tra / 3.0 * gram["dv"]
    if tra is not None and trb is not None:
        cross = np.einsum("xjk,xjk->x", ca.angular, cb.angular.conj())
        out = out + (tra * trb.conj() + 2.0 * cross) / 15.0 * gram["dd"]
    return out


def _cell_mean(c, h, nodes):
    if c.profile.is_zero:
        return np.zeros_like(c.radial)
    mean = c.radial * c.profile.cell_integral(c.profile.value, h, nodes)
    if c.angular is not None:
        tr = np.trace(c.angular, axis1=1, axis2=2)
        mean = mean + tr / 3.0 * c.profile.cell_integral(lambda r: r * c.profile.derivative(r), h, nodes)
    return mean / h ** 3


def subgrid_correction(cores, h, nodes=64):
    """Sum_x h^3 [int_cell |C_x|^2 - h^3 |mean C_x|^2] for C = sum of signed cores.

    `cores` is a list of (sign, Core).  Adding this to the squared discrete HS
    norm replaces the midpoint treatment of the diagonal cell by the exact
    cell integral of the singular near-diagonal profile.
    """
    total = np.zeros(cores[0][1].radial.shape, dtype=complex)
    mean = np.zeros_like(total)
    for sa, ca in cores:
        mean = mean + sa * _cell_mean(ca, h, nodes)
        for sb, cb in cores:
            total = total + sa * sb * _pair_integral(ca, cb, _gram(ca.profile, cb.profile, h, nodes))
    return float(h ** 3 * np.sum(total.real - h ** 3 * np.abs(mean) ** 2))


def eta_core(pack):
    return Core(pack.profile, -pack.field ** 2)


def corrected_hs(op, cores, h):
    """HS norm of a kernel with the sub-grid correction for its diagonal cells."""
    return math.sqrt(max(hs(op) ** 2 + subgrid_correction(cores, h), 0.0))


@dataclass(frozen=True)
class DistanceReport:
    t: float
    N: float
    ell: float
    grid: dict
    continuum: dict

    def rows(self):
        for name in self.grid:
            yield (self.t, self.N, self.ell, f"{name}_distance_grid", self.grid[name])
            yield (self.t, self.N, self.ell, f"{name}_distance", self.continuum[name])


def kernel_distance(pack_n, pack_lim):
    """HS distances between the finite-N and limiting packs.

    `grid` holds plain discrete distances; `continuum` adds the sub-grid
    correction for kernels whose near-diagonal part is the singular profile
    (k, eta, sigma).  The others are smooth on the cell scale.
    """
    if pack_n.grid != pack_lim.grid:
        raise ConfigError("kernel packs live on different grids")
    if pack_n.flavor != "finite_N" or pack_lim.flavor != "limiting":
        raise ConfigError("kernel_distance expects a finite_N pack and a limiting pack")
    if abs(pack_n.t - pack_lim.t) > 1e-12 * max(1.0, abs(pack_n.t)):
        raise ConfigError("kernel packs are at different times")
    h = pack_n.grid.h
    cores = [(1.0, eta_core(pack_n)), (-1.0, eta_core(pack_lim))]
    corr = subgrid_correction(cores, h)
    grid_d, cont_d = {}, {}
    for name in ("k", "eta", "sigma", "p", "r", "mu"):
        d = hs(pack_n.member(name) - pack_lim.member(name))
        grid_d[name] = d
        cont_d[name] = math.sqrt(max(d * d + corr, 0.0)) if name in ("k", "eta", "sigma") else d
    return DistanceReport(pack_n.t, pack_n.N, pack_n.ell, grid_d, cont_d)


def export_kernel(path, pack, name):
    g = pack.grid
    write_binary(path, "kernel", {"name": name, "M": g.M, "L": g.L, "t": float(pack.t), "flavor": pack.flavor},
                 pack.kernel(name))
