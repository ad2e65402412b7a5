"""Radial scattering solutions for non-negative, compactly supported potentials.

Two problems are solved for the radial function u(r) = r f(r):

* the zero-energy equation -u'' + V u / 2 = 0, whose affine tail
  u = c (r - a) outside the support defines the scattering length a;
* the ground state of [-Delta + V/2] f = lam f on the ball |x| <= N ell with
  f'(N ell) = 0 and f(N ell) = 1, found by shooting on lam.

Inside the support u is integrated with fixed-step classical RK4; outside the
support the solution is continued in closed form (sin/cos for lam > 0, affine
for lam = 0).
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline

from .errors import ConfigError, NumericalError

POTENTIAL_KINDS = ("zero", "square_well", "custom_radial_table")
MIN_NODES_PER_UNIT = 64
DEFAULT_NODES_PER_UNIT = 256


@dataclass(frozen=True)
class Potential:
    """Radial interaction V(r) >= 0 vanishing for r > R.

    `table` holds (r, V) pairs for the tabulated kind; values between nodes
    are linearly interpolated, V is constant below the first node and zero
    beyond the last one.
    """

    kind: str
    v0: float = 0.0
    R: float = 0.0
    table: tuple = ()
    source: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ConfigError(f"unknown potential kind {self.kind!r}; expected one of {POTENTIAL_KINDS}")
        if self.kind == "square_well":
            if not (math.isfinite(self.v0) and self.v0 >= 0.0):
                raise ConfigError(f"square_well strength v0 must be finite and >= 0, got {self.v0}")
            if not (math.isfinite(self.R) and self.R > 0.0):
                raise ConfigError(f"square_well radius R must be positive, got {self.R}")
        elif self.kind == "custom_radial_table":
            if len(self.table) < 2:
                raise ConfigError("custom_radial_table needs at least two (r, V) rows")
            r = np.array([row[0] for row in self.table], dtype=float)
            v = np.array([row[1] for row in self.table], dtype=float)
            if not np.all(np.isfinite(r)) or not np.all(np.isfinite(v)):
                raise ConfigError("potential table contains non-finite entries")
            if r[0] < 0.0 or np.any(np.diff(r) <= 0.0):
                raise ConfigError("potential table radii must be non-negative and strictly increasing")
            if np.any(v < 0.0):
                raise ConfigError("potential table has negative values; only repulsive V >= 0 is supported")
            object.__setattr__(self, "table", tuple((float(a), float(b)) for a, b in zip(r, v)))
            object.__setattr__(self, "R", float(r[-1]))
        else:
            object.__setattr__(self, "R", 0.0)

    @property
    def support(self):
        return 0.0 if self.is_zero else float(self.R)

    @property
    def is_zero(self):
        if self.kind == "zero":
            return True
        if self.kind == "square_well":
            return self.v0 == 0.0
        return all(v == 0.0 for _, v in self.table)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.is_zero:
            return np.zeros_like(r)
        if self.kind == "square_well":
            return np.where(r <= self.R, self.v0, 0.0)
        rt = np.array([row[0] for row in self.table])
        vt = np.array([row[1] for row in self.table])
        return np.where(r <= rt[-1], np.interp(r, rt, vt), 0.0)

    def pieces(self):
        """Smooth pieces (a, b, fn) covering [0, support]; fn is evaluated as
        the one-sided restriction to its own piece."""
        if self.is_zero:
            return []
        if self.kind == "square_well":
            v0 = float(self.v0)
            return [(0.0, float(self.R), lambda r: np.full_like(np.asarray(r, dtype=float), v0))]
        out = []
        rt = [row[0] for row in self.table]
        vt = [row[1] for row in self.table]
        if rt[0] > 0.0:
            out.append((0.0, rt[0], lambda r, c=vt[0]: np.full_like(np.asarray(r, dtype=float), c)))
        for i in range(len(rt) - 1):
            a, b, va, vb = rt[i], rt[i + 1], vt[i], vt[i + 1]
            slope = (vb - va) / (b - a)
            out.append((a, b, lambda r, a=a, va=va, s=slope: va + s * (np.asarray(r, dtype=float) - a)))
        return out

    @classmethod
    def from_config(cls, section, base_dir=None):
        if not isinstance(section, dict):
            raise ConfigError("potential section must be a mapping")
        kind = section.get("kind")
        if kind == "zero":
            return cls("zero")
        if kind == "square_well":
            try:
                return cls("square_well", v0=float(section["v0"]), R=float(section["R"]))
            except KeyError as exc:
                raise ConfigError(f"square_well potential needs key {exc.args[0]!r}") from None
        if kind == "custom_radial_table":
            path = section.get("table")
            if not path:
                raise ConfigError("custom_radial_table potential needs a 'table' file path")
            full = Path(path) if base_dir is None else Path(base_dir) / path
            return cls.from_table_file(full, source=str(path))
        raise ConfigError(f"unknown potential kind {kind!r}; expected one of {POTENTIAL_KINDS}")

    @classmethod
    def from_table_file(cls, path, source=None):
        try:
            data = np.loadtxt(path, comments="#", ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read potential table {path}: {exc}") from None
        if data.shape[1] != 2:
            raise ConfigError(f"potential table {path} must have two columns (r, V)")
        return cls("custom_radial_table", table=tuple(map(tuple, data)), source=source or str(path))

    def to_config(self):
        if self.kind == "square_well":
            return {"kind": "square_well", "v0": float(self.v0), "R": float(self.R)}
        if self.kind == "custom_radial_table":
            return {"kind": "custom_radial_table", "table": self.source}
        return {"kind": "zero"}


class _Interior:
    """Node layout for RK4 on the support, with V sampled at nodes and midpoints."""

    def __init__(self, potential, nodes_per_unit):
        if nodes_per_unit < MIN_NODES_PER_UNIT:
            raise NumericalError(
                f"radial step too large: {nodes_per_unit} nodes per unit length, "
                f"at least {MIN_NODES_PER_UNIT} are required inside the support")
        self.segments = []
        for a, b, fn in potential.pieces():
            n = max(2, int(math.ceil((b - a) * nodes_per_unit)))
            n += n % 2
            h = (b - a) / n
            r = a + h * np.arange(n + 1)
            r[-1] = b
            self.segments.append((h, r, fn(r), fn(r[:-1] + 0.5 * h)))

    def integrate(self, lam, keep=False):
        """Integrate u'' = (V/2 - lam) u from u(0) = 0, u'(0) = 1."""
        u, v = 0.0, 1.0
        rs, us, vs = [np.zeros(1)], [np.zeros(1)], [np.ones(1)]
        for h, r, vnode, vmid in self.segments:
            qn = (0.5 * vnode - lam).tolist()
            qm = (0.5 * vmid - lam).tolist()
            n = len(qm)
            if keep:
                ub, vb = np.empty(n), np.empty(n)
            hh = 0.5 * h
            for i in range(n):
                q1, q2, q4 = qn[i], qm[i], qn[i + 1]
                k1u, k1v = v, q1 * u
                k2u, k2v = v + hh * k1v, q2 * (u + hh * k1u)
                k3u, k3v = v + hh * k2v, q2 * (u + hh * k2u)
                k4u, k4v = v + h * k3v, q4 * (u + h * k3u)
                u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
                v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
                if keep:
                    ub[i], vb[i] = u, v
            if keep:
                rs.append(r[1:])
                us.append(ub)
                vs.append(vb)
        if not (math.isfinite(u) and math.isfinite(v)):
            raise NumericalError("radial integration diverged; reduce the radial step")
        if keep:
            return u, v, np.concatenate(rs), np.concatenate(us), np.concatenate(vs)
        return u, v


def _tail(u_r, v_r, lam, s):
    """Closed-form continuation of (u, u') a distance s beyond the support."""
    if lam == 0.0:
        return u_r + v_r * s, v_r + 0.0 * s
    k = math.sqrt(lam)
    c, sn = np.cos(k * s), np.sin(k * s)
    return u_r * c + v_r / k * sn, -u_r * k * sn + v_r * c


def solve_zero_energy(potential, r_probe, nodes_per_unit=DEFAULT_NODES_PER_UNIT):
    """Scattering length of `potential` read off the affine tail at `r_probe`."""
    R = potential.support
    if not r_probe > R:
        raise ConfigError(f"r_probe = {r_probe} must lie outside the support R = {R}")
    if potential.is_zero:
        return 0.0
    u, v = _Interior(potential, nodes_per_unit).integrate(0.0)
    if not v > 0.0:
        raise NumericalError("zero-energy solution has non-positive slope at the support edge")
    u_p, v_p = _tail(u, v, 0.0, r_probe - R)
    a = float(r_probe - u_p / v_p)
    if a < -1e-12 or a > R * (1 + 1e-12):
        raise NumericalError(f"scattering length {a} outside [0, R]; the radial step is too coarse")
    return min(max(a, 0.0), R)


@dataclass(frozen=True)
class RadialScattering:
    """Neumann ground state f on |x| <= N ell, extended by 1 outside."""

    N: float
    ell: float
    r_grid: np.ndarray
    f_values: np.ndarray
    lambda_ell: float
    scattering_length: float
    potential: Potential
    support: float
    _spline: object = field(repr=False, compare=False)
    _tail: tuple = field(repr=False, compare=False)

    @property
    def radius(self):
        return self.N * self.ell

    def _u(self, r):
        """Normalised u = r f and u' at radii r <= N ell."""
        R = self.support
        inside = r <= R
        u = np.empty_like(r)
        du = np.empty_like(r)
        if np.any(inside):
            u[inside] = self._spline(r[inside])
            du[inside] = self._spline(r[inside], 1)
        if np.any(~inside):
            u_r, v_r, lam = self._tail
            u[~inside], du[~inside] = _tail(u_r, v_r, lam, r[~inside] - R)
        return u, du

    def f(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = np.ones_like(r)
        m = r < self.radius
        if np.any(m):
            rr = r[m]
            u, du = self._u(rr)
            small = rr < 1e-12
            out[m] = np.where(small, self._spline(0.0, 1), u / np.where(small, 1.0, rr))
        return out

    def df(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = np.zeros_like(r)
        m = r < self.radius
        if np.any(m):
            rr = r[m]
            u, du = self._u(rr)
            q0 = 0.5 * float(self.potential(0.0)) - self.lambda_ell
            small = rr < 1e-4
            safe = np.where(small, 1.0, rr)
            series = q0 * float(self._spline(0.0, 1)) * rr / 3.0
            out[m] = np.where(small, series, (du * safe - u) / safe ** 2)
        return out

    def w(self, r):
        return 1.0 - self.f(r)

    def dw(self, r):
        return -self.df(r)

    def rescaled_w(self, x):
        """N w(N |x|), the correlation profile on the unit scale."""
        return self.N * self.w(self.N * np.asarray(x, dtype=float))

    def rescaled_dw(self, x):
        """Radial derivative of N w(N |x|), i.e. N^2 w'(N |x|)."""
        return self.N ** 2 * self.dw(self.N * np.asarray(x, dtype=float))


def solve_neumann(potential, N, ell, nodes=DEFAULT_NODES_PER_UNIT):
    """Ground state of [-Delta + V/2] f = lam f on |x| <= N ell, f'(N ell) = 0, f(N ell) = 1.

    `nodes` is the number of RK4 nodes per unit radius inside the support.
    """
    if not N >= 2:
        raise ConfigError(f"N must be >= 2, got {N}")
    if not 0.0 < ell < 0.5:
        raise ConfigError(f"ell must lie in (0, 1/2), got {ell}")
    rb = float(N) * float(ell)
    R = potential.support
    if not rb > R:
        raise ConfigError(f"ball radius N*ell = {rb} must exceed the potential support R = {R}")
    interior = _Interior(potential, nodes) if not potential.is_zero else None

    def shoot(lam):
        if interior is None:
            u_r, v_r = 0.0, 1.0
        else:
            u_r, v_r = interior.integrate(lam)
        u_b, v_b = _tail(u_r, v_r, lam, rb - R)
        return rb * v_b - u_b

    lam_hi = 10.0 / rb ** 2
    f_lo = shoot(0.0)
    if potential.is_zero or f_lo <= 1e-14 * rb:
        lam = 0.0
    else:
        f_hi = shoot(lam_hi)
        if not f_hi < 0.0:
            raise NumericalError(
                f"no sign change of the Neumann shooting function on the lambda interval [0, {lam_hi:.6g}]")
        lo, hi = 0.0, lam_hi
        while hi - lo > 1e-10 * hi:
            mid = 0.5 * (lo + hi)
            if shoot(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        lam = 0.5 * (lo + hi)

    if interior is None:
        r_in, u_in, v_in = np.array([0.0]), np.array([0.0]), np.array([1.0])
        u_r, v_r = 0.0, 1.0
    else:
        u_r, v_r, r_in, u_in, v_in = interior.integrate(lam, keep=True)
    u_b, _ = _tail(u_r, v_r, lam, rb - R)
    if not u_b > 0.0:
        raise NumericalError("Neumann solution is not positive at the ball boundary")
    scale = rb / u_b

    spacing = max(1.0 / nodes, (rb - R) / 4096)
    n_tail = max(2, int(math.ceil((rb - R) / spacing)))
    r_out = np.linspace(R, rb, n_tail + 1)[1:]
    u_out, _ = _tail(u_r, v_r, lam, r_out - R)
    if np.any(u_in[1:] <= 0.0) or np.any(u_out <= 0.0):
        raise NumericalError(
            f"shooting converged to lambda = {lam:.6g} whose radial solution has an interior node; "
            "not the ground state")

    if interior is None:
        spline = CubicHermiteSpline([0.0, 1.0], [0.0, scale], [scale, scale])
    else:
        spline = CubicHermiteSpline(r_in, u_in * scale, v_in * scale)
    r_grid = np.concatenate([r_in, r_out])
    with np.errstate(divide="ignore", invalid="ignore"):
        f_vals = np.concatenate([[v_in[0] * scale], u_in[1:] * scale / r_in[1:], u_out * scale / r_out])
    f_vals[-1] = 1.0
    a = 0.0 if potential.is_zero else solve_zero_energy(potential, R + 1.0, nodes)
    return RadialScattering(
        N=float(N), ell=float(ell), r_grid=r_grid, f_values=f_vals, lambda_ell=float(lam),
        scattering_length=a, potential=potential, support=R,
        _spline=spline, _tail=(u_r * scale, v_r * scale, float(lam)))


def integral_Vf(scattering, potential):
    """4 pi int_0^R V(r) f(r) r^2 dr by composite Simpson on the RK4 nodes."""
    if potential != scattering.potential:
        raise ConfigError("potential does not match the one used to solve the scattering problem")
    if potential.is_zero:
        return 0.0
    total = 0.0
    for a, b, fn in potential.pieces():
        n = max(2, int(math.ceil((b - a) * 512)))
        n += n % 2
        r = np.linspace(a, b, n + 1)
        total += simpson(fn(r) * scattering.f(r) * r ** 2, x=r)
    return 4.0 * math.pi * total


def w_limit(r, a, ell):
    """Limiting correlation profile a [1/r - 3/(2 ell) + r^2/(2 ell^3)] for r < ell, 0 beyond.

    `r` is a distance |x| (scalar or array); r = 0 is rejected.
    """
    r = np.abs(np.asarray(r, dtype=float))
    if np.any(r == 0.0):
        raise ValueError("w_limit is singular at |x| = 0; use a cell-averaged evaluation there")
    inside = r < ell
    safe = np.where(inside, r, 1.0)
    return np.where(inside, a * (1.0 / safe - 1.5 / ell + safe ** 2 / (2.0 * ell ** 3)), 0.0)


def w_limit_derivative(r, a, ell):
    r = np.abs(np.asarray(r, dtype=float))
    if np.any(r == 0.0):
        raise ValueError("w_limit derivative is singular at |x| = 0")
    inside = r < ell
    safe = np.where(inside, r, 1.0)
    return np.where(inside, a * (-1.0 / safe ** 2 + safe / ell ** 3), 0.0)


@dataclass(frozen=True)
class ProfileDeviation:
    value: float
    derivative: float


def w_profile_deviation(scattering, x):
    """Weighted pointwise deviations |x| |N w(N x) - w_inf(x)| and
    |x|^2 |N^2 w'(N x) - w_inf'(x)| at distances x > 0."""
    x = np.abs(np.asarray(x, dtype=float))
    a, ell = scattering.scattering_length, scattering.ell
    d0 = x * np.abs(scattering.rescaled_w(x) - w_limit(x, a, ell))
    d1 = x ** 2 * np.abs(scattering.rescaled_dw(x) - w_limit_derivative(x, a, ell))
    return d0, d1


def compare_w_profiles(scattering, samples=4000):
    """Sup over R/N <= |x| <= ell of the weighted profile deviations."""
    if scattering.potential.is_zero:
        return ProfileDeviation(0.0, 0.0)
    lo = scattering.support / scattering.N
    x = np.unique(np.concatenate([np.geomspace(lo, scattering.ell, samples),
                                  np.linspace(lo, scattering.ell, samples)]))
    d0, d1 = w_profile_deviation(scattering, x)
    return ProfileDeviation(float(d0.max()), float(d1.max()))


def write_profile(path, scattering):
    """Two-column text (r, f) with a metadata header."""
    header = "\n".join([
        f"N = {scattering.N!r}",
        f"ell = {scattering.ell!r}",
        f"lambda_ell = {scattering.lambda_ell!r}",
        f"scattering_length = {scattering.scattering_length!r}",
        "r f",
    ])
    np.savetxt(path, np.column_stack([scattering.r_grid, scattering.f_values]), fmt="%.17g", header=header)


def read_profile(path):
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].partition("=")
            if sep:
                meta[key.strip()] = float(value)
    data = np.loadtxt(path, comments="#", ndmin=2)
    return meta, data[:, 0], data[:, 1]
