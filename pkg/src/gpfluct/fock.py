"""Exact checks on a truncated bosonic Fock space with a fixed particle budget.

Modes i = 0..m-1 stand for an orthonormal set of excitation directions.
The space holds every occupation tuple with total occupation <= N.  Ladder
operators are stored sparse; exponentials are taken on dense copies.

Vectors f in mode space enter antilinearly in annihilators:
a(f) = sum conj(f_i) a_i and a*(f) = sum f_i a*_i, likewise for b.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import ConfigError, NumericalError
from .formats import write_csv
from .kernels import cosh_sinh, hyperbolic_series

MAX_DIMENSION = 20000


def fock_dimension(m, N):
    return math.comb(N + m, m)


@dataclass(frozen=True, eq=False)
class FockSpace:
    m: int
    N: int
    basis: tuple
    index: dict = field(repr=False)
    a: tuple = field(repr=False)
    number: np.ndarray = field(repr=False)
    b: tuple = field(repr=False)

    @property
    def dimension(self):
        return len(self.basis)

    def number_op(self):
        return sp.diags(self.number.astype(complex)).tocsr()

    def number_fn(self, fn):
        """Diagonal operator fn(N_op)."""
        return sp.diags(np.asarray([fn(n) for n in self.number], dtype=complex)).tocsr()

    def vacuum(self):
        v = np.zeros(self.dimension, dtype=complex)
        v[self.index[(0,) * self.m]] = 1.0
        return v

    def _mode_vector(self, f):
        f = np.asarray(f, dtype=complex).reshape(-1)
        if f.shape != (self.m,):
            raise ConfigError(f"mode vector has {f.size} entries, the space has {self.m} modes")
        return f

    def a_of(self, f):
        f = self._mode_vector(f)
        return sum(np.conj(f[i]) * self.a[i] for i in range(self.m))

    def a_star(self, f):
        return self.a_of(f).conj().T.tocsr()

    def b_of(self, f):
        f = self._mode_vector(f)
        return sum(np.conj(f[i]) * self.b[i] for i in range(self.m))

    def b_star(self, f):
        return self.b_of(f).conj().T.tocsr()

    def occupation_weight(self, xi, power):
        """||(N_op + 1)^power xi||."""
        return float(np.linalg.norm((self.number + 1.0) ** power * xi))

    def expect(self, xi, diag_values):
        return float(np.real(np.vdot(xi, diag_values * xi)))


def build_space(m, N, ordering="root_after"):
    """Basis, a_i and b_i = sqrt(N - N_op) a_i / sqrt(N).

    With `ordering="root_after"` the root acts after a_i (it sees the
    lowered occupation); "root_before" applies it first and is kept only to
    show that this ordering breaks the commutator identities.
    """
    if m < 1 or N < 1:
        raise ConfigError(f"need at least one mode and N >= 1, got m = {m}, N = {N}")
    dim = fock_dimension(m, N)
    if dim > MAX_DIMENSION:
        raise ConfigError(f"Fock dimension {dim} for m = {m}, N = {N} exceeds the guard {MAX_DIMENSION}")
    if ordering not in ("root_after", "root_before"):
        raise ConfigError(f"unknown ordering {ordering!r}")
    basis = tuple(sorted((occ for total in range(N + 1) for occ in _compositions(total, m)),
                         key=lambda occ: (sum(occ), tuple(-x for x in occ))))
    index = {occ: k for k, occ in enumerate(basis)}
    number = np.array([sum(occ) for occ in basis], dtype=float)
    a_ops = []
    for i in range(m):
        rows, cols, vals = [], [], []
        for k, occ in enumerate(basis):
            if occ[i]:
                lowered = occ[:i] + (occ[i] - 1,) + occ[i + 1:]
                rows.append(index[lowered])
                cols.append(k)
                vals.append(math.sqrt(occ[i]))
        a_ops.append(sp.csr_matrix((np.asarray(vals, dtype=complex), (rows, cols)), shape=(dim, dim)))
    root = sp.diags(np.sqrt(np.maximum(N - number, 0.0)) / math.sqrt(N)).tocsr()
    if ordering == "root_after":
        b_ops = tuple((root @ a).tocsr() for a in a_ops)
    else:
        b_ops = tuple((a @ root).tocsr() for a in a_ops)
    return FockSpace(m, N, basis, index, tuple(a_ops), number, b_ops)


def _compositions(total, m):
    for cuts in itertools.combinations(range(total + m - 1), m - 1):
        parts, prev = [], -1
        for c in cuts + (total + m - 1,):
            parts.append(c - prev - 1)
            prev = c
        yield tuple(parts)


def _maxabs(op):
    op = op.tocoo() if sp.issparse(op) else sp.coo_matrix(op)
    return float(np.max(np.abs(op.data))) if op.nnz else 0.0


def verify_b_algebra(space, f, g):
    """Largest entry of the residuals of

        [b(f), b*(g)] = (1 - N_op/N) <f, g> - a*(g) a(f) / N,
        [b(f), b(g)] = 0.
    """
    f = space._mode_vector(f)
    g = space._mode_vector(g)
    bf, bg = space.b_of(f), space.b_of(g)
    bsg = space.b_star(g)
    scalar = space.number_fn(lambda n: 1.0 - n / space.N) * np.vdot(f, g)
    mixed = space.a_star(g) @ space.a_of(f) / space.N
    ccr = bf @ bsg - bsg @ bf - (scalar - mixed)
    both = bf @ bg - bg @ bf
    return max(_maxabs(ccr), _maxabs(both))


def pair_generator(space, eta):
    """B = 1/2 sum (eta_ij b*_i b*_j - conj(eta_ij) b_i b_j) as a sparse matrix."""
    eta = np.asarray(eta, dtype=complex)
    if eta.shape != (space.m, space.m):
        raise ConfigError(f"pair kernel must be {space.m}x{space.m}, got {eta.shape}")
    asym = float(np.max(np.abs(eta - eta.T)))
    if asym > 1e-12:
        raise ConfigError(f"pair kernel is not symmetric (residual {asym:.3g})")
    bstar = [b.conj().T.tocsr() for b in space.b]
    dim = space.dimension
    create = sp.csr_matrix((dim, dim), dtype=complex)
    for i, j in itertools.product(range(space.m), repeat=2):
        if eta[i, j] != 0:
            create = create + eta[i, j] * (bstar[i] @ bstar[j])
    create = 0.5 * create
    return (create - create.conj().T).tocsr()


def bogoliubov_exp(space, eta, tol=1e-10):
    """Dense unitary e^B for a symmetric pair kernel with ||eta||_HS <= 1."""
    eta = np.asarray(eta, dtype=complex)
    norm = float(np.linalg.norm(eta))
    if norm > 1.0:
        raise ConfigError(f"pair kernel norm {norm:.6g} exceeds 1")
    B = pair_generator(space, eta)
    E = scipy.linalg.expm(B.toarray())
    _check_unitary(E, tol, "e^B")
    return E


def _check_unitary(E, tol, label):
    res = float(np.max(np.abs(E.conj().T @ E - np.eye(E.shape[0]))))
    if res > tol:
        raise NumericalError(f"{label} unitarity residual {res:.3g} exceeds {tol:g}")
    return res


def mode_cosh_sinh(eta, tol=1e-15):
    """gamma = cosh(eta), sigma = sinh(eta) on m x m matrices with alternating conjugation."""
    xp, ep = hyperbolic_series(np.asarray(eta, dtype=complex), tol)
    return cosh_sinh(xp, ep)


def hyperbolic_identity_residual(gamma, sigma):
    return float(np.max(np.abs(gamma @ gamma - sigma @ sigma.conj() - np.eye(gamma.shape[0]))))


def d_operator(space, eta, f, expB=None):
    """d(f) = e^{-B} b(f) e^{B} - b(gamma f) - b*(sigma conj f) as a dense matrix."""
    eta = np.asarray(eta, dtype=complex)
    f = space._mode_vector(f)
    if expB is None:
        expB = bogoliubov_exp(space, eta)
    gamma, sigma = mode_cosh_sinh(eta)
    conjugated = expB.conj().T @ (space.b_of(f) @ expB)
    linear = space.b_of(gamma @ f) + space.b_star(sigma @ f.conj())
    return conjugated - linear.toarray()


def d_defect(space, eta, f, xi, expB=None):
    """||d(f) xi|| for a normalized xi."""
    xi = np.asarray(xi, dtype=complex)
    if abs(np.linalg.norm(xi) - 1.0) > 1e-10:
        raise ConfigError("the test vector must be normalized")
    return float(np.linalg.norm(d_operator(space, eta, f, expB) @ xi))


def growth_ratio(space, expB, power, xi=None):
    """<e^B xi, (N_op+1)^power e^B xi> / <xi, (N_op+1)^power xi>, xi = vacuum by default."""
    xi = space.vacuum() if xi is None else np.asarray(xi, dtype=complex)
    weight = (space.number + 1.0) ** power
    return space.expect(expB @ xi, weight) / space.expect(xi, weight)


def cutoff(n, M, margin=10):
    """Piecewise-linear number cutoff: 1 up to M/2 + margin, 0 from M - margin.

    When the two plateaus overlap (M <= 4 margin) the plateau at 1 wins.
    """
    if n <= M / 2 + margin:
        return 1.0
    if n >= M - margin:
        return 0.0
    return 0.5 * ((4.0 * n - 3.0 * M) / (4.0 * margin - M) + 1.0)


@dataclass(frozen=True, eq=False)
class CubicPhase:
    generator: np.ndarray
    unitary: np.ndarray
    antisymmetry: float


def cubic_generator(space, nu, gamma, sigma, M_cutoff, margin=10):
    """A = cut(N_op)/sqrt(N) sum nu_xy b*_x b*_y [b(gamma_x) + b*(sigma_x)] - h.c."""
    if M_cutoff > space.N:
        raise ConfigError(f"cutoff M = {M_cutoff} exceeds N = {space.N}")
    nu, gamma, sigma = (np.asarray(x, dtype=complex) for x in (nu, gamma, sigma))
    m = space.m
    for name, x in (("nu", nu), ("gamma", gamma), ("sigma", sigma)):
        if x.shape != (m, m):
            raise ConfigError(f"{name} must be {m}x{m}, got {x.shape}")
    bstar = [b.conj().T.tocsr() for b in space.b]
    dim = space.dimension
    cubic = sp.csr_matrix((dim, dim), dtype=complex)
    for x in range(m):
        tail = space.b_of(gamma[:, x]) + space.b_star(sigma[:, x])
        pairs = sp.csr_matrix((dim, dim), dtype=complex)
        for y in range(m):
            if nu[x, y] != 0:
                pairs = pairs + nu[x, y] * (bstar[x] @ bstar[y])
        cubic = cubic + pairs @ tail
    cut = space.number_fn(lambda n: cutoff(n, M_cutoff, margin))
    half = (cut @ cubic) / math.sqrt(space.N)
    return (half - half.conj().T).toarray()


def cubic_phase(space, nu, gamma, sigma, M_cutoff, margin=10, tol=1e-10):
    A = cubic_generator(space, nu, gamma, sigma, M_cutoff, margin)
    anti = float(np.max(np.abs(A + A.conj().T)))
    if anti > 1e-12:
        raise NumericalError(f"cubic generator antisymmetry residual {anti:.3g}")
    E = scipy.linalg.expm(A)
    _check_unitary(E, tol, "e^A")
    return CubicPhase(A, E, anti)


def _weyl_value(space, f, s):
    a = space.a_of(f)
    field_op = (a + a.conj().T).toarray()
    vac = space.vacuum()
    return complex(np.vdot(vac, scipy.linalg.expm(1j * s * field_op) @ vac))


def weyl_check(space, f, s, drift_tol=1e-6):
    """<Omega, exp(i s (a(f) + a*(f))) Omega>, guarded against truncation effects.

    The value is recomputed with two more particles; a change above
    `drift_tol` means the truncation is too small.  Returns (value, exact).
    """
    f = space._mode_vector(f)
    value = _weyl_value(space, f, s)
    wider = build_space(space.m, space.N + 2)
    drift = abs(_weyl_value(wider, f, s) - value)
    if drift > drift_tol:
        raise NumericalError(
            f"Weyl expectation moves by {drift:.3g} when N goes from {space.N} to {space.N + 2}; "
            "increase N")
    exact = math.exp(-0.5 * s * s * float(np.vdot(f, f).real))
    return value, exact


def write_sweep(path, rows):
    """Rows of (N, m, quantity, value)."""
    write_csv(path, ("N", "m", "quantity", "value"), rows)
