"""One-particle Bogoliubov flow Theta = (U, V) of a quadratic generator.

Theta acts on pairs (f, g) as [[U, conj V], [V, conj U]], where conj M is
the entrywise conjugate matrix (J M J with J complex conjugation).  It
solves d/dt Theta(t, s) = i Theta(t, s) A(t) with

    A = [[D, -conj(B)], [B, -conj(D)]],   D = -Delta + m + G,  B = 2 conj(H),

so only the first block column X = [U; V] is integrated:

    dX/dt = i (X D + conj([V; U]) B).

Because the generator multiplies from the right, Theta(t2, t0) equals
Theta(t1, t0) Theta(t2, t1).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ToleranceError
from .formats import write_binary, write_csv
from .generator import assemble_blocks, assemble_blocks_limit
from .gpe import mean_field, time_derivative
from .kernels import build_kernels, circulant_op, eta_dot


@dataclass(frozen=True, eq=False)
class BlockGenerator:
    diag: np.ndarray
    offdiag: np.ndarray
    t: float
    flavor: str

    def residuals(self):
        return {
            "hermiticity_diag": float(np.max(np.abs(self.diag - self.diag.conj().T))),
            "symmetry_offdiag": float(np.max(np.abs(self.offdiag - self.offdiag.T))),
        }

    def full(self):
        return np.block([[self.diag, -self.offdiag.conj()], [self.offdiag, -self.diag.conj()]])

    def s_hermiticity(self):
        n = self.diag.shape[0]
        s = np.concatenate([np.ones(n), -np.ones(n)])
        sa = s[:, None] * self.full()
        return float(np.max(np.abs(sa - sa.conj().T)))

    def apply(self, f, g):
        """A applied to the pair (f, g) as a column vector."""
        return (self.diag @ f - self.offdiag.conj() @ g, self.offdiag @ f - self.diag.conj() @ g)


def build_A(blocks, state, coupling):
    """Block generator from assembled G, H, the field and its mean-field coupling
    (an EffectiveInteraction for the finite-N flavor, a scattering length for the limit)."""
    if abs(blocks.t - state.t) > 1e-12 * max(1.0, abs(state.t)):
        raise ConfigError(f"generator blocks at t = {blocks.t} are stale for the field at t = {state.t}")
    grid = state.grid
    m = mean_field(state, coupling).reshape(-1)
    diag = circulant_op(grid.p_squared(), grid) + np.diag(m) + blocks.G
    return BlockGenerator(diag.astype(complex), 2.0 * blocks.H.conj(), state.t, blocks.flavor)


def generator_at(trajectory, scattering, coupling, s_nodes=8, tol=1e-12):
    """Builder t -> BlockGenerator from a precomputed condensate trajectory."""

    def build(t):
        state = trajectory.at(t)
        pack = build_kernels(state, scattering, tol=tol)
        ed = eta_dot(pack, state, time_derivative(state, coupling))
        if state.flavor == "modified":
            blocks = assemble_blocks(pack, state, scattering, ed, s_nodes, interaction=coupling)
        else:
            blocks = assemble_blocks_limit(pack, state, scattering.scattering_length, scattering.ell, ed,
                                           s_nodes)
        return build_A(blocks, state, coupling)

    return build


class LatticeProvider:
    """Generator values on a uniform time lattice, cubic Hermite (Catmull-Rom)
    interpolation in between.  Lattice points are built on demand and cached,
    so one provider can serve several propagations over the same window."""

    def __init__(self, build, t0, t1, spacing):
        if not spacing > 0:
            raise ConfigError(f"lattice spacing must be positive, got {spacing}")
        self.build = build
        self.t0 = float(t0)
        self.count = max(1, int(math.ceil((t1 - t0) / spacing - 1e-9)))
        self.spacing = (t1 - t0) / self.count if t1 > t0 else spacing
        self.cache = {}

    def node(self, k):
        k = min(max(k, 0), self.count)
        if k not in self.cache:
            self.cache[k] = self.build(self.t0 + k * self.spacing)
        return self.cache[k]

    def _slope(self, k, attr):
        lo, hi = max(k - 1, 0), min(k + 1, self.count)
        return (getattr(self.node(hi), attr) - getattr(self.node(lo), attr)) / ((hi - lo) * self.spacing)

    def __call__(self, t):
        u = (t - self.t0) / self.spacing
        if u < -1e-9 or u > self.count + 1e-9:
            raise ConfigError(f"time {t} outside the generator window")
        k = min(max(int(math.floor(u)), 0), self.count - 1) if self.count else 0
        s = u - k
        if abs(s) < 1e-12:
            return self.node(k)
        if abs(s - 1.0) < 1e-12:
            return self.node(k + 1)
        a, b = self.node(k), self.node(k + 1)
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        out = {}
        for attr in ("diag", "offdiag"):
            out[attr] = (h00 * getattr(a, attr) + h01 * getattr(b, attr)
                         + self.spacing * (h10 * self._slope(k, attr) + h11 * self._slope(k + 1, attr)))
        return BlockGenerator(out["diag"], out["offdiag"], t, a.flavor)


class ExactProvider:
    """Generator rebuilt at every requested time, with memoisation."""

    def __init__(self, build):
        self.build = build
        self.cache = {}

    def __call__(self, t):
        key = round(t, 12)
        if key not in self.cache:
            self.cache[key] = self.build(t)
        return self.cache[key]


def symplectic_defect(U, V):
    """Operator norm of U^H U - V^H V - 1."""
    P = U.conj().T @ U - V.conj().T @ V
    P = 0.5 * (P + P.conj().T)
    return float(np.max(np.abs(np.linalg.eigvalsh(P) - 1.0)))


def reality_defect(U, V):
    """Operator norm of U^H conj(V) - V^H conj(U)."""
    return float(np.linalg.norm(U.conj().T @ V.conj() - V.conj().T @ U.conj(), 2))


def s_defect(U, V):
    """Operator norm of Theta^H S Theta - S on the doubled space."""
    th = theta_matrix(U, V)
    n = U.shape[0]
    s = np.concatenate([np.ones(n), -np.ones(n)])
    D = th.conj().T @ (s[:, None] * th) - np.diag(s)
    D = 0.5 * (D + D.conj().T)
    return float(np.max(np.abs(np.linalg.eigvalsh(D))))


def theta_matrix(U, V):
    return np.block([[U, V.conj()], [V, U.conj()]])


@dataclass(frozen=True, eq=False)
class ThetaPropagator:
    U: np.ndarray
    V: np.ndarray
    t: float
    s: float
    symplectic_defect: float
    defect_S: float
    history: tuple = field(default=(), repr=False)
    corrected: bool = False
    checkpoints: dict = field(default_factory=dict, repr=False)

    def full(self):
        return theta_matrix(self.U, self.V)

    def apply(self, f, g):
        """Theta (f, g) = (U f + conj(V) g, V f + conj(U) g)."""
        return self.U @ f + self.V.conj() @ g, self.V @ f + self.U.conj() @ g

    def reality_residual(self):
        """|Theta J - J Theta| for the reconstructed matrix; J swaps the legs and conjugates."""
        th = self.full()
        n = self.U.shape[0]
        swap = np.block([[np.zeros((n, n)), np.eye(n)], [np.eye(n), np.zeros((n, n))]])
        return float(np.max(np.abs(swap @ th.conj() - th @ swap)))

    def defect_rows(self):
        return [(t, d, ds) for t, d, ds in self.history]

    def write_defects(self, path):
        write_csv(path, ("t", "defect_symplectic", "defect_S"), self.defect_rows())

    def export(self, path_prefix, grid):
        meta = {"M": grid.M, "L": grid.L, "t": float(self.t), "s": float(self.s)}
        write_binary(f"{path_prefix}_U.bin", "operator", dict(meta, name="U"), self.U)
        write_binary(f"{path_prefix}_V.bin", "operator", dict(meta, name="V"), self.V)


def identity_theta(n, t):
    return ThetaPropagator(np.eye(n, dtype=complex), np.zeros((n, n), dtype=complex), t, t, 0.0, 0.0,
                           ((t, 0.0, 0.0),))


def compose(first, second):
    """Theta(t2, t0) from first = Theta(t1, t0) and second = Theta(t2, t1)."""
    if abs(first.t - second.s) > 1e-12 * max(1.0, abs(first.t)):
        raise ConfigError("propagators do not share the intermediate time")
    U = first.U @ second.U + first.V.conj() @ second.V
    V = first.V @ second.U + first.U.conj() @ second.V
    return ThetaPropagator(U, V, second.t, first.s, symplectic_defect(U, V), s_defect(U, V))


def _rhs(X, gen, n):
    swapped = np.concatenate([X[n:], X[:n]]).conj()
    return 1j * (X @ gen.diag + swapped @ gen.offdiag)


def propagate_theta(t0, t1, dt, provider, tol=1e-6, polar=False, record_every=25, checkpoints=()):
    """Classical RK4 for Theta(t, t0) from t0 to t1.

    After every step the symplectic defect is bounded by the Frobenius norm of
    U^H U - V^H V - 1; the exact operator norm is evaluated when the bound
    exceeds `tol`, at record points and at the end.  With `polar` the columns
    are renormalised by (U^H U - V^H V)^(-1/2) after each step.
    """
    if t1 < t0:
        raise ConfigError(f"final time {t1} precedes initial time {t0}")
    if not dt > 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    first = provider(t0)
    n = first.diag.shape[0]
    if t1 == t0:
        return identity_theta(n, t0)
    steps = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / steps
    X = np.concatenate([np.eye(n, dtype=complex), np.zeros((n, n), dtype=complex)])
    history = [(t0, 0.0, 0.0)]
    marks = {int(round((c - t0) / h)): c for c in checkpoints}
    saved = {}
    eye = np.eye(n)
    for i in range(steps):
        t = t0 + i * h
        g0, gm, g1 = provider(t), provider(t + 0.5 * h), provider(t + h)
        k1 = _rhs(X, g0, n)
        k2 = _rhs(X + 0.5 * h * k1, gm, n)
        k3 = _rhs(X + 0.5 * h * k2, gm, n)
        k4 = _rhs(X + h * k3, g1, n)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        U, V = X[:n], X[n:]
        P = X.conj().T @ np.concatenate([U, -V])
        if polar:
            w, Q = np.linalg.eigh(0.5 * (P + P.conj().T))
            if np.min(w) <= 0.0:
                raise NumericalError("symplectic form lost positivity; the step is far too large")
            X = X @ (Q * w ** -0.5) @ Q.conj().T
            U, V = X[:n], X[n:]
        else:
            bound = float(np.linalg.norm(P - eye))
            if bound > tol:
                exact = symplectic_defect(U, V)
                if exact > tol:
                    raise ToleranceError(
                        f"symplectic defect {exact:.3g} at t = {t + h:.6g} exceeds {tol:g}; use a smaller dt")
        done = i + 1
        if done == steps or (record_every and done % record_every == 0):
            history.append((t0 + done * h, symplectic_defect(U, V), s_defect(U, V)))
        if done in marks:
            saved[marks[done]] = (U.copy(), V.copy())
    U, V = X[:n], X[n:]
    return ThetaPropagator(U.copy(), V.copy(), t1, t0, history[-1][1], history[-1][2], tuple(history),
                           polar, saved)


def checkpoint(theta, t):
    """Theta(t, s) stored during propagation."""
    try:
        U, V = theta.checkpoints[t]
    except KeyError:
        raise ConfigError(f"no checkpoint at t = {t}") from None
    return ThetaPropagator(U, V, t, theta.s, symplectic_defect(U, V), s_defect(U, V))
