"""Limiting Gaussian variance for centred one-particle observables.

Given a bounded observable O and the limiting kernels at time t,

    h = gamma (q O phi) + sigma conj(q O phi),
    n = U h + conj(V) conj(h),
    f = cosh(tau) n + sinh(tau) conj(n),

and the fluctuation of O converges to a centred Gaussian of variance ||f||^2.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .formats import write_json
from .kernels import cosh_sinh, hyperbolic_series


@dataclass(frozen=True, eq=False)
class Observable:
    """Either multiplication by a grid function or sum_k |ket_k><bra_k|."""

    kind: str
    grid: object
    function: np.ndarray = None
    pairs: tuple = ()
    label: str = "O"

    def __post_init__(self):
        if self.kind == "multiplication":
            fn = np.asarray(self.function, dtype=complex)
            if fn.shape != self.grid.shape:
                raise ConfigError(f"observable function shape {fn.shape} does not match grid {self.grid.shape}")
            if not np.all(np.isfinite(fn)):
                raise ConfigError(f"observable {self.label!r} is unbounded: its function has non-finite values")
            object.__setattr__(self, "function", fn)
        elif self.kind == "finite_rank":
            if not self.pairs:
                raise ConfigError("a finite-rank observable needs at least one (bra, ket) pair")
            pairs = []
            for bra, ket in self.pairs:
                bra = np.asarray(bra, dtype=complex).reshape(self.grid.shape)
                ket = np.asarray(ket, dtype=complex).reshape(self.grid.shape)
                if not (np.all(np.isfinite(bra)) and np.all(np.isfinite(ket))):
                    raise ConfigError(f"observable {self.label!r} has non-finite rank-one data")
                pairs.append((bra, ket))
            object.__setattr__(self, "pairs", tuple(pairs))
        else:
            raise ConfigError(f"observable kind must be 'multiplication' or 'finite_rank', got {self.kind!r}")

    @classmethod
    def multiplication(cls, grid, function, label="O"):
        return cls("multiplication", grid, function=function, label=label)

    @classmethod
    def finite_rank(cls, grid, pairs, label="O"):
        return cls("finite_rank", grid, pairs=tuple(pairs), label=label)

    @property
    def norm_bound(self):
        if self.kind == "multiplication":
            return float(np.max(np.abs(self.function)))
        h3 = self.grid.h ** 3
        bras = np.stack([b.reshape(-1) for b, _ in self.pairs], axis=1)
        kets = np.stack([k.reshape(-1) for _, k in self.pairs], axis=1)
        gk = h3 * kets.conj().T @ kets
        gb = h3 * bras.conj().T @ bras
        return math.sqrt(max(0.0, float(np.max(np.linalg.eigvals(gk @ gb).real))))

    def apply(self, v):
        v = np.asarray(v, dtype=complex).reshape(self.grid.shape)
        if self.kind == "multiplication":
            return self.function * v
        out = np.zeros(self.grid.shape, dtype=complex)
        for bra, ket in self.pairs:
            out = out + self.grid.inner(bra, v) * ket
        return out

    def adjoint(self):
        if self.kind == "multiplication":
            return Observable.multiplication(self.grid, self.function.conj(), self.label)
        return Observable.finite_rank(self.grid, [(k, b) for b, k in self.pairs], self.label)

    def scaled(self, lam):
        if self.kind == "multiplication":
            return Observable.multiplication(self.grid, lam * self.function, self.label)
        return Observable.finite_rank(self.grid, [(b, lam * k) for b, k in self.pairs], self.label)


def observable_vector(obs, state, pack):
    """h = gamma v + sigma conj(v) with v = q (O phi), from limiting-flavor inputs."""
    if pack.flavor != "limiting" or state.flavor != "limiting":
        raise ConfigError("the observable vector uses the limiting field and kernels")
    if abs(pack.t - state.t) > 1e-12 * max(1.0, abs(state.t)):
        raise ConfigError(f"kernels at t = {pack.t} do not match the field at t = {state.t}")
    v = pack.projector @ obs.apply(state.values).reshape(-1)
    return pack.gamma @ v + pack.sigma @ v.conj()


@dataclass(frozen=True, eq=False)
class CltResult:
    h_inf: np.ndarray
    n: np.ndarray
    f: np.ndarray
    variance: float
    t: float


def _check_tau(tau, initial_field, h):
    asym = float(np.max(np.abs(tau - tau.T))) if tau.size else 0.0
    if asym > 1e-10:
        raise ConfigError(f"tau kernel is not symmetric (residual {asym:.3g})")
    if initial_field is not None:
        leak = h ** 3 * float(np.max(np.abs(np.asarray(initial_field).reshape(-1).conj() @ tau)))
        if leak > 1e-10:
            raise ConfigError(f"tau is not orthogonal to the initial condensate (residual {leak:.3g})")


def _tau_blocks(tau, n, tol):
    if tau is None or not np.any(tau):
        return np.eye(n, dtype=complex), np.zeros((n, n), dtype=complex)
    xp, ep = hyperbolic_series(tau, tol)
    return cosh_sinh(xp, ep)


def variance(h, theta, grid, tau=None, initial_field=None, tol=1e-14):
    """||f||^2 from the block formulas; tau is an operator matrix or None for zero."""
    h = np.asarray(h, dtype=complex).reshape(-1)
    if tau is not None:
        tau = np.asarray(tau, dtype=complex)
        _check_tau(tau, initial_field, grid.h)
    n_vec, _ = theta.apply(h, h.conj())
    ch, sh = _tau_blocks(tau, h.size, tol)
    f = ch @ n_vec + sh @ n_vec.conj()
    return CltResult(h, n_vec, f, grid.norm(f) ** 2, theta.t)


def variance_full(h, theta, grid, tau=None, tol=1e-14):
    """Same variance through the doubled-space matrices of Theta and of the tau flow."""
    h = np.asarray(h, dtype=complex).reshape(-1)
    ch, sh = _tau_blocks(None if tau is None else np.asarray(tau, dtype=complex), h.size, tol)
    pair = theta.full() @ np.concatenate([h, h.conj()])
    tau_full = np.block([[ch, sh], [sh.conj(), ch.conj()]])
    out = tau_full @ pair
    return grid.norm(out[:h.size]) ** 2


def separable_tau(grid, psi, lam, initial_field):
    """lam psi(x) psi(y) with psi first projected off the initial condensate."""
    phi = np.asarray(initial_field, dtype=complex).reshape(-1)
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    psi = psi - grid.h ** 3 * np.vdot(phi, psi) * phi
    return lam * grid.h ** 3 * np.outer(psi, psi)


def gaussian_prob(var, a, b):
    """P(G in [a, b]) for a centred Gaussian of variance `var`."""
    if a > b:
        raise ConfigError(f"interval end points out of order: {a} > {b}")
    if var < 0:
        raise ConfigError(f"variance must be non-negative, got {var}")
    if var == 0:
        return 1.0 if a <= 0.0 <= b else 0.0
    if a == b:
        return 0.0
    scale = math.sqrt(2.0 * var)
    return 0.5 * (math.erf(b / scale) - math.erf(a / scale))


def record(result, observable_id, intervals):
    return {
        "t": float(result.t),
        "observable_id": observable_id,
        "variance": float(result.variance),
        "prob_intervals": [{"a": float(a), "b": float(b), "probability": gaussian_prob(result.variance, a, b)}
                           for a, b in intervals],
    }


def write_records(path, records):
    write_json(path, {"records": list(records)})
