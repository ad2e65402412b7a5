"""Quadratic generator blocks G (coefficient of b*_x b_y) and H (coefficient
of b*_x b*_y) and the scalar phase kappa.

All matrices are operator matrices in the orthonormal grid basis (see
kernels).  A quadratic form int F_x ... is turned into a matrix as follows,
with f_x(y) = f(y, x):

    int dx b*(F_x) b*(E_x)   ->  H += F E^T
    int dx b*(F_x) b(E_x)    ->  G += F E^H
    int dx b(F_x) b(E_x) + h.c.  ->  H += F E^T

and H is symmetrised at the end, since only its symmetric part enters the
form.  Every contribution carries a tag; `terms` selects which tags are
assembled.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .formats import write_binary, write_csv
from .gpe import build_interaction, radial_transform
from .kernels import (Core, circulant_op, corrected_hs, gradient_tables, hs, indicator_profile, op_norm, profile_table,
                      subgrid_correction, two_point)

TERMS = (
    "scattering_pair",      # N^3 lambda chi (or 3a/ell^3 chi) phi phi
    "laplacian_pair",       # w (Delta phi phi + phi Delta phi) / 2
    "gradient_pair",        # grad w . (grad phi phi - phi grad phi)
    "eta_dot",              # s-integral of eta_dot against gamma^(s), sigma^(s)
    "kinetic_p",            # b*(-Delta p_x) b_x + h.c.
    "kinetic_grad_p",       # b*(grad p_x) b(grad p_x) / 2 + h.c.
    "kinetic_mu",           # b*_x b*(-Delta mu_x) + h.c.
    "kinetic_p_eta",        # b*(-Delta p_x) b*(eta_x) + h.c.
    "kinetic_p_r",          # b*(p_x) b*(-Delta r_x) + h.c.
    "kinetic_r",            # b*_x b*(-Delta r_x) + h.c.
    "kinetic_grad_eta",     # b*(grad eta_x) b(grad eta_x) / 2 + h.c.
    "kinetic_eta_r",        # b*(eta_x) b(-Delta r_x) + h.c.
    "kinetic_grad_r",       # b*(grad r_x) b(grad r_x) / 2 + h.c.
    "potential_p",          # (Vf) phi phi [b*(p_x) b*_y + b*(gamma_x) b*(p_y)] / 2 + h.c.
    "potential_sigma",      # (Vf) phi phi [gamma sigma cross terms, b(sigma) b(sigma)] / 2 + h.c.
    "potential_mean",       # (Vf * |phi|^2)(x) [gamma gamma, sigma gamma, gamma sigma, sigma sigma]
    "potential_exchange",   # (Vf) phi conj(phi) [gamma gamma, sigma gamma, gamma sigma, sigma sigma]
    "mean_field",           # -(Vf * |phi|^2) on the projected diagonal
)


@dataclass(frozen=True, eq=False)
class GeneratorBlocks:
    G: np.ndarray
    H: np.ndarray
    flavor: str
    t: float
    grid: object
    mean_field: np.ndarray
    field: np.ndarray
    terms: tuple = TERMS
    antisymmetric_part: float = 0.0
    pair_coefficient: float = 0.0

    def residuals(self):
        h3 = self.grid.h ** 3
        phi = self.field
        gphi = self.G @ phi
        hphi = phi.conj() @ self.H
        return {
            "hermiticity_G": float(np.max(np.abs(self.G - self.G.conj().T))),
            "symmetry_H": float(np.max(np.abs(self.H - self.H.T))),
            "orthogonality_G": math.sqrt(h3 * float(np.vdot(gphi, gphi).real)),
            "orthogonality_H": math.sqrt(h3 * float(np.vdot(hphi, hphi).real)),
        }

    def norms(self):
        return {"G_op": op_norm(self.G), "H_hs": hs(self.H)}

    def export(self, path_prefix):
        g = self.grid
        meta = {"M": g.M, "L": g.L, "t": float(self.t), "flavor": self.flavor}
        write_binary(f"{path_prefix}_G.bin", "kernel", dict(meta, name="G"), self.G / g.h ** 3)
        write_binary(f"{path_prefix}_H.bin", "kernel", dict(meta, name="H"), self.H / g.h ** 3)


@dataclass(frozen=True, eq=False)
class _Couplings:
    pair_coefficient: float         # N^3 lambda_ell or 3 a / ell^3
    convolution: np.ndarray         # operator matrix of the (Vf) convolution
    mean_field: np.ndarray          # (Vf) * |phi|^2 on the grid, flattened


def _laplacian_op(grid):
    return circulant_op(grid.p_squared(), grid)


def _check_terms(terms):
    terms = TERMS if terms is None else tuple(terms)
    unknown = set(terms) - set(TERMS)
    if unknown:
        raise ConfigError(f"unknown generator terms {sorted(unknown)}")
    return terms


def _gauss_legendre(s_nodes):
    if not isinstance(s_nodes, (int, np.integer)) or s_nodes < 4:
        raise ConfigError(f"s_nodes must be an integer >= 4, got {s_nodes!r}")
    x, w = np.polynomial.legendre.leggauss(int(s_nodes))
    return 0.5 * (x + 1.0), 0.5 * w


def _assemble(pack, state, couplings, eta_dot_op, s_nodes, terms):
    if eta_dot_op is None:
        raise ConfigError("assembling the generator needs the eta time derivative")
    if abs(state.t - pack.t) > 1e-12 * max(1.0, abs(pack.t)):
        raise ConfigError(f"field time {state.t} does not match kernel time {pack.t}")
    terms = _check_terms(terms)
    nodes, weights = _gauss_legendre(s_nodes)
    grid = pack.grid
    n, h3 = grid.size, grid.h ** 3
    phi = pack.field
    values = phi.reshape(grid.shape)
    lap_phi = grid.laplacian(values).reshape(-1)
    grad_phi = grid.gradient(values).reshape(3, -1)
    G = np.zeros((n, n), dtype=complex)
    H = np.zeros((n, n), dtype=complex)
    on = set(terms)

    if "scattering_pair" in on:
        chi = two_point(profile_table(indicator_profile(pack.ell), grid), grid)
        H += h3 * couplings.pair_coefficient * chi * np.outer(phi, phi)

    pair = two_point(pack.pair_table, grid)
    if "laplacian_pair" in on:
        H += 0.5 * h3 * pair * (np.outer(lap_phi, phi) + np.outer(phi, lap_phi))

    if "gradient_pair" in on and not pack.profile.is_zero:
        grads = gradient_tables(pack.profile, grid)
        acc = np.zeros((n, n), dtype=complex)
        for j in range(3):
            acc += two_point(grads[j], grid) * (np.outer(grad_phi[j], phi) - np.outer(phi, grad_phi[j]))
        # diagonal: the bracket vanishes at x = y; its first-order part against grad w
        moment = pack.profile.cell_moment(grid.h)
        q_trace = phi * lap_phi - np.sum(grad_phi ** 2, axis=0)
        acc[np.diag_indices(n)] = q_trace * moment / 3.0
        H += h3 * acc

    if "eta_dot" in on:
        for s, w in zip(nodes, weights):
            gam, sig = pack.hyperbolic(s)
            H -= w * (gam @ eta_dot_op @ gam.T + sig @ eta_dot_op.conj() @ sig.T)
            cross = gam @ eta_dot_op @ sig.conj().T
            G -= 2.0 * w * (cross + cross.conj().T)

    kin = _laplacian_op(grid)
    p, r, mu, eta = pack.p, pack.r, pack.mu, pack.eta
    if "kinetic_p" in on:
        pk = p @ kin
        G += pk + pk.conj().T
    if "kinetic_grad_p" in on:
        G += p @ kin @ p.conj().T
    if "kinetic_mu" in on:
        H += (mu @ kin).T
    if "kinetic_p_eta" in on:
        H += p @ kin @ eta
    if "kinetic_p_r" in on:
        H += p @ kin @ r
    if "kinetic_r" in on:
        H += kin @ r
    if "kinetic_grad_eta" in on:
        G += eta @ kin @ eta.conj().T
    if "kinetic_eta_r" in on:
        er = eta @ kin @ r.conj().T
        G += er + er.conj().T
    if "kinetic_grad_r" in on:
        G += r @ kin @ r.conj().T

    gam, sig = pack.gamma, pack.sigma
    conv = couplings.convolution
    m = couplings.mean_field
    k1 = conv * np.outer(phi, phi)
    k4 = conv * np.outer(phi, phi.conj())
    if "potential_p" in on:
        H += 0.5 * (p @ k1 + gam @ k1 @ p.T)
    if "potential_sigma" in on:
        cross = gam @ k1 @ sig.conj().T
        G += cross + cross.conj().T
        H += 0.5 * sig @ k1.conj() @ sig.T
    if "potential_mean" in on:
        G += (gam * m) @ gam.conj().T + (sig * m) @ sig.conj().T
        H += (gam * m) @ sig
    if "potential_exchange" in on:
        G += gam @ k4 @ gam.conj().T + sig @ k4.conj() @ sig.conj().T
        H += gam @ k4 @ sig
    if "mean_field" in on:
        G -= np.diag(m).astype(complex)

    antisym = float(np.max(np.abs(H - H.T))) if n else 0.0
    H = 0.5 * (H + H.T)
    q = pack.projector
    G = q @ G @ q
    H = q @ H @ q.T
    return GeneratorBlocks(G=G, H=H, flavor=pack.flavor, t=pack.t, grid=grid, mean_field=m,
                           field=phi, terms=terms, antisymmetric_part=antisym,
                           pair_coefficient=couplings.pair_coefficient if "scattering_pair" in on else 0.0)


def finite_couplings(scattering, grid, state, interaction=None):
    if interaction is None:
        interaction = build_interaction(scattering, scattering.potential, grid)
    rho = np.abs(state.values) ** 2
    return _Couplings(
        pair_coefficient=scattering.N ** 3 * scattering.lambda_ell,
        convolution=circulant_op(interaction.fourier_values, grid),
        mean_field=interaction.convolve(rho).reshape(-1))


def limit_couplings(a, ell, grid, state):
    rho = np.abs(state.values) ** 2
    return _Couplings(
        pair_coefficient=3.0 * a / ell ** 3,
        convolution=8.0 * math.pi * a * np.eye(grid.size),
        mean_field=8.0 * math.pi * a * rho.reshape(-1))


def assemble_blocks(pack, state, scattering, eta_dot_op, s_nodes=8, interaction=None, terms=None):
    """Blocks of the finite-N generator from a finite_N kernel pack."""
    if pack.flavor != "finite_N" or state.flavor != "modified":
        raise ConfigError("assemble_blocks needs a finite_N pack and a modified-flavor field")
    couplings = finite_couplings(scattering, pack.grid, state, interaction)
    return _assemble(pack, state, couplings, eta_dot_op, s_nodes, terms)


def assemble_blocks_limit(pack, state, a, ell, eta_dot_op, s_nodes=8, terms=None):
    """Blocks of the limiting generator: contact couplings, w_inf and 3a/ell^3."""
    if pack.flavor != "limiting" or state.flavor != "limiting":
        raise ConfigError("assemble_blocks_limit needs a limiting pack and a limiting-flavor field")
    couplings = limit_couplings(a, ell, pack.grid, state)
    return _assemble(pack, state, couplings, eta_dot_op, s_nodes, terms)


def _hessian(grid, values):
    k = grid.wavenumbers.copy()
    k[grid.M // 2] = 0.0
    ks = [k[:, None, None], k[None, :, None], k[None, None, :]]
    fh = np.fft.fftn(values)
    out = np.empty((grid.size, 3, 3), dtype=complex)
    for j in range(3):
        for i in range(j, 3):
            d = np.fft.ifftn(-ks[i] * ks[j] * fh).reshape(-1)
            out[:, i, j] = d
            out[:, j, i] = d
    return out


def pair_cores(pack, state, phi_dot, blocks, zero_mode):
    """Near-diagonal parts of H living inside one cell.

    The first core collects the w-Laplacian, w-gradient and eta_dot terms and
    the mean-field and exchange terms acting on eta; the exchange convolution
    is replaced by its zero mode times the profile, which is exact for the
    contact coupling.  The second is the indicator pair term.
    """
    grid = pack.grid
    phi = pack.field
    values = phi.reshape(grid.shape)
    lap = grid.laplacian(values).reshape(-1)
    grad = grid.gradient(values).reshape(3, -1)
    dphi = np.asarray(phi_dot).reshape(-1)
    radial = phi * lap + 2.0 * phi * dphi - (blocks.mean_field + zero_mode * np.abs(phi) ** 2) * phi ** 2
    angular = phi[:, None, None] * _hessian(grid, values) - np.einsum("jx,kx->xjk", grad, grad)
    return (Core(pack.profile, radial, angular),
            Core(indicator_profile(pack.ell), blocks.pair_coefficient * phi ** 2))


def corrected_H_hs(blocks, cores):
    """HS norm of H with the exact cell integrals of its near-diagonal cores."""
    return corrected_hs(blocks.H, [(1.0, c) for c in cores], blocks.grid.h)


@dataclass(frozen=True)
class BlockDistance:
    G_op: float
    H_hs_grid: float
    H_hs: float


def block_distance(blocks_n, blocks_lim, cores_n=(), cores_lim=()):
    """Operator-norm distance of G and HS distance of H; with cores given the
    HS distance includes the sub-grid correction of the diagonal cells."""
    if blocks_n.grid != blocks_lim.grid:
        raise ConfigError("generator blocks live on different grids")
    d_h = hs(blocks_n.H - blocks_lim.H)
    cont = d_h
    signed = [(1.0, c) for c in cores_n] + [(-1.0, c) for c in cores_lim]
    if signed:
        corr = subgrid_correction(signed, blocks_n.grid.h)
        cont = math.sqrt(max(d_h * d_h + corr, 0.0))
    return BlockDistance(op_norm(blocks_n.G - blocks_lim.G), d_h, cont)


# kappa

def _radial_symbol(fn, pieces, grid, N):
    p2 = grid.p_squared()
    uniq, inverse = np.unique(p2, return_inverse=True)
    vals = radial_transform(fn, pieces, np.sqrt(uniq) / N)
    return vals[inverse].reshape(grid.shape)


@dataclass(frozen=True)
class KappaValue:
    t: float
    value: float
    imag_residue: float
    groups: dict


def kappa(pack, state, scattering, eta_dot_op, interaction=None, s_nodes=8, pairing="real"):
    """Scalar phase kappa_N(t) summed from its eight groups.

    `pairing` chooses how "X + h.c." groups are formed: "real" uses 2 Re X,
    "sum" adds X and conj(X) separately.
    """
    if pack.flavor != "finite_N":
        raise ConfigError("kappa is defined for the finite-N pack")
    if abs(state.t - pack.t) > 1e-12 * max(1.0, abs(pack.t)):
        raise ConfigError(f"field time {state.t} does not match kernel time {pack.t}")
    if pairing not in ("real", "sum"):
        raise ConfigError(f"pairing must be 'real' or 'sum', got {pairing!r}")
    nodes, weights = _gauss_legendre(s_nodes)
    grid = pack.grid
    h3 = grid.h ** 3
    potential = scattering.potential
    N = scattering.N
    groups = {name: 0.0 for name in (
        "self_energy", "mean_field_energy", "pair_overlap", "sigma_mean", "sigma_exchange",
        "sigma_gamma", "kinetic_sigma", "eta_dot")}
    if potential.is_zero:
        return KappaValue(pack.t, 0.0, 0.0, groups)
    if interaction is None:
        interaction = build_interaction(scattering, potential, grid)
    pieces = potential.pieces()
    spans = [(a, b) for a, b, _ in pieces]

    def piecewise(weight):
        def fn(r):
            out = np.zeros_like(r)
            for a, b, v in pieces:
                sel = (r >= a) & (r <= b)
                out[sel] = v(r[sel]) * weight(r[sel])
            return out
        return fn

    def pair_sum(x):
        return x + x.conj() if pairing == "sum" else 2.0 * x.real

    phi = pack.field
    rho = np.abs(state.values) ** 2
    v_one_minus_2f = _radial_symbol(piecewise(lambda r: 1.0 - 2.0 * scattering.f(r)), spans, grid, N)
    v_plain = _radial_symbol(piecewise(np.ones_like), spans, grid, N)
    m = interaction.convolve(rho)
    conv_t = np.fft.ifftn(v_one_minus_2f * np.fft.fftn(rho)).real
    groups["self_energy"] = 0.5 * N * h3 * float(np.sum(rho * conv_t))
    groups["mean_field_energy"] = -0.5 * h3 * float(np.sum(rho * m))

    gam, sig = pack.gamma, pack.sigma
    overlap = gam.conj().T @ sig
    c2 = circulant_op(v_plain / N, grid)
    groups["pair_overlap"] = 0.5 / h3 * np.sum(c2 * np.abs(overlap.T) ** 2)
    ss = sig.conj().T @ sig
    groups["sigma_mean"] = np.sum(m.reshape(-1) * np.diag(ss))
    k4 = circulant_op(interaction.fourier_values, grid) * np.outer(phi, phi.conj())
    groups["sigma_exchange"] = np.sum(k4 * ss)
    cv = circulant_op(v_plain, grid) * np.outer(phi, phi)
    groups["sigma_gamma"] = pair_sum(0.5 * np.sum(cv * (sig.conj().T @ gam)))
    groups["kinetic_sigma"] = np.trace(sig.conj().T @ _laplacian_op(grid) @ sig)
    acc = 0.0
    for s, w in zip(nodes, weights):
        g_s, s_s = pack.hyperbolic(s)
        acc += w * np.sum(eta_dot_op * (s_s.conj().T @ g_s))
    groups["eta_dot"] = -pair_sum(acc)
    total = sum(complex(v) for v in groups.values())
    residue = abs(total.imag)
    if residue > 1e-6 * max(abs(total.real), 1e-300):
        raise NumericalError(f"kappa has imaginary residue {residue:.3g}; Hermitian pairing is broken")
    return KappaValue(pack.t, total.real, residue, {k: complex(v).real for k, v in groups.items()})


@dataclass
class PhaseTrace:
    samples: list = field(default_factory=list)

    def add(self, value):
        self.samples.append(value)

    def cumulative(self):
        out, acc = [], 0.0
        for i, s in enumerate(self.samples):
            if i:
                prev = self.samples[i - 1]
                acc += 0.5 * (s.t - prev.t) * (s.value + prev.value)
            out.append(acc)
        return out

    def write_csv(self, path):
        rows = [(s.t, s.value, s.imag_residue, c) for s, c in zip(self.samples, self.cumulative())]
        write_csv(path, ("t", "kappa", "kappa_imag_residue", "cumulative_integral"), rows)
