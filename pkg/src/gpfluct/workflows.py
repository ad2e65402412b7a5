"""Pipelines shared by the command line and the acceptance suite.

Each function takes a validated RunConfig and returns plain records; file
output stays in the command-line layer.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fock
from .bogoliubov import LatticeProvider, generator_at, propagate_theta
from .clt import Observable, observable_vector, record, separable_tau, variance
from .errors import ConfigError
from .fitting import fit_power_law
from .formats import read_binary
from .generator import (PhaseTrace, assemble_blocks, assemble_blocks_limit, block_distance, kappa,
                        pair_cores)
from .gpe import (Grid, build_interaction, evolve, gp_energy, mass_outside, smooth_datum,
                  time_derivative)
from .kernels import build_kernels, eta_dot, kernel_distance
from .scattering import compare_w_profiles, integral_Vf, solve_neumann, solve_zero_energy


def grid_of(cfg):
    return Grid(cfg["grid"]["L"], cfg["grid"]["M"])


def initial_state(cfg, grid=None, flavor="limiting"):
    f = cfg["field"]
    return smooth_datum(grid or grid_of(cfg), seed=f["seed"], max_mode=f["max_mode"],
                        amplitude=f["amplitude"], flavor=flavor)


def scattering_at(cfg, N):
    return solve_neumann(cfg.potential(), N, cfg["physics"]["ell"])


def scattering_record(cfg, N):
    pot = cfg.potential()
    s = scattering_at(cfg, N)
    a0 = solve_zero_energy(pot, 2.0 * pot.support + 1.0)
    ell = s.ell
    vf = integral_Vf(s, pot)
    dev = compare_w_profiles(s)
    target = 3.0 * a0 / (ell * N) ** 3
    return {
        "N": N,
        "ell": ell,
        "scattering_length": a0,
        "lambda_ell": s.lambda_ell,
        "lambda_ratio": s.lambda_ell / target if target > 0 else (1.0 if s.lambda_ell == 0 else math.inf),
        "integral_Vf": vf,
        "integral_Vf_residual": abs(vf - 8.0 * math.pi * a0),
        "w_deviation": dev.value,
        "w_derivative_deviation": dev.derivative,
        "f_min": float(np.min(s.f_values)),
        "f_max": float(np.max(s.f_values)),
        "f_boundary": float(s.f(s.radius)),
    }


# fields


@dataclass(frozen=True, eq=False)
class FieldPair:
    scattering: object
    interaction: object
    limiting: object
    modified: object


def sample_times(t_end, spacing):
    count = max(1, int(math.ceil(t_end / spacing - 1e-9)))
    return [t_end * i / count for i in range(1, count + 1)]


def field_pair(cfg, N, t_end, grid=None, samples=None):
    """Limiting and modified trajectories of the configured datum."""
    grid = grid or grid_of(cfg)
    s = scattering_at(cfg, N)
    inter = build_interaction(s, cfg.potential(), grid)
    start = initial_state(cfg, grid)
    dt = cfg["physics"]["dt"]
    lim = evolve(start, s.scattering_length, t_end, dt, samples)
    mod = evolve(start.with_flavor("modified"), inter, t_end, dt, samples)
    return FieldPair(s, inter, lim, mod)


def field_distance(cfg, N, spacing=0.05):
    """max over sampled t <= t_end of ||phi_t - phi~_t||."""
    t_end = cfg["physics"]["t_end"]
    pair = field_pair(cfg, N, t_end, samples=sample_times(t_end, spacing))
    g = pair.limiting.final.grid
    return max(g.norm(a.values - b.values) for a, b in zip(pair.limiting.states, pair.modified.states))


def gpe_records(cfg, spacing=0.05):
    """Conservation trace of the limiting flow plus the flavor distance per N."""
    p = cfg["physics"]
    grid = grid_of(cfg)
    a = solve_zero_energy(cfg.potential(), 2.0 * cfg.potential().support + 1.0)
    start = initial_state(cfg, grid)
    traj = evolve(start, a, p["t_end"], p["dt"], sample_times(p["t_end"], spacing) if p["t_end"] > 0 else None)
    e0 = gp_energy(start, a)
    trace = [{"t": st.t, "norm": st.norm, "energy": gp_energy(st, a),
              "energy_drift": abs(gp_energy(st, a) - e0) / abs(e0)} for st in traj.states]
    return {
        "trace": trace,
        "mass_drift": max(abs(r["norm"] - 1.0) for r in trace),
        "energy_drift": max(r["energy_drift"] for r in trace),
        "mass_outside_quarter_box": mass_outside(start, grid.L / 4.0),
    }


# kernels and generators


@dataclass(frozen=True, eq=False)
class KernelSet:
    scattering: object
    interaction: object
    modified: object
    limiting: object
    pack_n: object
    pack_l: object


def kernel_set(cfg, N, t=None):
    k = cfg["kernels"]
    t = k["t"] if t is None else t
    pair = field_pair(cfg, N, t)
    s = pair.scattering
    mod, lim = pair.modified.final, pair.limiting.final
    pn = build_kernels(mod, s, tol=k["tol"], nodes=k["nodes"])
    pl = build_kernels(lim, s, tol=k["tol"], nodes=k["nodes"])
    return KernelSet(s, pair.interaction, mod, lim, pn, pl)


def kernel_report(cfg, N):
    ks = kernel_set(cfg, N)
    dist = kernel_distance(ks.pack_n, ks.pack_l)
    return ks, dist


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    kernels: KernelSet
    blocks_n: object
    blocks_l: object
    cores_n: tuple
    cores_l: tuple
    eta_dot_n: object

    def distance(self):
        return block_distance(self.blocks_n, self.blocks_l, self.cores_n, self.cores_l)


def generator_set(cfg, N, ks=None):
    ks = ks or kernel_set(cfg, N)
    s_nodes = cfg["kernels"]["s_nodes"]
    s, a = ks.scattering, ks.scattering.scattering_length
    dn = time_derivative(ks.modified, ks.interaction)
    dl = time_derivative(ks.limiting, a)
    en = eta_dot(ks.pack_n, ks.modified, dn)
    el = eta_dot(ks.pack_l, ks.limiting, dl)
    bn = assemble_blocks(ks.pack_n, ks.modified, s, en, s_nodes, interaction=ks.interaction)
    bl = assemble_blocks_limit(ks.pack_l, ks.limiting, a, s.ell, el, s_nodes)
    cn = pair_cores(ks.pack_n, ks.modified, dn, bn, ks.interaction.zero_mode)
    cl = pair_cores(ks.pack_l, ks.limiting, dl, bl, 8.0 * math.pi * a)
    return GeneratorSet(ks, bn, bl, cn, cl, en)


def kappa_trace(cfg, N, times):
    """kappa_N at the given times along the modified trajectory."""
    times = sorted(times)
    k = cfg["kernels"]
    s = scattering_at(cfg, N)
    grid = grid_of(cfg)
    inter = build_interaction(s, cfg.potential(), grid)
    start = initial_state(cfg, grid, "modified")
    traj = evolve(start, inter, times[-1], cfg["physics"]["dt"], times)
    trace = PhaseTrace()
    for t in times:
        st = traj.at(t)
        pack = build_kernels(st, s, tol=k["tol"], nodes=k["nodes"])
        ed = eta_dot(pack, st, time_derivative(st, inter))
        trace.add(kappa(pack, st, s, ed, interaction=inter, s_nodes=k["s_nodes"]))
    return trace


# sweeps


def quantity(cfg, name, N):
    """One point of an N-sweep."""
    if name == "scattering_integral":
        return scattering_record(cfg, N)["integral_Vf_residual"]
    if name == "lambda_gap":
        return abs(scattering_record(cfg, N)["lambda_ratio"] - 1.0)
    if name == "w_deviation":
        return scattering_record(cfg, N)["w_deviation"]
    if name == "field_distance":
        return field_distance(cfg, N)
    if name == "eta_distance":
        return kernel_report(cfg, N)[1].continuum["eta"]
    if name in ("G_distance", "H_distance"):
        d = generator_set(cfg, N).distance()
        return d.G_op if name == "G_distance" else d.H_hs
    if name == "d_defect":
        return fock_defect_point(cfg, N)
    raise ConfigError(f"unknown study quantity {name!r}")


def study(cfg, name, threads=1):
    ns = cfg["physics"]["N"]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        values = list(pool.map(lambda n: quantity(cfg, name, n), ns))
    return list(zip(ns, values)), fit_power_law(ns, values)


# Bogoliubov propagation and central-limit variances


def theta_run(cfg, t_end=None, dt=None, checkpoints=()):
    th = cfg["theta"]
    t_end = cfg["physics"]["t_end"] if t_end is None else t_end
    dt = th["dt"] if dt is None else dt
    provider = theta_provider(cfg, t_end)
    theta = propagate_theta(0.0, t_end, dt, provider, tol=th["tol"], polar=th["polar"],
                            record_every=th["record_every"], checkpoints=checkpoints)
    return theta, provider


def theta_provider(cfg, t_end):
    """Generator lattice over [0, t_end] for the configured flavor."""
    th = cfg["theta"]
    grid = grid_of(cfg)
    s = scattering_at(cfg, th["N"])
    count = max(1, int(math.ceil(t_end / th["lattice"] - 1e-9)))
    nodes = [t_end * i / count for i in range(1, count + 1)]
    if th["flavor"] == "limiting":
        coupling = s.scattering_length
        start = initial_state(cfg, grid)
    else:
        coupling = build_interaction(s, cfg.potential(), grid)
        start = initial_state(cfg, grid, "modified")
    traj = evolve(start, coupling, t_end, cfg["physics"]["dt"], nodes)
    build = generator_at(traj, s, coupling, cfg["kernels"]["s_nodes"], cfg["kernels"]["tol"])
    return LatticeProvider(build, 0.0, t_end, th["lattice"])


def make_observable(cfg, grid):
    spec = cfg["clt"]["observable"]
    x, y, z = grid.coords()
    k = 2.0 * math.pi / grid.L

    def wave(mode):
        return np.exp(1j * k * (mode[0] * x + mode[1] * y + mode[2] * z)) * grid.L ** -1.5

    if spec["kind"] == "finite_rank":
        return Observable.finite_rank(grid, [(wave(spec["bra_mode"]), spec["scale"] * wave(spec["ket_mode"]))],
                                      "finite_rank")
    fn = spec["function"]
    if fn == "constant":
        values = np.full(grid.shape, spec["scale"], dtype=complex)
    elif fn == "gaussian":
        values = spec["scale"] * np.exp(-(x ** 2 + y ** 2 + z ** 2) / (2.0 * spec["width"] ** 2))
    else:
        arg = k * (spec["mode"][0] * x + spec["mode"][1] * y + spec["mode"][2] * z)
        values = spec["scale"] * (np.cos(arg) if fn == "cos" else np.sin(arg))
    return Observable.multiplication(grid, values, fn)


def make_tau(cfg, grid, initial_field):
    spec = cfg["clt"]["tau"]
    if spec["kind"] == "zero":
        return None
    if spec["kind"] == "separable":
        x, y, z = grid.coords()
        m = spec["mode"]
        psi = np.cos(2.0 * math.pi / grid.L * (m[0] * x + m[1] * y + m[2] * z))
        psi = psi / grid.norm(psi)
        return separable_tau(grid, psi, spec["lambda"], initial_field)
    path = spec["path"]
    _, meta, kernel = read_binary(path)
    if kernel.shape != (grid.size, grid.size):
        raise ConfigError(f"tau kernel {path} has shape {kernel.shape}, expected {(grid.size, grid.size)}")
    return grid.h ** 3 * kernel


def clt_records(cfg, theta):
    """Variance and interval probabilities at the propagator's final time."""
    grid = grid_of(cfg)
    t = theta.t
    s = scattering_at(cfg, cfg["theta"]["N"])
    start = initial_state(cfg, grid)
    traj = evolve(start, s.scattering_length, t, cfg["physics"]["dt"]) if t > 0 else None
    state = traj.final if traj else start
    pack = build_kernels(state, s, tol=cfg["kernels"]["tol"], nodes=cfg["kernels"]["nodes"])
    obs = make_observable(cfg, grid)
    h = observable_vector(obs, state, pack)
    tau = make_tau(cfg, grid, start.flat)
    res = variance(h, theta, grid, tau=tau, initial_field=start.flat)
    return res, record(res, obs.label, cfg["clt"]["intervals"])


# Fock space


def fock_inputs(cfg):
    """Fixed pair kernel, mode vector and bounded-occupation test vector recipe."""
    fk = cfg["fock"]
    m = fk["m"]
    rng = np.random.default_rng(fk["seed"])
    eta = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    eta = eta + eta.T
    norm = np.linalg.norm(eta)
    eta = eta * (fk["eta_norm"] / norm) if norm > 0 else eta
    f = rng.normal(size=m) + 1j * rng.normal(size=m)
    return eta, f / np.linalg.norm(f), rng.normal(size=m) + 1j * rng.normal(size=m)


def bounded_vector(space, occupation=1):
    """Normalised vector spread evenly over all states with at most `occupation` particles."""
    xi = (space.number <= occupation).astype(complex)
    return xi / np.linalg.norm(xi)


def fock_defect_point(cfg, N):
    eta, f, _ = fock_inputs(cfg)
    space = fock.build_space(cfg["fock"]["m"], N)
    return fock.d_defect(space, eta, f, bounded_vector(space))


def fock_rows(cfg, threads=1):
    """(N, m, quantity, value) rows over the configured N sweep."""
    fk = cfg["fock"]
    m = fk["m"]
    eta, f, g = fock_inputs(cfg)
    g = g / np.linalg.norm(g)

    def point(N):
        space = fock.build_space(m, N)
        expB = fock.bogoliubov_exp(space, eta)
        gamma, sigma = fock.mode_cosh_sinh(eta)
        xi = bounded_vector(space)
        nu = 0.5 * eta.real
        phase = fock.cubic_phase(space, nu, gamma, sigma, N, margin=1)
        return [
            (N, m, "dimension", space.dimension),
            (N, m, "commutator_residual", fock.verify_b_algebra(space, f, g)),
            (N, m, "d_defect", fock.d_defect(space, eta, f, xi, expB)),
            (N, m, "growth_ratio_n1", fock.growth_ratio(space, expB, 1)),
            (N, m, "growth_ratio_n2", fock.growth_ratio(space, expB, 2)),
            (N, m, "cubic_phase_distance", float(np.linalg.norm(phase.unitary @ xi - xi))),
            (N, m, "cubic_phase_antisymmetry", phase.antisymmetry),
        ]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = [row for chunk in pool.map(point, fk["N"]) for row in chunk]
    ns = fk["N"]
    if len(ns) >= 2:
        fit = fit_power_law(ns, [r[3] for r in rows if r[2] == "d_defect"])
        rows.append((0, m, "d_defect_slope", fit.slope))
    weyl_space = fock.build_space(1, max(20, max(ns)))
    value, exact = fock.weyl_check(weyl_space, [1.0], fk["weyl_s"])
    rows.append((weyl_space.N, 1, "weyl_value", value.real))
    rows.append((weyl_space.N, 1, "weyl_error", abs(value - exact)))
    return rows
