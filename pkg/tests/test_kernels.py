import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpfluct.errors import ConfigError, NumericalError
from gpfluct.formats import read_binary
from gpfluct.gpe import Grid, evolve, smooth_datum, time_derivative
from gpfluct.kernels import (build_kernels, corrected_hs, cosh_sinh, eta_core, eta_dot, export_kernel, hs,
                             hyperbolic_series, kernel_distance)
from gpfluct.scattering import solve_neumann

from conftest import A_WELL


@pytest.fixture(scope="module")
def packs(scat100, datum8):
    return build_kernels(datum8.with_flavor("modified"), scat100), build_kernels(datum8, scat100)


def _psd_sqrt(mat):
    w, v = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def test_zero_potential_gives_trivial_kernels(zero_potential, datum8):
    s = solve_neumann(zero_potential, 50, 0.25)
    pack = build_kernels(datum8, s)
    n = datum8.grid.size
    assert np.all(pack.k == 0) and np.all(pack.eta == 0)
    assert np.array_equal(pack.gamma, np.eye(n)) and np.all(pack.sigma == 0)


def test_cosh_is_root_of_one_plus_sinh_squared(packs):
    for pack in packs:
        n = pack.grid.size
        oracle = _psd_sqrt(np.eye(n) + pack.sigma @ pack.sigma.conj())
        assert np.max(np.abs(pack.gamma - oracle)) < 1e-12


def test_kernel_identities(packs):
    for pack in packs:
        res = pack.residuals()
        assert max(res.values()) < 1e-12, res


def test_kernels_match_field_conventions(packs):
    _, pack = packs
    phi, h3 = pack.field, pack.grid.h ** 3
    assert np.max(np.abs(pack.eta @ phi.conj())) < 1e-14
    assert np.allclose(pack.kernel("eta"), pack.eta / h3)
    with pytest.raises(ConfigError):
        pack.member("tau")


def test_eta_grows_with_window(well, datum8):
    norms = []
    for ell in (0.1, 0.2, 0.3, 0.4):
        s = solve_neumann(well, 100, ell)
        norms.append(build_kernels(datum8, s).hs_norm("eta"))
    assert all(b > a for a, b in zip(norms, norms[1:]))
    assert norms[-1] / norms[0] > 5.0


def test_eta_dot_matches_finite_difference(scat100, datum8):
    eps = 1e-3
    traj = evolve(datum8, A_WELL, 0.1 + eps, 1e-3, sample_times=[0.1 - eps, 0.1])
    lo, mid, hi = traj.states[1:]
    mid_pack = build_kernels(mid, scat100)
    analytic = eta_dot(mid_pack, mid, time_derivative(mid, A_WELL))
    fd = (build_kernels(hi, scat100).eta - build_kernels(lo, scat100).eta) / (2.0 * eps)
    assert hs(analytic - fd) < 1e-4 * hs(analytic)


def test_eta_dot_rejects_foreign_field(scat100, datum8, packs):
    _, pack = packs
    other = smooth_datum(datum8.grid, seed=4)
    with pytest.raises(ConfigError):
        eta_dot(pack, other, time_derivative(other, A_WELL))


def test_hyperbolic_distances_bounded_by_eta(packs):
    pn, pl = packs
    d = kernel_distance(pn, pl)
    m = max(pn.hs_norm("eta"), pl.hs_norm("eta"))
    assert d.grid["p"] <= 2.0 * m * d.grid["eta"] * math.cosh(m)
    assert d.grid["r"] <= 2.0 * m * m * d.grid["eta"] * math.cosh(m)
    assert d.grid["mu"] <= 2.0 * d.grid["k"]
    assert d.continuum["eta"] >= d.grid["eta"]


def test_corrected_norm_stable_under_refinement(scat100):
    raw, corrected = [], []
    for M in (8, 10):
        grid = Grid(8.0, M)
        pack = build_kernels(smooth_datum(grid, seed=3), scat100)
        raw.append(pack.hs_norm("eta"))
        corrected.append(corrected_hs(pack.eta, [(1.0, eta_core(pack))], grid.h))
    assert raw[1] / raw[0] > 1.2
    assert abs(corrected[1] / corrected[0] - 1.0) < 0.02


def test_distance_rejects_swapped_packs(packs):
    pn, pl = packs
    with pytest.raises(ConfigError):
        kernel_distance(pl, pn)


def test_series_tolerance_validated(scat100, datum8):
    with pytest.raises(ConfigError):
        build_kernels(datum8, scat100, tol=1e-3)


def test_series_rejects_huge_eta():
    eta = 50.0 * np.eye(4)
    with pytest.raises(NumericalError):
        hyperbolic_series(eta, 1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), scale=st.floats(0.01, 0.9))
def test_series_satisfies_hyperbolic_identity(seed, scale):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    eta = a + a.T
    eta *= scale / np.linalg.norm(eta)
    gamma, sigma = cosh_sinh(*hyperbolic_series(eta, 1e-14))
    assert np.max(np.abs(gamma @ gamma - sigma @ sigma.conj() - np.eye(5))) < 1e-13
    assert np.max(np.abs(sigma - sigma.T)) < 1e-14
    assert np.max(np.abs(gamma - gamma.conj().T)) < 1e-14


def test_export_round_trip(tmp_path, packs):
    _, pack = packs
    export_kernel(tmp_path / "eta.bin", pack, "eta")
    kind, meta, arr = read_binary(tmp_path / "eta.bin")
    assert kind == "kernel" and meta["name"] == "eta"
    assert np.array_equal(arr, pack.kernel("eta"))


def test_diagonal_cell_average_converged(scat100, datum8):
    coarse = build_kernels(datum8, scat100, nodes=32).hs_norm("k")
    fine = build_kernels(datum8, scat100, nodes=64).hs_norm("k")
    assert abs(fine / coarse - 1.0) < 0.01
