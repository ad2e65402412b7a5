import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from gpfluct.errors import ConfigError
from gpfluct.fitting import fit_power_law
from gpfluct.scattering import (Potential, compare_w_profiles, integral_Vf, read_profile, solve_neumann,
                                solve_zero_energy, w_limit, write_profile)

from conftest import A_WELL


def well_neumann_oracle(v0, R, rb):
    """Closed-form square-well Neumann ground state: (lambda, int V f)."""

    def parts(lam):
        kap = math.sqrt(v0 / 2.0 - lam)
        q = math.sqrt(lam)
        u, du = math.sinh(kap * R), kap * math.cosh(kap * R)
        s = rb - R
        ub = u * math.cos(q * s) + du / q * math.sin(q * s)
        dub = -u * q * math.sin(q * s) + du * math.cos(q * s)
        return kap, ub, dub

    def neumann(lam):
        _, ub, dub = parts(lam)
        return dub * rb - ub

    lam = brentq(neumann, 1e-14 / rb ** 3, 10.0 / rb ** 2, xtol=1e-30, rtol=1e-15)
    kap, ub, _ = parts(lam)
    scale = rb / ub
    inner = R * math.cosh(kap * R) / kap - math.sinh(kap * R) / kap ** 2
    return lam, 4.0 * math.pi * v0 * scale * inner


def test_zero_potential_has_zero_length(zero_potential):
    assert solve_zero_energy(zero_potential, 1.0) == 0.0
    s = solve_neumann(zero_potential, 50, 0.25)
    assert s.lambda_ell == 0.0
    assert np.all(s.f_values == 1.0)
    assert integral_Vf(s, zero_potential) == 0.0
    dev = compare_w_profiles(s)
    assert dev.value == 0.0 and dev.derivative == 0.0


def test_square_well_length(well):
    assert abs(solve_zero_energy(well, 3.0) - A_WELL) < 1e-8


@settings(max_examples=15, deadline=None)
@given(v0=st.floats(0.05, 20.0), R=st.floats(0.3, 2.0))
def test_square_well_length_matches_closed_form(v0, R):
    kap = math.sqrt(v0 / 2.0)
    a = solve_zero_energy(Potential("square_well", v0=v0, R=R), R + 1.0)
    assert abs(a - (R - math.tanh(kap * R) / kap)) < 1e-8
    assert 0.0 <= a <= R


def test_length_vanishes_monotonically_with_strength():
    lengths = [solve_zero_energy(Potential("square_well", v0=v, R=1.0), 2.0) for v in (2.0, 1.0, 0.1, 0.01, 1e-4)]
    assert all(b < a for a, b in zip(lengths, lengths[1:]))
    assert lengths[-1] < 1e-4


def test_neumann_eigenvalue_matches_closed_form(scat100):
    lam, vf = well_neumann_oracle(2.0, 1.0, 25.0)
    assert abs(scat100.lambda_ell - lam) < 1e-8 * lam
    assert abs(integral_Vf(scat100, scat100.potential) - vf) < 1e-8 * vf


def test_neumann_eigenvalue_near_asymptotic_value(scat100):
    target = 3.0 * A_WELL / (0.25 * 100) ** 3
    assert abs(scat100.lambda_ell / target - 1.0) < 0.1


def test_neumann_profile_invariants(scat100):
    s = scat100
    assert s.f(s.radius) == 1.0
    assert s.f_values[-1] == 1.0
    assert np.all(s.f_values >= 0.0) and np.all(s.f_values <= 1.0 + 1e-14)
    r = np.linspace(1e-3, s.radius, 4000)
    assert np.all(r * s.f(r) > 0.0)
    assert np.all(s.f(np.array([s.radius + 1.0, 100.0])) == 1.0)


def test_w_decay_bounds(scat100):
    r = np.linspace(1e-3, scat100.radius, 4000)
    c_w = np.max(scat100.w(r) * (r + 1.0))
    c_dw = np.max(np.abs(scat100.dw(r)) * (r ** 2 + 1.0))
    assert c_w < 2.0 and c_dw < 2.0
    wide = solve_neumann(scat100.potential, 400, 0.25)
    r4 = np.linspace(1e-3, wide.radius, 8000)
    assert np.max(wide.w(r4) * (r4 + 1.0)) < 2.0 * c_w


def test_integral_Vf_rate(well):
    ns = [50, 100, 200, 400]
    res = [abs(integral_Vf(solve_neumann(well, n, 0.25), well) - 8.0 * math.pi * A_WELL) for n in ns]
    fit = fit_power_law(ns, res)
    assert 0.8 <= fit.decay <= 1.2
    assert res[-1] < res[0]
    consts = [r * 0.25 * n / A_WELL ** 2 for r, n in zip(res, ns)]
    assert max(consts) / min(consts) < 2.0


def test_integral_Vf_rejects_mismatched_potential(scat100):
    with pytest.raises(ConfigError):
        integral_Vf(scat100, Potential("square_well", v0=3.0, R=1.0))


def test_w_limit_values():
    assert abs(float(w_limit(0.25, A_WELL, 0.25))) < 1e-15
    assert float(w_limit(0.5, A_WELL, 0.25)) == 0.0
    assert abs(float(w_limit(0.5, 1.0, 1.0)) - 0.625) < 1e-15
    with pytest.raises(ValueError):
        w_limit(0.0, 1.0, 1.0)


def test_profile_deviation_shrinks(well):
    d100 = compare_w_profiles(solve_neumann(well, 100, 0.25))
    d400 = compare_w_profiles(solve_neumann(well, 400, 0.25))
    assert 2.0 <= d100.value / d400.value <= 8.0
    assert 2.0 <= d100.derivative / d400.derivative <= 8.0


def test_profile_deviation_zero_beyond_ell(scat100):
    x = np.array([0.26, 0.3, 1.0])
    assert np.all(scat100.rescaled_w(x) == 0.0)
    assert np.all(w_limit(x, A_WELL, 0.25) == 0.0)


def test_profile_round_trip(tmp_path, scat100):
    path = tmp_path / "profile.txt"
    write_profile(path, scat100)
    meta, r, f = read_profile(path)
    assert meta["N"] == 100.0 and meta["ell"] == 0.25
    assert meta["lambda_ell"] == scat100.lambda_ell
    assert np.array_equal(r, scat100.r_grid) and np.array_equal(f, scat100.f_values)


def test_table_potential_matches_square_well(tmp_path):
    path = tmp_path / "v.txt"
    np.savetxt(path, [[0.0, 2.0], [0.5, 2.0], [1.0, 2.0]])
    pot = Potential.from_config({"kind": "custom_radial_table", "table": "v.txt"}, base_dir=tmp_path)
    assert abs(solve_zero_energy(pot, 2.0) - A_WELL) < 1e-8


@pytest.mark.parametrize("section", [
    {"kind": "square_well", "v0": -1.0, "R": 1.0},
    {"kind": "square_well", "v0": 1.0, "R": 0.0},
    {"kind": "square_well", "v0": 1.0},
    {"kind": "harmonic"},
])
def test_invalid_potentials_rejected(section):
    with pytest.raises(ConfigError):
        Potential.from_config(section)


def test_negative_table_rejected():
    with pytest.raises(ConfigError):
        Potential("custom_radial_table", table=((0.0, 1.0), (1.0, -0.5)))


@pytest.mark.parametrize("N, ell", [(1, 0.25), (100, 0.5), (100, 0.0), (3, 0.25)])
def test_neumann_rejects_bad_inputs(well, N, ell):
    with pytest.raises(ConfigError):
        solve_neumann(well, N, ell)
