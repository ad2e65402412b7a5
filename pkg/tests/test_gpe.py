import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpfluct.errors import ConfigError
from gpfluct.gpe import (FieldState, Grid, build_interaction, constant_field, evolve, gp_energy, mass_outside,
                         plane_wave, smooth_datum, time_derivative)
from gpfluct.scattering import integral_Vf

from conftest import A_WELL


def test_constant_field_picks_up_mean_field_phase(grid8):
    state = constant_field(grid8)
    out = evolve(state, A_WELL, 0.3, 0.01).final
    phase = np.exp(-1j * 8.0 * math.pi * A_WELL * grid8.L ** -3 * 0.3)
    assert np.max(np.abs(out.values - phase * state.values)) < 1e-13


@settings(max_examples=10, deadline=None)
@given(n=st.tuples(st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2)), t=st.floats(0.01, 0.5))
def test_plane_wave_exact_phase(n, t):
    grid = Grid(8.0, 8)
    state = plane_wave(grid, n)
    k2 = (2.0 * math.pi / grid.L) ** 2 * sum(c * c for c in n)
    out = evolve(state, A_WELL, t, 0.05).final
    phase = np.exp(-1j * (k2 + 8.0 * math.pi * A_WELL * grid.L ** -3) * t)
    assert np.max(np.abs(out.values - phase * state.values)) < 1e-12


def test_mass_and_energy_conserved(grid8, datum8):
    traj = evolve(datum8, A_WELL, 1.0, 0.01, sample_times=[0.25, 0.5, 0.75])
    e0 = gp_energy(traj.states[0], A_WELL)
    for s in traj.states:
        assert abs(s.norm - 1.0) < 1e-12
        assert abs(gp_energy(s, A_WELL) - e0) < 1e-6 * abs(e0)


def test_strang_second_order():
    grid = Grid(8.0, 16)
    state = smooth_datum(grid, seed=3)
    ref = evolve(state, A_WELL, 0.2, 0.0005).final.values
    errs = [grid.norm(evolve(state, A_WELL, 0.2, dt).final.values - ref) for dt in (0.02, 0.01)]
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_global_phase_commutes_with_flow(grid8, datum8):
    theta = 0.7
    rotated = FieldState(grid8, np.exp(1j * theta) * datum8.values)
    a = evolve(datum8, A_WELL, 0.2, 0.01).final.values
    b = evolve(rotated, A_WELL, 0.2, 0.01).final.values
    assert np.max(np.abs(b - np.exp(1j * theta) * a)) < 1e-13


def test_time_derivative_matches_flow(grid8, datum8):
    d = time_derivative(datum8, A_WELL)
    fd = []
    for eps in (1e-3, 5e-4):
        fwd = evolve(datum8, A_WELL, eps, eps / 20).final.values
        back = evolve(FieldState(grid8, datum8.values.conj()), A_WELL, eps, eps / 20).final.values.conj()
        fd.append((fwd - back) / (2.0 * eps))
    richardson = (4.0 * fd[1] - fd[0]) / 3.0
    assert grid8.norm(richardson - d) < 1e-6 * grid8.norm(d)


def test_modified_flow_approaches_limit(well, scat100, grid8, datum8):
    inter = build_interaction(scat100, well, grid8)
    a = evolve(datum8, A_WELL, 0.2, 0.01).final.values
    b = evolve(datum8.with_flavor("modified"), inter, 0.2, 0.01).final.values
    gap = grid8.norm(a - b)
    assert 0.0 < gap < 1e-2


def test_interaction_zero_mode_is_integral(well, scat100, grid8):
    inter = build_interaction(scat100, well, grid8)
    assert abs(inter.zero_mode - integral_Vf(scat100, well)) < 1e-10 * inter.zero_mode
    assert abs(inter.fourier_values[0, 0, 0] - inter.zero_mode) == 0.0


def test_zero_potential_interaction_is_free(zero_potential, grid8):
    from gpfluct.scattering import solve_neumann
    s = solve_neumann(zero_potential, 50, 0.25)
    inter = build_interaction(s, zero_potential, grid8)
    assert np.all(inter.fourier_values == 0.0)


def test_trajectory_interpolation(grid8, datum8):
    traj = evolve(datum8, A_WELL, 0.4, 0.005, sample_times=[0.1, 0.2, 0.3])
    direct = evolve(datum8, A_WELL, 0.15, 0.005).final.values
    assert grid8.norm(traj.at(0.15).values - direct) < 1e-3
    assert traj.at(0.2) is traj.states[2]
    with pytest.raises(ConfigError):
        traj.at(0.5)


def test_mass_outside_ball(grid8):
    state = constant_field(grid8)
    assert abs(mass_outside(state, 0.0) - 1.0) < 1e-14
    assert mass_outside(state, 100.0) == 0.0


def test_dt_bound_enforced(grid8, datum8):
    with pytest.raises(ConfigError):
        evolve(datum8, A_WELL, 0.5, 0.5)


def test_flavor_mismatch_rejected(well, scat100, grid8, datum8):
    inter = build_interaction(scat100, well, grid8)
    with pytest.raises(ConfigError):
        evolve(datum8, inter, 0.1, 0.01)
    with pytest.raises(ConfigError):
        evolve(datum8.with_flavor("modified"), A_WELL, 0.1, 0.01)
    with pytest.raises(ConfigError):
        evolve(datum8, A_WELL, -1.0, 0.01)


@pytest.mark.parametrize("L, M", [(8.0, 7), (8.0, 4), (-1.0, 8)])
def test_grid_validation(L, M):
    with pytest.raises(ConfigError):
        Grid(L, M)


def test_field_shape_and_flavor_checked(grid8):
    with pytest.raises(ConfigError):
        FieldState(grid8, np.ones((4, 4, 4)))
    with pytest.raises(ConfigError):
        FieldState(grid8, np.ones(grid8.shape), flavor="exact")
