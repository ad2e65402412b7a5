import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpfluct import fock
from gpfluct import workflows as wf
from gpfluct.errors import ConfigError, NumericalError
from gpfluct.fitting import fit_power_law

complex_vec = st.lists(st.complex_numbers(max_magnitude=3.0, allow_nan=False, allow_infinity=False),
                       min_size=2, max_size=2)


@pytest.fixture(scope="module")
def inputs(cfg):
    return wf.fock_inputs(cfg)


@pytest.fixture(scope="module")
def sweep(cfg, inputs):
    eta = inputs[0]
    out = {}
    for N in cfg["fock"]["N"]:
        space = fock.build_space(3, N)
        out[N] = (space, fock.bogoliubov_exp(space, eta))
    return out


def _state(space, occ):
    v = np.zeros(space.dimension, dtype=complex)
    v[space.index[occ]] = 1.0
    return v


@pytest.mark.parametrize("m, N, dim", [(1, 2, 3), (2, 3, 10), (3, 4, 35)])
def test_dimensions(m, N, dim):
    space = fock.build_space(m, N)
    assert space.dimension == dim == fock.fock_dimension(m, N)
    assert len(set(space.basis)) == dim


def test_ladder_action():
    space = fock.build_space(2, 3)
    up = space.a[0].conj().T @ _state(space, (1, 0))
    assert np.allclose(up, math.sqrt(2.0) * _state(space, (2, 0)))
    assert not (space.a[1] @ _state(space, (1, 0))).any()


def test_number_spectrum():
    space = fock.build_space(3, 4)
    values, counts = np.unique(space.number, return_counts=True)
    assert list(values) == [0, 1, 2, 3, 4]
    assert list(counts) == [math.comb(n + 2, 2) for n in range(5)]
    total = sum(a.conj().T @ a for a in space.a)
    assert np.allclose(total.diagonal(), space.number)


@settings(max_examples=20, deadline=None)
@given(f=complex_vec, g=complex_vec, N=st.integers(1, 6))
def test_modified_commutators(f, g, N):
    space = fock.build_space(2, N)
    assert fock.verify_b_algebra(space, f, g) < 1e-12


def test_truncation_is_exact_at_the_edges():
    space = fock.build_space(2, 4)
    f = np.array([0.3 + 0.2j, -0.7])
    assert not (space.b_of(f) @ space.vacuum()).any()
    top = _state(space, (3, 1))
    assert not (space.b_star(f) @ top).any()


def test_other_root_ordering_breaks_algebra():
    space = fock.build_space(2, 4, ordering="root_before")
    assert fock.verify_b_algebra(space, [1.0, 0.5j], [0.2, 1.0]) > 0.1


def test_swapped_correction_term_does_not_hold():
    space = fock.build_space(2, 4)
    f, g = np.array([1.0, 0.5j]), np.array([0.2, 1.0])
    bf, bsg = space.b_of(f), space.b_star(g)
    scalar = space.number_fn(lambda n: 1.0 - n / space.N) * np.vdot(f, g)
    swapped = space.a_star(f) @ space.a_of(g) / space.N
    assert np.max(np.abs((bf @ bsg - bsg @ bf - (scalar - swapped)).toarray())) > 0.1


def test_zero_pair_kernel_is_trivial():
    space = fock.build_space(3, 4)
    eta = np.zeros((3, 3))
    E = fock.bogoliubov_exp(space, eta)
    assert np.array_equal(E, np.eye(space.dimension))
    assert fock.d_defect(space, eta, [1.0, 0.0, 0.0], wf.bounded_vector(space), E) == 0.0


def test_mode_hyperbolics(inputs):
    eta, _, _ = inputs
    gamma, sigma = fock.mode_cosh_sinh(eta)
    assert fock.hyperbolic_identity_residual(gamma, sigma) < 1e-14


def test_d_defect_decays(cfg, inputs, sweep):
    eta, f, _ = inputs
    ns = cfg["fock"]["N"]
    values = [fock.d_defect(space, eta, f, wf.bounded_vector(space), E) for space, E in (sweep[n] for n in ns)]
    fit = fit_power_law(ns, values)
    assert fit.slope < -0.7
    assert all(b < a for a, b in zip(values, values[1:]))


def test_d_defect_bounded_by_fitted_constant(cfg, inputs, sweep):
    eta, f, _ = inputs

    def ratio(N):
        space, E = sweep[N]
        xi = wf.bounded_vector(space)
        return N * fock.d_defect(space, eta, f, xi, E) / (np.linalg.norm(f) * space.occupation_weight(xi, 1.5))

    ns = cfg["fock"]["N"]
    c = 2.0 * ratio(ns[0])
    assert all(ratio(n) <= c for n in ns[1:])


def test_number_growth_bounded(cfg, sweep):
    for power, cap in ((1, 1.2), (2, 1.5)):
        ratios = [fock.growth_ratio(space, E, power) for space, E in sweep.values()]
        assert all(1.0 < r < cap for r in ratios)
        assert max(ratios) / min(ratios) < 1.1


def test_real_kernel_gives_real_orthogonal_exponential(inputs):
    eta = inputs[0].real.copy()
    eta *= 0.3 / np.linalg.norm(eta)
    space = fock.build_space(3, 5)
    E = fock.bogoliubov_exp(space, eta)
    assert np.max(np.abs(E.imag)) < 1e-14
    assert np.max(np.abs(E.real.T @ E.real - np.eye(space.dimension))) < 1e-12


def test_pair_kernel_validation():
    space = fock.build_space(2, 3)
    with pytest.raises(ConfigError):
        fock.pair_generator(space, np.array([[0.0, 0.1], [0.2, 0.0]]))
    with pytest.raises(ConfigError):
        fock.bogoliubov_exp(space, 2.0 * np.eye(2))
    with pytest.raises(ConfigError):
        fock.d_defect(space, 0.1 * np.eye(2), [1.0, 0.0], np.ones(space.dimension))


@pytest.mark.parametrize("n, M, margin, value", [
    (0, 100, 10, 1.0), (60, 100, 10, 1.0), (75, 100, 10, 0.5), (90, 100, 10, 0.0),
    (30, 40, 10, 1.0), (12, 12, 1, 0.0), (7, 12, 1, 1.0), (9, 12, 1, 0.5),
])
def test_cutoff_profile(n, M, margin, value):
    assert fock.cutoff(n, M, margin) == pytest.approx(value, abs=1e-15)


def test_cubic_phase_trivial_and_quadratic(inputs):
    eta, _, _ = inputs
    gamma, sigma = fock.mode_cosh_sinh(eta)
    space = fock.build_space(3, 6)
    xi = wf.bounded_vector(space)
    zero = fock.cubic_phase(space, np.zeros((3, 3)), gamma, sigma, 6, margin=1)
    assert np.array_equal(zero.unitary, np.eye(space.dimension))
    nu = 0.05 * eta.real
    d = [np.linalg.norm(fock.cubic_phase(space, s * nu, gamma, sigma, 6, margin=1).unitary @ xi - xi)
         for s in (1.0, 0.5)]
    assert abs(d[0] / d[1] - 2.0) < 0.05
    with pytest.raises(ConfigError):
        fock.cubic_generator(space, nu, gamma, sigma, 7)


def test_weyl_expectation():
    space = fock.build_space(1, 20)
    value, exact = fock.weyl_check(space, [1.0], 1.0)
    assert abs(value - exact) < 1e-12
    assert abs(exact - math.exp(-0.5)) < 1e-16
    with pytest.raises(NumericalError):
        fock.weyl_check(fock.build_space(1, 2), [1.0], 3.0)


def test_dimension_guard():
    with pytest.raises(ConfigError):
        fock.build_space(10, 30)
    with pytest.raises(ConfigError):
        fock.build_space(0, 3)


def test_sweep_rows(cfg, tmp_path):
    rows = wf.fock_rows(cfg.with_overrides({"fock.N": [4, 6]}))
    names = {r[2] for r in rows}
    assert {"commutator_residual", "d_defect", "d_defect_slope", "weyl_error"} <= names
    assert all(r[3] < 1e-12 for r in rows if r[2] == "commutator_residual")
    fock.write_sweep(tmp_path / "sweep.csv", rows)
    assert (tmp_path / "sweep.csv").read_text().splitlines()[0] == "N,m,quantity,value"
