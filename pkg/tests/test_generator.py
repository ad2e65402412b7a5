import numpy as np
import pytest

from gpfluct import workflows as wf
from gpfluct.config import normalize
from gpfluct.errors import ConfigError
from gpfluct.generator import assemble_blocks, assemble_blocks_limit, corrected_H_hs, kappa
from gpfluct.gpe import time_derivative
from gpfluct.kernels import eta_dot


@pytest.fixture(scope="module")
def gs100(cfg):
    return wf.generator_set(cfg, 100)


def _blocks(gs, s_nodes=8, terms=None, flavor="finite_N"):
    ks = gs.kernels
    s = ks.scattering
    if flavor == "finite_N":
        return assemble_blocks(ks.pack_n, ks.modified, s, gs.eta_dot_n, s_nodes, ks.interaction, terms)
    el = eta_dot(ks.pack_l, ks.limiting, time_derivative(ks.limiting, s.scattering_length))
    return assemble_blocks_limit(ks.pack_l, ks.limiting, s.scattering_length, s.ell, el, s_nodes, terms)


def test_zero_potential_gives_zero_generator():
    cfg = normalize({"potential": {"kind": "zero"}})
    gs = wf.generator_set(cfg, 50)
    for blocks in (gs.blocks_n, gs.blocks_l):
        assert np.max(np.abs(blocks.G)) == 0.0
        assert np.max(np.abs(blocks.H)) == 0.0
    trace = wf.kappa_trace(cfg, 50, [0.0, 0.1])
    assert all(s.value == 0.0 for s in trace.samples)


def test_no_terms_gives_zero_generator(gs100):
    for flavor in ("finite_N", "limiting"):
        b = _blocks(gs100, terms=(), flavor=flavor)
        assert np.all(b.G == 0) and np.all(b.H == 0)


def test_blocks_hermitian_symmetric_and_projected(gs100):
    for b in (gs100.blocks_n, gs100.blocks_l):
        res = b.residuals()
        assert max(res.values()) < 1e-12, res


def test_s_quadrature_converged(gs100):
    fine = _blocks(gs100, s_nodes=16)
    base = gs100.blocks_n
    assert np.max(np.abs(fine.G - base.G)) < 1e-9
    assert np.max(np.abs(fine.H - base.H)) < 1e-9


def test_pair_coefficient_near_limit(gs100):
    s = gs100.kernels.scattering
    limit = 3.0 * s.scattering_length / s.ell ** 3
    assert gs100.blocks_l.pair_coefficient == limit
    assert abs(gs100.blocks_n.pair_coefficient / limit - 1.0) < 0.1


def test_limiting_blocks_independent_of_N(cfg, gs100):
    other = wf.generator_set(cfg, 50)
    assert np.max(np.abs(other.blocks_l.G - gs100.blocks_l.G)) < 1e-12
    assert np.max(np.abs(other.blocks_l.H - gs100.blocks_l.H)) < 1e-12


def test_finite_blocks_approach_limit(cfg, gs100):
    far = wf.generator_set(cfg, 25).distance()
    near = gs100.distance()
    assert near.G_op < far.G_op and near.H_hs < far.H_hs


def test_kappa_pairings_agree(gs100):
    ks = gs100.kernels
    args = (ks.pack_n, ks.modified, ks.scattering, gs100.eta_dot_n)
    real = kappa(*args, interaction=ks.interaction, pairing="real")
    summed = kappa(*args, interaction=ks.interaction, pairing="sum")
    assert abs(real.value - summed.value) < 1e-12 * max(1.0, abs(real.value))
    assert real.imag_residue < 1e-12
    assert abs(sum(real.groups.values()) - real.value) < 1e-12 * max(1.0, abs(real.value))
    finer = kappa(*args, interaction=ks.interaction, s_nodes=16)
    assert abs(finer.value - real.value) < 1e-9


def test_kappa_trace_cumulative(cfg):
    trace = wf.kappa_trace(cfg, 100, [0.0, 0.1, 0.2])
    cum = trace.cumulative()
    assert cum[0] == 0.0
    v = [s.value for s in trace.samples]
    assert abs(cum[-1] - 0.05 * (v[0] + 2 * v[1] + v[2])) < 1e-12


def test_corrected_H_norm_stable_under_refinement(cfg):
    values = []
    for M in (8, 10):
        gs = wf.generator_set(cfg.with_overrides({"grid.M": M}), 100)
        values.append(corrected_H_hs(gs.blocks_l, gs.cores_l))
    assert abs(values[1] / values[0] - 1.0) < 0.15


def test_cores_describe_pair_term(gs100):
    _, indicator = gs100.cores_l
    assert np.allclose(indicator.radial, gs100.blocks_l.pair_coefficient * gs100.kernels.pack_l.field ** 2)
    assert gs100.distance().H_hs >= 0.0


def test_invalid_assembly_inputs(gs100):
    ks = gs100.kernels
    with pytest.raises(ConfigError):
        _blocks(gs100, terms=("made_up",))
    with pytest.raises(ConfigError):
        _blocks(gs100, s_nodes=2)
    with pytest.raises(ConfigError):
        assemble_blocks(ks.pack_l, ks.limiting, ks.scattering, gs100.eta_dot_n)
    with pytest.raises(ConfigError):
        assemble_blocks(ks.pack_n, ks.modified, ks.scattering, None)
    with pytest.raises(ConfigError):
        kappa(ks.pack_n, ks.modified, ks.scattering, gs100.eta_dot_n, pairing="imag")
