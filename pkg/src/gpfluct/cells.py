"""Integrals of radial functions over a cubic grid cell [-h/2, h/2]^3.

The cell integral of F(|x|) reduces to int_0^{h sqrt(3)/2} F(r) S(r) dr with
S(r) the area of the sphere of radius r that lies inside the cube.  S is
computed by integrating the azimuthal measure over the polar coordinate on
pieces where it is smooth.
"""

import math

import numpy as np

_GL_NODES = 48
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_NODES)


def _gl(a, b):
    """Gauss-Legendre nodes and weights on [a, b] (arrays broadcast)."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (_GL_X + 1.0), half * _GL_W


def _azimuth_inside(c):
    """Measure of phi in [0, 2 pi) with |cos phi| <= c and |sin phi| <= c."""
    c = np.minimum(c, 1.0)
    ac = np.arccos(c)
    overlap = np.maximum(ac - np.arcsin(c), 0.0)
    return 2.0 * math.pi - 8.0 * ac + 4.0 * overlap


def sphere_area_in_cube(r, h):
    """Area of {|x| = r} inside the cube [-h/2, h/2]^3, vectorised over r."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    full = r <= 0.5 * h
    out[full] = 4.0 * math.pi * r[full] ** 2
    part = (~full) & (r < 0.5 * math.sqrt(3.0) * h)
    if np.any(part):
        rr = r[part]
        a = 0.5 * h / rr
        zmax = np.minimum(a, 1.0)
        z2 = np.sqrt(np.maximum(1.0 - a ** 2, 0.0))
        z1 = np.sqrt(np.maximum(1.0 - 2.0 * a ** 2, 0.0))
        z2 = np.minimum(z2, zmax)
        z1 = np.minimum(z1, z2)
        total = np.zeros_like(rr)
        # [0, z1]: both face pairs cut, smooth
        z, w = _gl(np.zeros_like(z1), z1)
        total += np.sum(w * _azimuth_inside(a[:, None] / np.sqrt(1.0 - z ** 2)), axis=1)
        # [z1, z2]: square-root behaviour at z2, removed by z = z2 - (z2 - z1) t^2
        t, wt = _gl(np.zeros_like(z1), np.ones_like(z1))
        span = (z2 - z1)[:, None]
        z = z2[:, None] - span * t ** 2
        jac = 2.0 * span * t
        total += np.sum(wt * jac * _azimuth_inside(a[:, None] / np.sqrt(np.maximum(1.0 - z ** 2, 1e-300))), axis=1)
        # [z2, zmax]: full circle of latitude inside
        total += 2.0 * math.pi * (zmax - z2)
        out[part] = 2.0 * rr ** 2 * total
    return out


def cell_radial_integral(fn, h, support=None, breakpoints=(), pieces_nodes=64):
    """int over the cell [-h/2, h/2]^3 of fn(|x|) d^3x.

    `fn` must accept an array of radii in (0, support]; `breakpoints` lists
    radii where fn is not smooth.
    """
    rmax = 0.5 * math.sqrt(3.0) * h
    if support is not None:
        rmax = min(rmax, support)
    if rmax <= 0.0:
        return 0.0
    cuts = {0.0, rmax}
    for c in (0.5 * h, h / math.sqrt(2.0), *breakpoints):
        if 0.0 < c < rmax:
            cuts.add(float(c))
    cuts = sorted(cuts)
    x, w = np.polynomial.legendre.leggauss(pieces_nodes)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        r = a + 0.5 * (b - a) * (x + 1.0)
        total += 0.5 * (b - a) * np.sum(w * fn(r) * sphere_area_in_cube(r, h))
    return float(total)
