"""Discrete Sobolev proxy norms built from composed first-derivative operators.

``D_x``, ``D_y`` and ``D_z`` are the operators of :mod:`cylqg.operators`
(4th-order radial and vertical stencils, spectral in theta, Cartesian
components by the polar chain rule).  A multi-index derivative ``D^alpha``
applies ``D_z`` first, then ``D_y``, then ``D_x``; the discrete operators
commute only up to truncation error, so the order is fixed.

The norm is ``||u||_{H^s}^2 = sum_{k<=s} sum_{|alpha|=k} k!/alpha! ||D^alpha u||^2``,
which for smooth functions equals the Fourier weight ``sum_k |xi|^{2k}``.
Second-order composed differences do not converge near the axis beyond
two derivatives (each derivative divides the error by ``r_0 ~ dr``), which
is why the 4th-order operators are used here.
"""
from __future__ import annotations

from itertools import product
from math import factorial

import numpy as np

from .geometry import CylGrid
from .operators import cartesian_gradient, fd4


def d_x(values, grid):
    return cartesian_gradient(values, grid)[0]


def d_y(values, grid):
    return cartesian_gradient(values, grid)[1]


def d_z(values, grid, axis=-1):
    return fd4(values, grid.dz, axis)


def multi_indices(order, dim):
    return [a for a in product(range(order + 1), repeat=dim) if sum(a) == order]


def multinomial(alpha):
    k = sum(alpha)
    out = factorial(k)
    for a in alpha:
        out //= factorial(a)
    return out


class DerivativeCache:
    """Memoized ``D^alpha u`` for a nodal array (volume, disk or z-line)."""

    def __init__(self, values, grid: CylGrid, kind):
        self.grid = grid
        self.kind = kind
        self.dim = {"volume": 3, "surface": 2, "zline": 1}[kind]
        self._cache = {(0,) * self.dim: np.asarray(values, dtype=float)}

    def __call__(self, alpha):
        alpha = tuple(alpha)
        if alpha in self._cache:
            return self._cache[alpha]
        g = self.grid
        a = list(alpha)
        if self.kind == "zline":
            prev = self((a[0] - 1,))
            out = d_z(prev, g)
        elif a[0] > 0 or a[1] > 0:
            # D_x and D_y of the same array share one polar gradient
            i = 0 if a[0] > 0 else 1
            a[i] -= 1
            parent = tuple(a)
            gx, gy = cartesian_gradient(self(parent), g)
            bx, by = list(parent), list(parent)
            bx[0] += 1
            by[1] += 1
            self._cache.setdefault(tuple(bx), gx)
            self._cache.setdefault(tuple(by), gy)
            return self._cache[alpha]
        else:
            a[2] -= 1
            out = d_z(self(a), g)
        self._cache[alpha] = out
        return out


def _integrate(values, grid, kind):
    if kind == "volume":
        return grid.integrate(values)
    if kind == "surface":
        return grid.integrate_disk(values)
    return grid.integrate_z(values)


def seminorm_sq(values, grid: CylGrid, k, kind="volume", cache=None):
    """``||grad^k u||^2`` with multinomial weights."""
    cache = cache or DerivativeCache(values, grid, kind)
    tot = 0.0
    for alpha in multi_indices(k, cache.dim):
        tot += multinomial(alpha) * _integrate(cache(alpha) ** 2, grid, kind)
    return tot


def sobolev_norm(values, grid: CylGrid, s, kind="volume"):
    """Discrete ``H^s`` proxy norm of a volume, surface or z-line array."""
    cache = DerivativeCache(values, grid, kind)
    return float(np.sqrt(sum(seminorm_sq(values, grid, k, kind, cache) for k in range(s + 1))))


def data_norm(F, G_bottom, G_top, j, grid: CylGrid, s=4):
    """``||F||_{H^s} + ||G||_{H^s} + ||j||_{H^s}`` with G measured on both lids."""
    g = np.sqrt(sobolev_norm(G_bottom, grid, s, "surface") ** 2
                + sobolev_norm(G_top, grid, s, "surface") ** 2)
    return (sobolev_norm(F, grid, s, "volume") + g + sobolev_norm(j, grid, s, "zline"))


def spectral_sobolev_norm(values, lengths, s):
    """``H^s`` norm of a periodic box sample by FFT (``sum_k |xi|^{2k}`` weight).

    ``values`` samples the function on a uniform periodic grid of the box
    with side lengths ``lengths``.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape
    coef = np.fft.fftn(values) / values.size
    xi2 = np.zeros(n)
    for ax, (m, L) in enumerate(zip(n, lengths)):
        k = 2 * np.pi * np.fft.fftfreq(m, d=L / m)
        shape = [1] * len(n)
        shape[ax] = m
        xi2 = xi2 + k.reshape(shape) ** 2
    weight = sum(xi2 ** k for k in range(s + 1))
    vol = float(np.prod(lengths))
    return float(np.sqrt(vol * np.sum(weight * np.abs(coef) ** 2)))
