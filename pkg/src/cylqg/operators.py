"""Fourth-order difference operators on the cylinder grid.

Radial derivatives act on azimuthal coefficients, with two ghost nodes
inside the axis from the parity ``u_m(-r) = (-1)^m u_m(r)`` and one-sided
five-point stencils at the wall.  Theta derivatives are spectral.  Vertical
derivatives use the same five-point stencils, one-sided at both lids.
"""
from __future__ import annotations

import numpy as np

from .geometry import CylGrid, theta_forward, theta_inverse

# 4th-order stencils on a uniform grid
_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FWD = {  # one-sided first derivative at offset 0 from nodes 0..4, and at offset 1
    0: np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    1: np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0,
}


def _shifted_sum(weights, ext, start, count):
    out = weights[0] * ext[start:start + count]
    for k in range(1, len(weights)):
        out = out + weights[k] * ext[start + k:start + k + count]
    return out


def _one_sided_ends(v, out):
    """Fill rows 0, 1 and n-2, n-1 of ``out`` with one-sided 5-point stencils."""
    out[0] = _shifted_sum(_FWD[0], v, 0, 1)[0]
    out[1] = _shifted_sum(_FWD[1], v, 0, 1)[0]
    rev = v[::-1]
    out[-1] = -_shifted_sum(_FWD[0], rev, 0, 1)[0]
    out[-2] = -_shifted_sum(_FWD[1], rev, 0, 1)[0]


def radial_derivative(coeffs, dr, m):
    """4th-order ``d/dr`` of azimuthal coefficients ``coeffs[i, ...]``.

    ``m`` is the mode number (an int, or an array broadcasting against
    ``coeffs[0]``).  The two ghost nodes inside the axis use
    ``u_m(-r) = (-1)^m u_m(r)``; the last two nodes use one-sided stencils.
    """
    n = coeffs.shape[0]
    sign = np.where(np.asarray(m) % 2, -1.0, 1.0)
    ext = np.concatenate([sign * coeffs[1::-1], coeffs], axis=0)  # ghosts r_{-2}, r_{-1}
    out = np.empty_like(coeffs)
    out[:n - 2] = _shifted_sum(_C1, ext, 0, n - 2)
    rev = coeffs[::-1]
    out[n - 1] = -_shifted_sum(_FWD[0], rev, 0, 1)[0]
    out[n - 2] = -_shifted_sum(_FWD[1], rev, 0, 1)[0]
    return out / dr


def polar_gradient(values, grid: CylGrid):
    """``(d_r u, (1/r) d_theta u)`` of a nodal array with axes (r, theta, ...).

    Theta derivatives are spectral (the Nyquist mode derivative is set to 0).
    """
    c = theta_forward(values)
    m = np.arange(c.shape[1]).reshape((1, -1) + (1,) * (values.ndim - 2))
    dr_c = radial_derivative(c, grid.dr, m[0])
    ik = 1j * m * (2 * m != grid.n_theta)
    d_r = theta_inverse(dr_c, grid.n_theta)
    d_th = theta_inverse(ik * c, grid.n_theta)
    r = grid.r_nodes.reshape((-1,) + (1,) * (values.ndim - 1))
    return d_r, d_th / r


def fd4(values, h, axis=-1):
    """4th-order first derivative along ``axis`` of uniformly spaced samples."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = v.shape[0]
    if n < 5:
        raise ValueError("need at least 5 samples")
    out = np.empty_like(v)
    out[2:n - 2] = _shifted_sum(_C1, v, 0, n - 4)
    _one_sided_ends(v, out)
    return np.moveaxis(out / h, 0, axis)


def cartesian_gradient(values, grid: CylGrid):
    """``(d_x u, d_y u)`` of an array with axes (r, theta, ...)."""
    a, b = polar_gradient(values, grid)
    th = grid.theta_nodes.reshape((1, -1) + (1,) * (values.ndim - 2))
    c, s = np.cos(th), np.sin(th)
    return c * a - s * b, s * a + c * b
