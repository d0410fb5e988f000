"""Closed-form manufactured solutions for the elliptic problem.

A case is a sum of separable terms ``A rho(r) cos(m theta) zeta(z)``.  The
data ``f = L psi``, ``g = d_nu psi`` and ``j = mean_circle d_r psi(1, ., z)``
are obtained by differentiating the catalogue profiles in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import EllipticData
from .geometry import CylGrid, ScalarField3D, SurfaceField

# radial profiles: (rho, rho', rho'')
RADIAL = {
    # rho'(1) = 1, even in r: usable for m = 0
    "r2": (lambda r: r ** 2 - r ** 4 / 4, lambda r: 2 * r - r ** 3, lambda r: 2 - 3 * r ** 2),
    # vanishes at r = 1 and behaves like r^2 at the axis: m = 2 (or 0)
    "r2_dirichlet": (lambda r: r ** 2 - r ** 4, lambda r: 2 * r - 4 * r ** 3,
                     lambda r: 2 - 12 * r ** 2),
    # vanishes at r = 1 and behaves like r at the axis: m = 1
    "r1_dirichlet": (lambda r: r - r ** 3, lambda r: 1 - 3 * r ** 2, lambda r: -6 * r),
    "one_minus_r2_sq": (lambda r: (1 - r ** 2) ** 2, lambda r: -4 * r * (1 - r ** 2),
                        lambda r: -4 + 12 * r ** 2),
}


def _vertical(name, h):
    k = np.pi / h
    if name == "cos":
        return (lambda z: np.cos(k * z), lambda z: -k * np.sin(k * z),
                lambda z: -k * k * np.cos(k * z))
    if name == "quad":
        return (lambda z: 1 + z ** 2, lambda z: 2 * z, lambda z: 2 + 0 * z)
    if name == "sin":
        return (lambda z: np.sin(k * z), lambda z: k * np.cos(k * z),
                lambda z: -k * k * np.sin(k * z))
    if name == "one":
        return (lambda z: 1 + 0 * z, lambda z: 0 * z, lambda z: 0 * z)
    raise KeyError(f"unknown vertical profile {name!r}")


# (amplitude, radial id, azimuthal mode, vertical id)
CATALOGUE = {
    "zero": [],
    "axisymmetric-neumann": [(1.0, "r2", 0, "quad")],
    "m2-dirichlet": [(1.0, "r2_dirichlet", 2, "cos")],
    "mixed": [(1.0, "r2", 0, "quad"), (0.5, "r1_dirichlet", 1, "sin"),
              (0.5, "r2_dirichlet", 2, "cos"), (0.25, "r2_dirichlet", 0, "sin")],
}


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    terms: tuple
    grid: CylGrid
    profile: object
    data: EllipticData
    psi_exact: np.ndarray

    def sample(self, r, theta, z):
        """``(psi, f, g_bottom, g_top, j)`` on the tensor grid r x theta x z."""
        return sample_terms(self.terms, self.profile, r, theta, z)

    @property
    def psi_exact_meanfree(self):
        return self.psi_exact - self.grid.integrate(self.psi_exact) / (np.pi * self.grid.h)


def sample_terms(terms, profile, r, theta, z):
    h = profile.h
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    R, TH, Z = np.meshgrid(r, theta, z, indexing="ij")
    psi = np.zeros(R.shape)
    f = np.zeros(R.shape)
    gb = np.zeros(R.shape[:2])
    gt = np.zeros(R.shape[:2])
    j = np.zeros(z.shape)
    lam = profile(Z)
    dlam = profile.derivative(Z, 1)
    for amp, rid, m, zid in terms:
        rho, drho, d2rho = RADIAL[rid]
        zeta, dzeta, d2zeta = _vertical(zid, h)
        ang = np.cos(m * TH)
        psi += amp * rho(R) * ang * zeta(Z)
        radial = d2rho(R) + drho(R) / R - m * m * rho(R) / R ** 2
        f += amp * ang * (radial * zeta(Z) + rho(R) * (lam * d2zeta(Z) + dlam * dzeta(Z)))
        gb += -amp * rho(R[:, :, 0]) * ang[:, :, 0] * dzeta(0.0)
        gt += amp * rho(R[:, :, 0]) * ang[:, :, 0] * dzeta(h)
        if m == 0:
            j += amp * drho(1.0) * zeta(z)
    return psi, f, gb, gt, j


def make_manufactured(case_id, grid: CylGrid, profile) -> ManufacturedCase:
    """Build a catalogue case (or an explicit list of terms) on ``grid``."""
    if isinstance(case_id, str):
        if case_id not in CATALOGUE:
            raise KeyError(f"unknown manufactured case {case_id!r}; "
                           f"known: {', '.join(CATALOGUE)}")
        terms = CATALOGUE[case_id]
    else:
        terms = list(case_id)
    terms = tuple(tuple(t) for t in terms)
    psi, f, gb, gt, j = sample_terms(terms, profile, grid.r_nodes, grid.theta_nodes, grid.z_nodes)
    data = EllipticData(ScalarField3D(grid, f), SurfaceField(grid, "bottom", gb),
                        SurfaceField(grid, "top", gt), j)
    return ManufacturedCase(terms, grid, profile, data, psi)
