"""Verification batteries: commutator estimate, SQG comparison, manufactured convergence.

Reports are small dataclasses with ``rows()`` for CSV output and
``summary()`` for a human-readable digest.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import jn_zeros, jv

from .elliptic import EllipticData, EllipticSolver
from .geometry import CylGrid, ScalarField3D, SurfaceField, make_grid, theta_forward, theta_inverse
from .manufactured import CATALOGUE, ManufacturedCase, make_manufactured  # noqa: F401
from .norms import (DerivativeCache, data_norm, multi_indices, multinomial,  # noqa: F401
                    seminorm_sq, sobolev_norm)
from .stratification import StratificationProfile
from .transport import velocity_from_stream


def write_report_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# -- commutator battery ------------------------------------------------------

COMMUTATOR_COARSE = (12, 24, 9)
COMMUTATOR_FINE = (24, 48, 17)


@dataclass
class PlaneWaveSum:
    """``c + sum_k a_k cos(k . x + phi_k)`` with integer wavevectors, |k_i| <= band."""

    const: float
    waves: np.ndarray   # (n, 3)
    amps: np.ndarray
    phases: np.ndarray

    @classmethod
    def random(cls, rng: np.random.Generator, band=2, n_waves=6):
        waves = rng.integers(-band, band + 1, size=(n_waves, 3)).astype(float)
        return cls(float(rng.normal()), waves, rng.normal(size=n_waves),
                   rng.uniform(0, 2 * np.pi, n_waves))

    @classmethod
    def constant(cls, c):
        return cls(float(c), np.zeros((0, 3)), np.zeros(0), np.zeros(0))

    def sample(self, grid: CylGrid):
        X, Y, Z = grid.xyz()
        out = np.full(grid.shape, self.const)
        for k, a, p in zip(self.waves, self.amps, self.phases):
            out += a * np.cos(k[0] * X + k[1] * Y + k[2] * Z + p)
        return out


def commutator_terms(f, g, grid: CylGrid, s):
    """``(lhs, rhs)`` of the commutator estimate at order s for nodal arrays f, g.

    ``lhs = (sum_{|alpha|=s} s!/alpha! ||D^alpha(fg) - f D^alpha g||^2)^{1/2}``,
    ``rhs = ||grad f||_inf ||grad^{s-1} g|| + ||g||_inf ||grad^s f||``.
    """
    cf = DerivativeCache(f, grid, "volume")
    cg = DerivativeCache(g, grid, "volume")
    cfg = DerivativeCache(f * g, grid, "volume")
    lhs = 0.0
    for alpha in multi_indices(s, 3):
        lhs += multinomial(alpha) * grid.integrate((cfg(alpha) - f * cg(alpha)) ** 2)
    grad_f = np.sqrt(sum(cf(a) ** 2 for a in multi_indices(1, 3)))
    rhs = (float(np.max(grad_f)) * np.sqrt(seminorm_sq(g, grid, s - 1, cache=cg))
           + float(np.max(np.abs(g))) * np.sqrt(seminorm_sq(f, grid, s, cache=cf)))
    return float(np.sqrt(lhs)), float(rhs)


@dataclass
class CommutatorReport:
    s: int
    trials: int
    seed: int
    coarse_ratios: np.ndarray
    fine_ratios: np.ndarray

    @property
    def max_coarse(self):
        return float(np.max(self.coarse_ratios))

    @property
    def max_fine(self):
        return float(np.max(self.fine_ratios))

    @property
    def stability(self):
        """Fine-grid max ratio over coarse-grid max ratio."""
        return self.max_fine / self.max_coarse

    @property
    def passed(self):
        return bool(np.isfinite(self.max_fine) and self.stability <= 1.5)

    HEADER = ("s", "trial", "ratio_coarse", "ratio_fine")

    def rows(self):
        return [(self.s, i, float(a), float(b))
                for i, (a, b) in enumerate(zip(self.coarse_ratios, self.fine_ratios))]

    def summary(self):
        return (f"commutator s={self.s}: max ratio coarse {self.max_coarse:.4g}, "
                f"fine {self.max_fine:.4g}, fine/coarse {self.stability:.3f} "
                f"({'PASS' if self.passed else 'FAIL'}, limit 1.5)")


def commutator_check(s, trials=20, seed=0, coarse=COMMUTATOR_COARSE, fine=COMMUTATOR_FINE,
                     h=1.0, band=2) -> CommutatorReport:
    """Seeded random battery of the commutator estimate on two grid resolutions.

    Each trial draws a band-limited pair (f, g) once and samples it on both
    grids, so the two ratios refer to the same functions.
    """
    if s not in (2, 3, 4):
        raise ValueError(f"s must be 2, 3 or 4, got {s}")
    if trials < 10:
        raise ValueError(f"need at least 10 trials, got {trials}")
    grids = [make_grid(*coarse, h), make_grid(*fine, h)]
    out = [[], []]
    for t in range(trials):
        rng = np.random.default_rng([seed, s, t])
        f = PlaneWaveSum.random(rng, band)
        g = PlaneWaveSum.random(rng, band)
        for i, grid in enumerate(grids):
            lhs, rhs = commutator_terms(f.sample(grid), g.sample(grid), grid, s)
            out[i].append(lhs / rhs if rhs > 0 else 0.0)
    return CommutatorReport(s, trials, seed, np.array(out[0]), np.array(out[1]))


# -- SQG comparison ----------------------------------------------------------

def bessel_dirichlet_extension(theta0: np.ndarray, grid: CylGrid, n_radial=None):
    """Harmonic extension with ``psi = 0`` on the wall, ``-d_z psi = theta0`` at z=0,
    ``d_z psi = 0`` at z=h, by the Dirichlet eigenfunction expansion of the disk.

    Each disk mode ``J_m(k r) e^{i m theta}`` (``J_m(k) = 0``) extends as
    ``cosh(k (h - z)) / (k sinh(k h))``.  Coefficients come from the radial
    control-volume quadrature of the grid.
    """
    n_radial = n_radial or grid.n_r
    h = grid.h
    r = grid.r_nodes
    vr = grid.radial_volumes
    z = grid.z_nodes
    c = theta_forward(np.asarray(theta0, dtype=float))          # (r, m)
    out = np.zeros((grid.n_r, grid.n_modes, grid.n_z), dtype=complex)
    for m in range(grid.n_modes):
        if not np.any(c[:, m]):
            continue
        ks = jn_zeros(m, n_radial)
        for k in ks:
            phi = jv(m, k * r)
            coef = np.sum(vr * c[:, m] * phi) / (0.5 * jv(m + 1, k) ** 2)
            # cosh(k(h-z)) / sinh(kh), overflow-free
            vert = (np.exp(-k * z) * (1 + np.exp(-2 * k * (h - z)))
                    / (1 - np.exp(-2 * k * h)))
            out[:, m, :] += (coef / k) * phi[:, None] * vert[None, :]
    return theta_inverse(out, grid.n_theta)


@dataclass
class SQGReport:
    grid: tuple
    trace_variation_A: float
    trace_sup_B: float
    velocity_discrepancy: float
    velocity_norm_B: float

    HEADER = ("n_r", "n_theta", "n_z", "trace_variation_A", "trace_sup_B",
              "velocity_discrepancy", "velocity_norm_B")

    def row(self):
        return (*self.grid, self.trace_variation_A, self.trace_sup_B,
                self.velocity_discrepancy, self.velocity_norm_B)

    def summary(self):
        return (f"sqg-compare {self.grid}: lateral trace variation of psi_A "
                f"{self.trace_variation_A:.4e}, psi_B trace {self.trace_sup_B:.1e}, "
                f"relative velocity discrepancy {self.velocity_discrepancy:.4f}")


def _velocity_l2(u_x, u_y, grid):
    return float(np.sqrt(grid.integrate(u_x ** 2 + u_y ** 2)))


def sqg_compare(theta0, grid: CylGrid = None, solver: EllipticSolver = None) -> SQGReport:
    """Compare the flux-datum reconstruction with the Dirichlet (spectral SQG) one.

    Setting: ``lambda = 1``, ``beta0 = 0``, ``F = 0``, bottom buoyancy
    ``theta0``, zero top buoyancy and the constant j that closes the
    solvability condition.  ``trace_variation_A`` is
    ``max |psi_A(1, theta, z) - mean psi_A(1, ., .)|``: a gauge-invariant
    measure of how far psi_A is from having a constant wall value.
    """
    if isinstance(theta0, SurfaceField):
        grid = grid or theta0.grid
        theta0 = theta0.values
    theta0 = np.asarray(theta0, dtype=float)
    profile = StratificationProfile.constant(1.0, grid.h)
    solver = solver or EllipticSolver(grid, profile)
    j = np.full(grid.n_z, -grid.integrate_disk(theta0) / (2 * np.pi * grid.h))
    data = EllipticData(ScalarField3D(grid, np.zeros(grid.shape)),
                        SurfaceField(grid, "bottom", theta0),
                        SurfaceField(grid, "top", np.zeros(grid.disk_shape)), j)
    psi_a = solver.solve(data).psi.values
    psi_b = bessel_dirichlet_extension(theta0, grid)
    wall = psi_a[-1]
    wall_mean = np.sum(grid.quad_weights_circle[:, None] * wall * grid.quad_weights_zline) / (
        2 * np.pi * grid.h)
    va = velocity_from_stream(ScalarField3D(grid, psi_a))
    vb = velocity_from_stream(ScalarField3D(grid, psi_b))
    nb = _velocity_l2(vb.u_x, vb.u_y, grid)
    diff = _velocity_l2(va.u_x - vb.u_x, va.u_y - vb.u_y, grid)
    return SQGReport((grid.n_r, grid.n_theta, grid.n_z), float(np.max(np.abs(wall - wall_mean))),
                     float(np.max(np.abs(psi_b[-1]))), diff / nb if nb > 0 else 0.0, nb)


def first_eigenfunction_datum(grid: CylGrid, amplitude=1.0):
    """``J_0(j_{0,1} r)`` on the disk nodes."""
    k = jn_zeros(0, 1)[0]
    return amplitude * np.broadcast_to(jv(0, k * grid.r_nodes)[:, None], grid.disk_shape).copy()


def sqg_refinement(sizes=((8, 16, 9), (16, 32, 17), (32, 64, 33)), h=1.0, datum=None):
    """SQG comparison over a refinement sweep; ``datum(grid)`` gives theta0."""
    datum = datum or first_eigenfunction_datum
    reports = []
    for n in sizes:
        g = make_grid(*n, h)
        reports.append(sqg_compare(datum(g), g))
    return reports


# -- manufactured convergence ------------------------------------------------

@dataclass
class ConvergenceRow:
    case: str
    n: int
    error: float
    order: float
    seconds: float


def manufactured_convergence(cases=("axisymmetric-neumann", "m2-dirichlet", "mixed"),
                             sizes=(8, 16, 32), h=1.0, profile=None):
    """Relative L2 error of the mean-free solution on ``n x 2n x n+1`` grids."""
    profile = profile or StratificationProfile.constant(1.0, h)
    rows = []
    for case in cases:
        prev = None
        for n in sizes:
            g = make_grid(n, 2 * n, n + 1, h)
            mc = make_manufactured(case, g, profile)
            t0 = time.perf_counter()
            sol = EllipticSolver(g, profile).solve(mc.data)
            dt = time.perf_counter() - t0
            u = sol.psi.values - sol.mean / (np.pi * h)
            ex = mc.psi_exact_meanfree
            scale = np.sqrt(g.integrate(ex ** 2)) or 1.0
            err = float(np.sqrt(g.integrate((u - ex) ** 2)) / scale)
            order = float(np.log2(prev / err)) if prev and err > 0 else float("nan")
            rows.append(ConvergenceRow(case, n, err, order, dt))
            prev = err
    return rows
