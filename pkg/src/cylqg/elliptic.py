"""Reconstruction of the stream function from (f, g, j).

Solves

    L u = f                    in the cylinder,   L = lap_xy + d_z(lambda d_z)
    d_nu u = g                 on the lids (outward normal),
    u(r=1, theta, z) = u(z)    on the lateral wall,
    mean over the circle of d_r u(1, ., z) = j(z),

with the volume integral of u fixed to zero.  ``j`` is the *average* flux
over each boundary circle, so the lateral wall carries the total flux
``2 pi j(z)``; the integral solvability condition reads

    int f = 2 pi int_0^h j dz + int_bottom lambda(0) g + int_top lambda(h) g.

The solve is split by azimuthal mode.  Mode 0 (the theta-average) carries
the Neumann condition from ``j`` and the mean-zero constraint (a Lagrange
multiplier); every other mode has ``u_m(1, z) = 0``.  Each mode is a
2-D (r, z) finite-volume problem on the control volumes of
:class:`~cylqg.geometry.CylGrid`; the matrices are symmetric and factored
once per solver.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import CompatibilityViolation, NonConvergence
from .geometry import (CylGrid, ScalarField3D, SurfaceField, mode_numbers, theta_forward,
                       theta_inverse)
from .stratification import StratificationProfile, chart_inverse, solve_vertical_chart

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EllipticData:
    f: ScalarField3D
    g_bottom: SurfaceField
    g_top: SurfaceField
    j: np.ndarray

    def __post_init__(self):
        g = self.f.grid
        if not (self.g_bottom.grid.same_as(g) and self.g_top.grid.same_as(g)):
            raise ValueError("f and g live on different grids")
        if self.g_bottom.surface != "bottom" or self.g_top.surface != "top":
            raise ValueError("g_bottom/g_top surface tags are swapped")
        j = np.array(self.j, dtype=float).reshape(-1)
        if j.shape != (g.n_z,):
            raise ValueError(f"j must have {g.n_z} samples, got {j.shape}")
        j.setflags(write=False)
        object.__setattr__(self, "j", j)

    @property
    def grid(self) -> CylGrid:
        return self.f.grid

    @classmethod
    def zeros(cls, grid):
        z2 = np.zeros(grid.disk_shape)
        return cls(ScalarField3D(grid, np.zeros(grid.shape)), SurfaceField(grid, "bottom", z2),
                   SurfaceField(grid, "top", z2), np.zeros(grid.n_z))

    def scaled(self, c):
        g = self.grid
        return EllipticData(ScalarField3D(g, c * self.f.values),
                            SurfaceField(g, "bottom", c * self.g_bottom.values),
                            SurfaceField(g, "top", c * self.g_top.values), c * self.j)

    def __add__(self, other):
        g = self.grid
        return EllipticData(ScalarField3D(g, self.f.values + other.f.values),
                            SurfaceField(g, "bottom", self.g_bottom.values + other.g_bottom.values),
                            SurfaceField(g, "top", self.g_top.values + other.g_top.values),
                            self.j + other.j)


@dataclass(frozen=True, eq=False)
class StreamFunction:
    psi: ScalarField3D
    lateral_trace: np.ndarray
    mean: float
    info: dict = field(default_factory=dict, compare=False)

    @property
    def grid(self):
        return self.psi.grid

    @classmethod
    def from_values(cls, grid, values, info=None):
        """Wrap an arbitrary nodal array; the trace is the circle average at r = 1."""
        v = np.asarray(values, dtype=float)
        trace = v[-1].mean(axis=0)
        return cls(ScalarField3D(grid, v), trace, grid.integrate(v), info or {})

    @classmethod
    def zeros(cls, grid):
        return cls.from_values(grid, np.zeros(grid.shape))

    def lateral_deviation(self):
        """max over theta, z of |psi(1, theta, z) - lateral_trace(z)|."""
        return float(np.max(np.abs(self.psi.values[-1] - self.lateral_trace[None, :])))


# -- vertical geometry ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VerticalGeometry:
    """Vertical part of the finite-volume operator.

    ``nodes`` are physical heights where data live, ``weights`` integrate in
    physical ``dz``, ``face_coef[k]`` multiplies ``u[k+1] - u[k]`` in the
    vertical flux, and the lids carry ``lambda`` times the Neumann datum.
    """

    nodes: np.ndarray
    weights: np.ndarray
    face_coef: np.ndarray
    lam_bottom: float
    lam_top: float
    kind: str = "default"

    @classmethod
    def default(cls, grid: CylGrid, profile: StratificationProfile):
        lam_faces = profile(grid.z_faces)
        return cls(np.asarray(grid.z_nodes), np.asarray(grid.quad_weights_zline),
                   lam_faces / grid.dz, float(profile(0.0)), float(profile(grid.h)))

    @classmethod
    def chart(cls, grid: CylGrid, profile: StratificationProfile, ode_tol=1e-12):
        """Uniform nodes in the chart variable s, where ``dz/ds = sqrt(lambda(z))``.

        In s the vertical operator is ``lambda^{-1/2} d_s(lambda^{1/2} d_s)``,
        i.e. unit principal coefficient plus a first-order drift.
        """
        n = grid.n_z
        s_top = float(chart_inverse(profile, grid.h)[0])
        ds = s_top / (n - 1)
        s = np.arange(n) * ds
        s_faces = (np.arange(n - 1) + 0.5) * ds
        ch = solve_vertical_chart(profile, ode_tol, z_nodes=np.linspace(0.0, s_top, 5))
        z = ch.theta(s)
        z[0], z[-1] = 0.0, grid.h
        z_faces = ch.theta(s_faces)
        ws = np.full(n, ds)
        ws[0] = ws[-1] = 0.5 * ds
        root = np.sqrt(profile(z))
        return cls(z, ws * root, np.sqrt(profile(z_faces)) / ds,
                   float(profile(0.0)), float(profile(grid.h)), "chart")


# -- finite-volume operator -------------------------------------------------

class EllipticSolver:
    """Factored per-mode finite-volume systems for one grid and profile.

    ``lateral='mixed'`` is the problem with the lateral flux datum;
    ``lateral='dirichlet'`` imposes ``u = 0`` on the wall for every mode.
    """

    def __init__(self, grid: CylGrid, profile: StratificationProfile, vertical=None,
                 solver_tol=1e-8):
        self.grid = grid
        self.profile = profile
        self.vertical = vertical or VerticalGeometry.default(grid, profile)
        self.solver_tol = solver_tol
        self._lu = {}

    # assembly ---------------------------------------------------------------

    def _stiffness(self, m, n_rad):
        """Symmetric positive semi-definite stiffness for mode m.

        Unknowns are radial nodes ``0..n_rad-1`` times all vertical nodes,
        ordered ``i * n_z + k``.  When ``n_rad < n_r`` the wall node is a
        Dirichlet node with value 0.
        """
        g, v = self.grid, self.vertical
        nz = g.n_z
        vr = g.radial_volumes[:n_rad]
        r = g.r_nodes[:n_rad]
        idx = np.arange(n_rad * nz).reshape(n_rad, nz)
        diag = (m * m) * (vr / r ** 2)[:, None] * v.weights[None, :]

        # radial faces between i and i+1 (coefficient per unit z-measure)
        a = (g.r_faces / g.dr)[:, None] * v.weights[None, :]
        inner = min(n_rad, g.n_r) - 1
        p_r, q_r, c_r = idx[:inner].ravel(), idx[1:inner + 1].ravel(), a[:inner].ravel()
        if n_rad < g.n_r:
            diag[n_rad - 1] += a[n_rad - 1]
        # vertical faces between k and k+1
        b = vr[:, None] * v.face_coef[None, :]
        p_z, q_z, c_z = idx[:, :-1].ravel(), idx[:, 1:].ravel(), b.ravel()

        p = np.concatenate([p_r, p_z])
        q = np.concatenate([q_r, q_z])
        c = np.concatenate([c_r, c_z])
        rows = np.concatenate([p, q, p, q])
        cols = np.concatenate([q, p, p, q])
        vals = np.concatenate([-c, -c, c, c])
        n = n_rad * nz
        A = sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return A + sps.diags(diag.ravel())

    def _factor(self, m, lateral):
        key = (m, lateral)
        if key in self._lu:
            return self._lu[key]
        g = self.grid
        if m == 0 and lateral == "mixed":
            n_rad = g.n_r
            A = self._stiffness(0, n_rad)
            w = (g.radial_volumes[:, None] * self.vertical.weights[None, :]).ravel()
            K = sps.bmat([[A, sps.csr_matrix(w[:, None])], [sps.csr_matrix(w[None, :]), None]])
        else:
            n_rad = g.n_r - 1
            K = A = self._stiffness(m, n_rad)
        lu = spla.splu(sps.csc_matrix(K))
        self._lu[key] = (lu, K, n_rad)
        return self._lu[key]

    def operator(self, m, lateral="mixed"):
        """Assembled matrix for mode m (bordered for the mixed mode-0 problem)."""
        return self._factor(m, lateral)[1]

    # right-hand side --------------------------------------------------------

    def _rhs(self, fm, gbm, gtm, j, m, n_rad, lateral):
        """``B - V f`` for one mode; f is (r, z), g are (r,)."""
        g, v = self.grid, self.vertical
        vr = g.radial_volumes[:n_rad]
        b = -(vr[:, None] * v.weights[None, :]) * fm[:n_rad]
        b[:, 0] += vr * v.lam_bottom * gbm[:n_rad]
        b[:, -1] += vr * v.lam_top * gtm[:n_rad]
        if m == 0 and lateral == "mixed":
            b[-1, :] += v.weights * j
        return b.ravel()

    def solve_modes(self, f_vals, gb_vals, gt_vals, j_vals, lateral="mixed"):
        """Solve from nodal arrays; returns coefficients ``(r, m, z)`` and info."""
        g = self.grid
        fh = theta_forward(np.asarray(f_vals, dtype=float))
        gbh = theta_forward(np.asarray(gb_vals, dtype=float)[:, :, None])[:, :, 0]
        gth = theta_forward(np.asarray(gt_vals, dtype=float)[:, :, None])[:, :, 0]
        j_vals = np.asarray(j_vals, dtype=float)
        out = np.zeros((g.n_r, g.n_modes, g.n_z), dtype=complex)
        worst = 0.0
        multiplier = 0.0
        for m in mode_numbers(g.n_theta):
            lu, K, n_rad = self._factor(m, lateral)
            b = self._rhs(fh[:, m, :], gbh[:, m], gth[:, m], j_vals, m, n_rad, lateral)
            bordered = K.shape[0] > n_rad * g.n_z
            if bordered:
                b = np.concatenate([b, [0.0]])
            B = np.stack([b.real, b.imag], axis=1)
            X = lu.solve(B)
            R = K @ X - B
            # one step of iterative refinement
            X -= lu.solve(R)
            R = K @ X - B
            scale = max(np.linalg.norm(B), 1e-300)
            rel = float(np.linalg.norm(R) / scale) if np.any(B) else float(np.linalg.norm(R))
            worst = max(worst, rel)
            x = X[:, 0] + 1j * X[:, 1]
            if bordered:
                multiplier = float(x[-1].real)
                x = x[:-1]
            out[:n_rad, m, :] = x.reshape(n_rad, g.n_z)
        if worst > self.solver_tol:
            raise NonConvergence(f"elliptic residual {worst:.3e} exceeds solver_tol {self.solver_tol:.3e}")
        return out, {"relative_residual": worst, "multiplier": multiplier}

    def solve_arrays(self, f_vals, gb_vals, gt_vals, j_vals, lateral="mixed"):
        coeffs, info = self.solve_modes(f_vals, gb_vals, gt_vals, j_vals, lateral)
        return theta_inverse(coeffs, self.grid.n_theta), info

    def solve(self, data: EllipticData, lateral="mixed") -> StreamFunction:
        if self.vertical.kind != "default":
            raise ValueError("solve() needs the default vertical geometry; use solve_arrays()")
        coeffs, info = self.solve_modes(data.f.values, data.g_bottom.values,
                                        data.g_top.values, data.j, lateral)
        values = theta_inverse(coeffs, self.grid.n_theta)
        trace = coeffs[-1, 0, :].real.copy()
        return StreamFunction(ScalarField3D(self.grid, values), trace,
                              self.grid.integrate(values), info)

    # diagnostics ------------------------------------------------------------

    def energy_from_modes(self, coeffs):
        """``<u, A u>`` summed over modes, i.e. the discrete int grad~u . grad u."""
        g, v = self.grid, self.vertical
        a = g.r_faces / g.dr
        vr = g.radial_volumes
        tot = 0.0
        for m in mode_numbers(g.n_theta):
            c = 1.0 if m == 0 or 2 * m == g.n_theta else 2.0
            u = coeffs[:, m, :]
            dr_ = np.abs(np.diff(u, axis=0)) ** 2
            dz_ = np.abs(np.diff(u, axis=1)) ** 2
            e = np.sum(a[:, None] * v.weights[None, :] * dr_)
            e += np.sum(vr[:, None] * v.face_coef[None, :] * dz_)
            e += m * m * np.sum((vr / g.r_nodes ** 2)[:, None] * v.weights[None, :] * np.abs(u) ** 2)
            tot += c * e
        return 2.0 * np.pi * tot


# -- compatibility ----------------------------------------------------------

def compatibility_imbalance(data: EllipticData, profile: StratificationProfile):
    """Signed ``int f - 2 pi int j - int lambda g`` with the grid quadrature."""
    g = data.grid
    vol = g.integrate(data.f.values)
    lat = 2.0 * np.pi * g.integrate_z(data.j)
    lids = (float(profile(0.0)) * g.integrate_disk(data.g_bottom.values)
            + float(profile(g.h)) * g.integrate_disk(data.g_top.values))
    return vol - lat - lids


def check_basic_compatibility(data: EllipticData, profile: StratificationProfile) -> float:
    """Absolute residual of the integral solvability condition.

    ``j`` is the circle-averaged flux, so it enters as ``2 pi int j``.
    """
    return abs(compatibility_imbalance(data, profile))


def project_compatible(data: EllipticData, profile, threshold=1e-3):
    """Remove a small compatibility imbalance by shifting ``j`` by a constant.

    Returns ``(data, shift)``.  Imbalances above ``threshold`` are not
    repaired: the data are genuinely incompatible.
    """
    imb = compatibility_imbalance(data, profile)
    if imb == 0.0:
        return data, 0.0
    if abs(imb) > threshold:
        raise CompatibilityViolation(abs(imb), threshold)
    shift = imb / (2.0 * np.pi * data.grid.h)
    log.warning("projecting elliptic data onto compatibility: imbalance %.3e, j shifted by %.3e",
                imb, shift)
    return replace(data, j=data.j + shift), shift


@dataclass
class CompatibilityReport:
    residuals: dict
    tol: float

    @property
    def passed(self):
        return all(v <= self.tol for v in self.residuals.values())

    def failures(self):
        return [k for k, v in self.residuals.items() if v > self.tol]

    def lines(self):
        return [f"{k:>18s}  {v:.3e}  {'ok' if v <= self.tol else 'FAIL'}"
                for k, v in self.residuals.items()]


def one_sided_derivative(values, dz, k, end):
    """k-th derivative (k = 1 or 3) at one end of a uniform 1-D sample array."""
    v = np.asarray(values, dtype=float)
    if end == "top":
        v = v[::-1]
    if k == 1:
        d = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * dz)
    elif k == 3:
        if v.size >= 5:
            d = (-5 * v[0] + 18 * v[1] - 24 * v[2] + 14 * v[3] - 3 * v[4]) / (2 * dz ** 3)
        else:
            d = (-v[0] + 3 * v[1] - 3 * v[2] + v[3]) / dz ** 3
    else:
        raise ValueError("only k = 1 or 3")
    # reversing the array flips the sign of odd derivatives
    return -d if end == "top" else d


def check_full_compatibility(data: EllipticData, profile, tol=1e-10, collar=0.1):
    """Support and endpoint-derivative conditions plus basic compatibility.

    Residuals:
    ``f_corner``  max |f| where ``r >= 1 - collar`` and z within ``collar`` of a lid;
    ``g_annulus`` max |g| on ``r >= 1 - collar`` (both lids);
    ``j_k1``, ``j_k3`` one-sided k-th derivative of j at z = 0, h;
    ``basic``     the integral condition.
    """
    g = data.grid
    ring = g.r_nodes >= 1.0 - collar - 1e-12
    lids = (g.z_nodes <= collar + 1e-12) | (g.z_nodes >= g.h - collar - 1e-12)
    fv = data.f.values[ring][:, :, lids]
    res = {
        "f_corner": float(np.max(np.abs(fv))) if fv.size else 0.0,
        "g_annulus": float(max(np.max(np.abs(data.g_bottom.values[ring])),
                               np.max(np.abs(data.g_top.values[ring])))),
    }
    for k in (1, 3):
        res[f"j_k{k}"] = float(max(abs(one_sided_derivative(data.j, g.dz, k, e))
                                   for e in ("bottom", "top")))
    res["basic"] = check_basic_compatibility(data, profile)
    return CompatibilityReport(res, tol)


# -- public operations -------------------------------------------------------

def solve_elliptic(data: EllipticData, profile: StratificationProfile, grid=None,
                   compat_tol=1e-8, solver_tol=1e-8, solver=None) -> StreamFunction:
    """Reconstruct the stream function; see the module docstring."""
    grid = grid or data.grid
    res = check_basic_compatibility(data, profile)
    if res > compat_tol:
        raise CompatibilityViolation(res, compat_tol)
    solver = solver or EllipticSolver(grid, profile, solver_tol=solver_tol)
    sf = solver.solve(data)
    sf.info["compat_residual"] = res
    return sf


def solve_dirichlet_lateral(data: EllipticData, profile, solver=None) -> StreamFunction:
    """Solve with ``u = 0`` on the wall (j is ignored, no compatibility needed)."""
    solver = solver or EllipticSolver(data.grid, profile)
    return solver.solve(data, lateral="dirichlet")


def energy_norm(u: StreamFunction, profile: StratificationProfile, solver=None) -> float:
    """sqrt of the discrete ``int (d_x u)^2 + (d_y u)^2 + lambda (d_z u)^2``.

    Uses the same face differences as the elliptic operator, so for a solved
    field it equals ``<u, A u>`` exactly.
    """
    g = u.grid
    solver = solver or EllipticSolver(g, profile)
    coeffs = theta_forward(u.psi.values)
    return float(np.sqrt(max(solver.energy_from_modes(coeffs), 0.0)))


def _one_sided_dz4(v, dz):
    """4th-order (3rd-order with 4 nodes) forward derivative at index 0 along the last axis."""
    if v.shape[-1] >= 5:
        return (-25 * v[..., 0] + 48 * v[..., 1] - 36 * v[..., 2] + 16 * v[..., 3]
                - 3 * v[..., 4]) / (12 * dz)
    return (-11 * v[..., 0] + 18 * v[..., 1] - 9 * v[..., 2] + 2 * v[..., 3]) / (6 * dz)


def neumann_trace(u: StreamFunction, profile=None, surface="top") -> SurfaceField:
    """Outward normal derivative on a lid: ``-d_z u`` at z = 0, ``+d_z u`` at z = h."""
    g = u.grid
    v = u.psi.values
    if surface == "bottom":
        d = -_one_sided_dz4(v, g.dz)
    elif surface == "top":
        # the reversed array differentiates along -z
        d = -_one_sided_dz4(v[..., ::-1], g.dz)
    else:
        raise ValueError(f"surface must be 'bottom' or 'top', got {surface!r}")
    return SurfaceField(g, surface, d)


def radial_derivative_at_wall(values, dr):
    """4th-order one-sided d/dr at r = 1 for arrays whose axis 0 is r."""
    v = values
    return (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * dr)


def lateral_flux(u: StreamFunction):
    """Circle-averaged ``d_r u`` at the wall, one value per z node."""
    g = u.grid
    mean_theta = u.psi.values.mean(axis=1)  # (r, z)
    return radial_derivative_at_wall(mean_theta, g.dr)


def apply_operator(u: StreamFunction, profile, solver=None):
    """Discrete ``L u`` at the nodes (interior rows of the finite-volume operator).

    The lid and wall rows absorb boundary fluxes and are only meaningful as
    part of the system; callers comparing with f should restrict to interior
    nodes.
    """
    g = u.grid
    solver = solver or EllipticSolver(g, profile)
    coeffs = theta_forward(u.psi.values)
    out = np.zeros_like(coeffs)
    vol = g.radial_volumes[:, None] * solver.vertical.weights[None, :]
    for m in mode_numbers(g.n_theta):
        A = solver._stiffness(m, g.n_r)
        x = coeffs[:, m, :].ravel()
        out[:, m, :] = -(A @ x).reshape(g.n_r, g.n_z) / vol
    return theta_inverse(out, g.n_theta)
