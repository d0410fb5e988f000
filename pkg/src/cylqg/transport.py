"""Semi-Lagrangian transport on the cylinder grid.

Velocity is ``perp-grad Psi = (-d_y Psi, d_x Psi)``, computed level by level.
In polar components this is ``u_r = -(1/r) d_theta Psi`` and
``u_theta = d_r Psi``.  Both components are kept on the grid, because they
are smooth functions of signed radius once a ghost row at ``theta + pi`` is
attached, and because interpolating them (rather than u_x, u_y) keeps
purely azimuthal flows exactly azimuthal at off-grid points.

Characteristics are traced backward with the implicit midpoint rule

    X_d = x - dt * u((x + X_d) / 2),

solved by fixed-point iteration, then the transported field is evaluated at
``X_d`` with tensor cubic Lagrange interpolation in (r, theta).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CFLViolation
from .geometry import CylGrid, ScalarField3D, SurfaceField, mode_numbers
from .operators import cartesian_gradient, polar_gradient

# departure points never land closer to the wall than this
WALL_EPS = 1e-10
MIDPOINT_MAX_ITER = 20
MIDPOINT_TOL = 1e-13


# -- velocity ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VelocityField:
    """Horizontal velocity on every z level.

    ``u_x``/``u_y`` are Cartesian components; ``u_r``/``u_theta`` the same
    vectors in the local polar frame.  All arrays are ``(r, theta, z)``.
    """

    grid: CylGrid
    u_x: np.ndarray
    u_y: np.ndarray
    u_r: np.ndarray
    u_theta: np.ndarray
    max_speed: float

    @classmethod
    def from_polar(cls, grid, u_r, u_theta):
        th = grid.theta_nodes[None, :, None]
        c, s = np.cos(th), np.sin(th)
        u_x = c * u_r - s * u_theta
        u_y = s * u_r + c * u_theta
        speed = float(np.sqrt(np.max(u_x ** 2 + u_y ** 2))) if u_x.size else 0.0
        return cls(grid, u_x, u_y, u_r, u_theta, speed)

    @classmethod
    def zeros(cls, grid):
        z = np.zeros(grid.shape)
        return cls.from_polar(grid, z, z)

    def wall_normal_max(self):
        """max |u . nu| on the lateral wall."""
        return float(np.max(np.abs(self.u_r[-1])))

    def level(self, k):
        """Velocity restricted to z level k, as a one-level field."""
        sl = (slice(None), slice(None), slice(k, k + 1))
        return VelocityField(self.grid, self.u_x[sl], self.u_y[sl], self.u_r[sl],
                             self.u_theta[sl], self.max_speed)

    def scaled(self, c):
        return VelocityField.from_polar(self.grid, c * self.u_r, c * self.u_theta)

    def average(self, other, w=0.5):
        """``(1 - w) * self + w * other``."""
        return VelocityField.from_polar(self.grid, (1 - w) * self.u_r + w * other.u_r,
                                        (1 - w) * self.u_theta + w * other.u_theta)


def velocity_from_stream(psi) -> VelocityField:
    """Perp-gradient of a stream function (``StreamFunction`` or nodal array)."""
    values = getattr(psi, "psi", psi)
    grid = values.grid
    d_r, d_th_over_r = polar_gradient(values.values, grid)
    return VelocityField.from_polar(grid, -d_th_over_r, d_r)


def velocity_gradient_max(vel: VelocityField):
    """``max |grad u|`` (spectral norm of the 2x2 horizontal Jacobian) over the grid."""
    ax, ay = cartesian_gradient(vel.u_x, vel.grid)
    bx, by = cartesian_gradient(vel.u_y, vel.grid)
    # largest singular value of [[ax, ay], [bx, by]]
    fro = ax ** 2 + ay ** 2 + bx ** 2 + by ** 2
    det = ax * by - ay * bx
    smax2 = 0.5 * (fro + np.sqrt(np.maximum(fro ** 2 - 4 * det ** 2, 0.0)))
    return float(np.sqrt(np.max(smax2))) if smax2.size else 0.0


def horizontal_divergence(vel: VelocityField):
    """``(1/r) d_r (r u_r) + (1/r) d_theta u_theta`` on the nodes."""
    g = vel.grid
    r = g.r_nodes[:, None, None]
    a, _ = polar_gradient(r * vel.u_r, g)
    _, b = polar_gradient(vel.u_theta, g)
    return a / r + b


# -- interpolation ----------------------------------------------------------

def _lagrange4(t):
    """Cubic Lagrange weights for nodes at 0, 1, 2, 3 evaluated at t."""
    t0, t1, t2, t3 = t, t - 1.0, t - 2.0, t - 3.0
    return np.stack([-t1 * t2 * t3 / 6.0, t0 * t2 * t3 / 2.0, -t0 * t1 * t3 / 2.0,
                     t0 * t1 * t2 / 6.0], axis=-1)


class DiskInterpolator:
    """Tensor cubic interpolation in (signed r, periodic theta).

    ``parity`` is +1 for scalars and -1 for polar vector components, which
    change sign when continued through the axis.
    """

    def __init__(self, grid: CylGrid, n_levels=1):
        self.grid = grid
        self.n_levels = n_levels

    def extend(self, values, parity=1.0):
        """Prepend the two ghost rows at ``r = -r_1, -r_0`` (axis 0 is r)."""
        half = self.grid.n_theta // 2
        ghosts = parity * np.roll(values[1::-1], -half, axis=1)
        return np.concatenate([ghosts, values], axis=0)

    def stencil(self, r, th, level=None):
        """Gather indices and weights for query points ``(r, th)`` of any shape.

        Returns ``(idx, w)`` of shape ``r.shape + (16,)``; ``idx`` indexes the
        flattened extended array (``level`` selects the z index for 3-D data).
        """
        g = self.grid
        n_t = g.n_theta
        # extended index e <-> node e - 2 at radius (e - 1.5) dr
        s = r / g.dr + 1.5
        base = np.floor(s).astype(np.intp) - 1
        # one-sided at the wall (the last node is exactly r = 1)
        base = np.clip(base, 0, g.n_r + 2 - 4)
        wr = _lagrange4(s - base)
        u = np.mod(th, 2 * np.pi) / g.dtheta
        jb = np.floor(u).astype(np.intp) - 1
        wt = _lagrange4(u - jb)
        four = np.arange(4)
        rows = (base[..., None] + four) * n_t
        cols = np.mod(jb[..., None] + four, n_t)
        idx = (rows[..., :, None] + cols[..., None, :]).reshape(r.shape + (16,))
        if level is not None:
            idx = idx * self.n_levels + np.asarray(level)[..., None]
        w = (wr[..., :, None] * wt[..., None, :]).reshape(r.shape + (16,))
        return idx, w

    @staticmethod
    def evaluate(ext, stencil):
        """Interpolate an extended array at a prepared stencil."""
        idx, w = stencil
        return np.einsum("...q,...q->...", w, ext.reshape(-1)[idx])


def _to_polar(x, y):
    return np.hypot(x, y), np.arctan2(y, x)


class _VelocitySampler:
    def __init__(self, vel: VelocityField):
        self.interp = DiskInterpolator(vel.grid, vel.u_r.shape[2])
        self.ur = self.interp.extend(vel.u_r, -1.0)
        self.ut = self.interp.extend(vel.u_theta, -1.0)

    def __call__(self, x, y, level):
        r, th = _to_polar(x, y)
        st = self.interp.stencil(r, th, level)
        ur = self.interp.evaluate(self.ur, st)
        ut = self.interp.evaluate(self.ut, st)
        c, s = np.cos(th), np.sin(th)
        return c * ur - s * ut, s * ur + c * ut


def _project_inside(x, y):
    r = np.hypot(x, y)
    lim = 1.0 - WALL_EPS
    out = r > lim
    if np.any(out):
        f = np.where(out, lim / np.where(out, r, 1.0), 1.0)
        x, y = x * f, y * f
    return x, y


def departure_points(x, y, level, vel: VelocityField, dt, sampler=None):
    """Implicit-midpoint backward characteristics from ``(x, y)`` over ``dt``.

    Returns ``(x_d, y_d, x_mid, y_mid)``.
    """
    sampler = sampler or _VelocitySampler(vel)
    ux, uy = sampler(x, y, level)
    xd, yd = _project_inside(x - dt * ux, y - dt * uy)
    for _ in range(MIDPOINT_MAX_ITER):
        xm, ym = 0.5 * (x + xd), 0.5 * (y + yd)
        ux, uy = sampler(xm, ym, level)
        nx, ny = _project_inside(x - dt * ux, y - dt * uy)
        change = float(np.max(np.abs(nx - xd) + np.abs(ny - yd))) if nx.size else 0.0
        xd, yd = nx, ny
        if change <= MIDPOINT_TOL:
            break
    return xd, yd, 0.5 * (x + xd), 0.5 * (y + yd)


def check_cfl(vel: VelocityField, dt, cfl_safety=0.5):
    """Raise :class:`CFLViolation` when ``dt`` exceeds the CFL bound."""
    dt_max = cfl_bound(vel, cfl_safety)
    if dt > dt_max:
        raise CFLViolation(dt, dt_max)
    return dt_max


def cfl_bound(vel: VelocityField, cfl_safety=0.5):
    if vel.max_speed == 0.0:
        return np.inf
    return cfl_safety * vel.grid.min_spacing / vel.max_speed


def weighted_mass_fix(new, target, weights):
    """Add ``c new^2`` so the weighted sum equals ``target``.

    The ``new^2`` weight vanishes where the field does, so compact support
    survives the correction, and it is smooth (``|new|`` would put kinks
    at sign changes of interpolation undershoot).
    """
    mass = float(np.sum(weights * new))
    w = float(np.sum(weights * new * new))
    if w == 0.0:
        return new
    return new + (target - mass) / w * (new * new)


def polar_filter(values, grid: CylGrid):
    """Drop azimuthal modes finer than the radial spacing on each ring.

    Ring ``i`` keeps ``m <= max(1, pi r_i / dr)``: near the axis the arc
    spacing ``r dtheta`` is far below ``dr`` and the upper modes carry only
    interpolation noise.  Mode 0 is untouched, so every ring average (and
    hence the volume integral) is preserved exactly.
    """
    m = mode_numbers(grid.n_theta)
    keep = m[None, :] <= np.maximum(1.0, np.floor(np.pi * grid.r_nodes / grid.dr))[:, None]
    if keep.all():
        return values
    c = np.fft.rfft(values, axis=1)
    shape = keep.shape + (1,) * (values.ndim - 2)
    c = c * keep.reshape(shape)
    return np.fft.irfft(c, n=grid.n_theta, axis=1)


def advect_interior(F: ScalarField3D, vel: VelocityField, psi=None, beta0=0.0, dt=0.0,
                    form="invariant", cfl_safety=0.5, conserve=False,
                    filtered=False) -> ScalarField3D:
    """One semi-Lagrangian step of ``(d_t + u . grad)(F + beta0 y) = 0``.

    ``form='invariant'`` transports ``F + beta0 y`` as one field.
    ``form='source'`` transports F and adds ``-beta0 d_x Psi`` at the
    trajectory midpoint, with ``d_x Psi`` taken from ``psi`` (defaults to
    the stream function behind ``vel``).  ``conserve`` restores the volume
    integral of F with :func:`weighted_mass_fix`; ``filtered`` applies
    :func:`polar_filter` to the result.
    """
    g = F.grid
    check_cfl(vel, dt, cfl_safety)
    if form not in ("invariant", "source"):
        raise ValueError(f"form must be 'invariant' or 'source', got {form!r}")
    X, Y, _ = g.xyz()
    level = np.broadcast_to(np.arange(g.n_z), g.shape)
    interp = DiskInterpolator(g, g.n_z)
    sampler = _VelocitySampler(vel)
    if dt == 0.0 or (vel.max_speed == 0.0 and (beta0 == 0.0 or form == "invariant")):
        return F
    xd, yd, xm, ym = departure_points(X, Y, level, vel, dt, sampler)
    st = interp.stencil(*_to_polar(xd, yd), level)
    if form == "invariant":
        q = F.values + beta0 * Y
        new = interp.evaluate(interp.extend(q), st) - beta0 * Y
    else:
        new = interp.evaluate(interp.extend(F.values), st)
        if beta0 != 0.0:
            src_vel = vel if psi is None else velocity_from_stream(psi)
            _, uy = _VelocitySampler(src_vel)(xm, ym, level)
            new = new - dt * beta0 * uy  # d_x Psi = u_y
    if filtered:
        new = polar_filter(new, g)
    if conserve:
        new = weighted_mass_fix(new, F.integral(), g.quad_weights_volume)
    return ScalarField3D(g, new)


def advect_surface(G: SurfaceField, vel: VelocityField, dt, cfl_safety=0.5,
                   conserve=False, filtered=False) -> SurfaceField:
    """Semi-Lagrangian step for a lid quantity (no planetary term)."""
    g = G.grid
    check_cfl(vel, dt, cfl_safety)
    if dt == 0.0 or vel.max_speed == 0.0:
        return G
    X, Y = g.disk_xy()
    lv = vel.level(G.z_index) if vel.u_r.shape[2] > 1 else vel
    level = np.zeros(X.shape, dtype=int)
    xd, yd, _, _ = departure_points(X, Y, level, lv, dt)
    interp = DiskInterpolator(g)
    st = interp.stencil(*_to_polar(xd, yd))
    new = interp.evaluate(interp.extend(G.values), st)
    if filtered:
        new = polar_filter(new, g)
    if conserve:
        new = weighted_mass_fix(new, G.integral(), g.quad_weights_disk)
    return SurfaceField(g, G.surface, new)


# -- particles --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ParticleSet:
    """Lagrangian markers; ``z_label[i]`` is the z index particle i lives on."""

    positions: np.ndarray
    z_label: np.ndarray
    t: float = 0.0
    min_boundary_distance: float = field(default=np.inf)

    def __post_init__(self):
        p = np.array(self.positions, dtype=float).reshape(-1, 2)
        if p.size and np.max(np.hypot(p[:, 0], p[:, 1])) > 1.0 + 1e-12:
            raise ValueError("particles must lie in the closed unit disk")
        zl = np.array(self.z_label, dtype=int).reshape(-1)
        if zl.shape[0] != p.shape[0]:
            raise ValueError("one z label per particle")
        p.setflags(write=False)
        zl.setflags(write=False)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "z_label", zl)
        object.__setattr__(self, "min_boundary_distance",
                           float(min(self.min_boundary_distance, self.boundary_distance())))

    def __len__(self):
        return self.positions.shape[0]

    def boundary_distance(self):
        if not len(self):
            return np.inf
        return float(1.0 - np.max(np.hypot(self.positions[:, 0], self.positions[:, 1])))

    def radii(self):
        return np.hypot(self.positions[:, 0], self.positions[:, 1])


def advance_particles(p: ParticleSet, vel: VelocityField, dt) -> ParticleSet:
    """Forward implicit-midpoint step (the same integrator as the backward tracer)."""
    if not len(p) or dt == 0.0:
        return ParticleSet(p.positions, p.z_label, p.t + dt, p.min_boundary_distance)
    x, y = p.positions[:, 0], p.positions[:, 1]
    xa, ya, _, _ = departure_points(x, y, p.z_label, vel, -dt)
    return ParticleSet(np.stack([xa, ya], axis=1), p.z_label, p.t + dt,
                       p.min_boundary_distance)


def trace_particles(p: ParticleSet, vel_time_series, t0, t1, max_substep=None) -> ParticleSet:
    """Advance particles through a piecewise-linear-in-time velocity record.

    ``vel_time_series`` is a sequence of ``(t, VelocityField)`` covering
    ``[t0, t1]``.  On each sub-interval the velocity at its midpoint time is
    used.  ``max_substep`` optionally caps the step length.
    """
    series = sorted(vel_time_series, key=lambda tv: tv[0])
    times = np.array([t for t, _ in series])
    if times.size == 0 or times[0] > t0 + 1e-14 or times[-1] < t1 - 1e-14:
        raise ValueError("velocity record does not cover [t0, t1]")
    cuts = np.unique(np.concatenate([[t0, t1], times[(times > t0) & (times < t1)]]))
    cur = ParticleSet(p.positions, p.z_label, t0, p.min_boundary_distance)
    for a, b in zip(cuts[:-1], cuts[1:]):
        n_sub = 1 if max_substep is None else max(1, int(np.ceil((b - a) / max_substep)))
        dt = (b - a) / n_sub
        for k in range(n_sub):
            tm = a + (k + 0.5) * dt
            i = int(np.clip(np.searchsorted(times, tm) - 1, 0, len(series) - 2)) \
                if len(series) > 1 else 0
            if len(series) == 1:
                vel = series[0][1]
            else:
                ta, tb = times[i], times[i + 1]
                w = (tm - ta) / (tb - ta) if tb > ta else 0.0
                vel = series[i][1].average(series[i + 1][1], w)
            cur = advance_particles(cur, vel, dt)
    return ParticleSet(cur.positions, cur.z_label, t1, cur.min_boundary_distance)


def write_particles(path, p: ParticleSet, grid: CylGrid = None):
    """CSV with columns x, y, z_label, t (z_label is the z index)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z_label", "t"])
        for (x, y), k in zip(p.positions, p.z_label):
            w.writerow([repr(float(x)), repr(float(y)), int(k), repr(float(p.t))])


def read_particles(path) -> ParticleSet:
    rows = list(csv.DictReader(Path(path).open()))
    if not rows:
        return ParticleSet(np.zeros((0, 2)), np.zeros(0, dtype=int))
    pos = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    zl = np.array([int(r["z_label"]) for r in rows])
    return ParticleSet(pos, zl, float(rows[0]["t"]))
