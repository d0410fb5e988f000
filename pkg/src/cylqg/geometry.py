"""Cylinder grid, azimuthal transforms, quadrature and field containers.

The domain is the unit disk times ``[0, h]``.  Nodes are laid out as

* radial: ``r_i = (i + 1/2) dr`` with ``dr = 1 / (n_r - 1/2)`` so the axis is
  never a node and the last node sits exactly on ``r = 1``;
* azimuthal: ``theta_j = 2 pi j / n_theta``;
* vertical: ``z_k = k dz`` with ``dz = h / (n_z - 1)`` (both lids are nodes).

Every node owns a control volume.  Radial cell ``i < n_r - 1`` is the annulus
``[i dr, (i+1) dr]``; the boundary node owns the half cell
``[1 - dr/2, 1]``.  Vertical cells are trapezoid cells (half cells on the
lids).  The quadrature weights are the exact areas/lengths of these cells, so
the volume rule integrates 1 to ``pi h`` up to rounding and is exact for
polynomials of degree one in ``z``.  The same cells define the finite-volume
elliptic operator, which is what makes the discrete Gauss identity exact.

Azimuthal transforms use ``rfft / n_theta``: mode 0 is the plain
theta-average.  The rotational average ``int_0^{2 pi} u dtheta`` therefore
equals ``2 pi`` times mode 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GridError

FIELD_FORMAT = "cylqg-field"
FIELD_VERSION = 1


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CylGrid:
    n_r: int
    n_theta: int
    n_z: int
    h: float
    dr: float = field(init=False)
    dz: float = field(init=False)
    r_nodes: np.ndarray = field(init=False, repr=False)
    theta_nodes: np.ndarray = field(init=False, repr=False)
    z_nodes: np.ndarray = field(init=False, repr=False)
    radial_volumes: np.ndarray = field(init=False, repr=False)
    quad_weights_disk: np.ndarray = field(init=False, repr=False)
    quad_weights_circle: np.ndarray = field(init=False, repr=False)
    quad_weights_zline: np.ndarray = field(init=False, repr=False)
    quad_weights_volume: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n_r, n_theta, n_z, h = self.n_r, self.n_theta, self.n_z, self.h
        dr = 1.0 / (n_r - 0.5)
        dz = h / (n_z - 1)
        r = (np.arange(n_r) + 0.5) * dr
        r[-1] = 1.0
        theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
        z = np.arange(n_z) * dz
        z[-1] = h

        # exact annulus areas per radian of each radial control volume
        vr = r * dr
        vr[-1] = 0.5 * (1.0 - (1.0 - 0.5 * dr) ** 2)
        wz = np.full(n_z, dz)
        wz[0] = wz[-1] = 0.5 * dz
        dtheta = 2.0 * np.pi / n_theta
        disk = np.outer(vr, np.full(n_theta, dtheta))
        vol = disk[:, :, None] * wz[None, None, :]

        s = object.__setattr__
        s(self, "dr", dr)
        s(self, "dz", dz)
        s(self, "r_nodes", _frozen(r))
        s(self, "theta_nodes", _frozen(theta))
        s(self, "z_nodes", _frozen(z))
        s(self, "radial_volumes", _frozen(vr))
        s(self, "quad_weights_disk", _frozen(disk))
        s(self, "quad_weights_circle", _frozen(np.full(n_theta, dtheta)))
        s(self, "quad_weights_zline", _frozen(wz))
        s(self, "quad_weights_volume", _frozen(vol))

    @property
    def shape(self):
        return (self.n_r, self.n_theta, self.n_z)

    @property
    def disk_shape(self):
        return (self.n_r, self.n_theta)

    @property
    def n_modes(self):
        return self.n_theta // 2 + 1

    @property
    def dtheta(self):
        return 2.0 * np.pi / self.n_theta

    @property
    def r_faces(self):
        """Radii of the interior radial faces, between node i and i+1."""
        return (np.arange(1, self.n_r)) * self.dr

    @property
    def z_faces(self):
        return (np.arange(self.n_z - 1) + 0.5) * self.dz

    @property
    def min_spacing(self):
        """Spacing used by the CFL test: ``min(dr, dtheta)``.

        ``dtheta`` is the arc spacing on the boundary circle; near the axis
        the arc spacing shrinks but semi-Lagrangian transport does not need
        it resolved.
        """
        return min(self.dr, self.dtheta)

    def mesh(self):
        """Return ``(R, TH, Z)`` node coordinates, each of shape ``self.shape``."""
        return np.meshgrid(self.r_nodes, self.theta_nodes, self.z_nodes, indexing="ij")

    def disk_xy(self):
        R, TH = np.meshgrid(self.r_nodes, self.theta_nodes, indexing="ij")
        return R * np.cos(TH), R * np.sin(TH)

    def xyz(self):
        R, TH, Z = self.mesh()
        return R * np.cos(TH), R * np.sin(TH), Z

    def integrate(self, values):
        """Volume integral of a nodal array of shape ``self.shape``."""
        return float(np.sum(self.quad_weights_volume * values))

    def integrate_disk(self, values):
        return float(np.sum(self.quad_weights_disk * values))

    def integrate_z(self, values):
        return float(np.sum(self.quad_weights_zline * values))

    def same_as(self, other):
        return (
            self.n_r == other.n_r
            and self.n_theta == other.n_theta
            and self.n_z == other.n_z
            and self.h == other.h
        )

    def describe(self):
        return {"n_r": self.n_r, "n_theta": self.n_theta, "n_z": self.n_z, "h": self.h}


def make_grid(n_r, n_theta, n_z, h):
    """Build a :class:`CylGrid` after validating the counts and height."""
    for name, n in (("n_r", n_r), ("n_theta", n_theta), ("n_z", n_z)):
        if int(n) != n or n < 4:
            raise GridError(f"{name} must be an integer >= 4, got {n!r}")
    if n_theta % 2:
        raise GridError(f"n_theta must be even, got {n_theta}")
    if not np.isfinite(h) or h <= 0:
        raise GridError(f"h must be positive, got {h!r}")
    return CylGrid(int(n_r), int(n_theta), int(n_z), float(h))


def _check_finite(values, shape, what):
    if values.shape != shape:
        raise GridError(f"{what} has shape {values.shape}, expected {shape}")
    if not np.all(np.isfinite(values)):
        raise GridError(f"{what} contains non-finite values")


@dataclass(frozen=True, eq=False)
class ScalarField3D:
    grid: CylGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        _check_finite(v, self.grid.shape, "ScalarField3D")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def integral(self):
        return self.grid.integrate(self.values)

    def __add__(self, other):
        return ScalarField3D(self.grid, self.values + other.values)

    def __sub__(self, other):
        return ScalarField3D(self.grid, self.values - other.values)

    def __mul__(self, c):
        return ScalarField3D(self.grid, c * self.values)

    __rmul__ = __mul__


SURFACES = ("bottom", "top")


@dataclass(frozen=True, eq=False)
class SurfaceField:
    grid: CylGrid
    surface: str
    values: np.ndarray

    def __post_init__(self):
        if self.surface not in SURFACES:
            raise GridError(f"surface must be one of {SURFACES}, got {self.surface!r}")
        v = np.array(self.values, dtype=float)
        _check_finite(v, self.grid.disk_shape, "SurfaceField")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def z_index(self):
        return 0 if self.surface == "bottom" else self.grid.n_z - 1

    def integral(self):
        return self.grid.integrate_disk(self.values)


@dataclass(frozen=True, eq=False)
class ModeStack:
    """Azimuthal Fourier coefficients, ``modes[m, i, k]`` for m = 0..n_theta/2."""

    grid: CylGrid
    modes: np.ndarray

    def __post_init__(self):
        g = self.grid
        m = np.array(self.modes, dtype=complex)
        if m.shape != (g.n_modes, g.n_r, g.n_z):
            raise GridError(f"ModeStack shape {m.shape} does not match grid")
        m.setflags(write=False)
        object.__setattr__(self, "modes", m)

    def weighted_norm(self):
        """L2 norm computed from the coefficients (Parseval)."""
        g = self.grid
        c = np.full(g.n_modes, 2.0)
        c[0] = 1.0
        c[-1] = 1.0
        w = g.radial_volumes[:, None] * g.quad_weights_zline[None, :]
        s = np.sum(c[:, None, None] * np.abs(self.modes) ** 2 * w[None], axis=(1, 2))
        return float(np.sqrt(2.0 * np.pi * np.sum(s)))


def theta_forward(values):
    """Forward azimuthal transform of an array whose axis 1 is theta.

    Returns coefficients with the mode index on axis 1.  Normalized by
    ``n_theta`` so that mode 0 is the theta-average.
    """
    n = values.shape[1]
    return np.fft.rfft(values, axis=1) / n


def theta_inverse(coeffs, n_theta):
    return np.fft.irfft(coeffs * n_theta, n=n_theta, axis=1)


def mode_numbers(n_theta):
    return np.arange(n_theta // 2 + 1)


def to_modes(field: ScalarField3D) -> ModeStack:
    c = theta_forward(field.values)  # (r, m, z)
    return ModeStack(field.grid, np.transpose(c, (1, 0, 2)))


def from_modes(stack: ModeStack) -> ScalarField3D:
    c = np.transpose(stack.modes, (1, 0, 2))
    return ScalarField3D(stack.grid, theta_inverse(c, stack.grid.n_theta))


def circle_average(field: ScalarField3D, z_index: int) -> float:
    """Average of the lateral-boundary trace over the circle at ``z_nodes[z_index]``."""
    g = field.grid
    if not -g.n_z <= z_index < g.n_z:
        raise IndexError(f"z_index {z_index} out of range for n_z={g.n_z}")
    trace = field.values[-1, :, z_index]
    return float(np.sum(g.quad_weights_circle * trace) / (2.0 * np.pi))


# -- field dumps ------------------------------------------------------------

def _header_bytes(header):
    return (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")


def write_field(path, field, name):
    """Write a field dump: one JSON header line, then little-endian float64s.

    Payload order is r fastest, then theta, then z.  ``field`` may be a
    :class:`ScalarField3D`, a :class:`SurfaceField`, or a ``(grid, 1d-array)``
    pair for a z-line quantity such as ``j``.
    """
    if isinstance(field, ScalarField3D):
        grid, values, surface, kind = field.grid, field.values, None, "volume"
    elif isinstance(field, SurfaceField):
        grid, values, surface, kind = field.grid, field.values, field.surface, "surface"
    else:
        grid, values = field
        values = np.asarray(values, dtype=float)
        surface, kind = None, "zline"
    header = dict(grid.describe(), format=FIELD_FORMAT, version=FIELD_VERSION,
                  name=name, surface=surface, kind=kind, count=int(values.size))
    payload = np.asarray(values, dtype="<f8").ravel(order="F").tobytes()
    Path(path).write_bytes(_header_bytes(header) + payload)


def read_field(path, grid=None):
    """Read a field dump.  Returns ``(name, field)``.

    A grid is rebuilt from the header unless a matching one is supplied.
    """
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise GridError(f"{path}: missing field header")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("format") != FIELD_FORMAT or header.get("version") != FIELD_VERSION:
        raise GridError(f"{path}: unsupported field format {header.get('format')!r} "
                        f"v{header.get('version')!r}")
    if grid is None:
        grid = make_grid(header["n_r"], header["n_theta"], header["n_z"], header["h"])
    elif not grid.same_as(make_grid(header["n_r"], header["n_theta"], header["n_z"], header["h"])):
        raise GridError(f"{path}: grid in header does not match the supplied grid")
    data = np.frombuffer(raw[nl + 1:], dtype="<f8")
    if data.size != header["count"]:
        raise GridError(f"{path}: expected {header['count']} values, found {data.size}")
    kind = header["kind"]
    if kind == "volume":
        return header["name"], ScalarField3D(grid, data.reshape(grid.shape, order="F"))
    if kind == "surface":
        return header["name"], SurfaceField(grid, header["surface"],
                                            data.reshape(grid.disk_shape, order="F"))
    return header["name"], data.astype(float)
