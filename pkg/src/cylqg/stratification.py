"""Stratification profile lambda(z) and the vertical change of variables.

The chart solves ``theta'(z) = sqrt(lambda(theta(z)))``, ``theta(0) = 0``.
Because the ODE is autonomous its inverse is a plain quadrature,
``theta^{-1}(s) = int_0^s lambda(sigma)^{-1/2} dsigma``, which is how the
inverse samples are produced.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp
from scipy.interpolate import CubicSpline

from .errors import CylQGError

PROFILE_KINDS = ("constant", "poly-flat", "samples")


def _fd4_derivatives(values, dz):
    """First three derivatives of uniformly sampled data, 4th-order FD.

    Centered stencils in the interior and one-sided (shifted) stencils near
    the ends.  Needs at least 7 samples for the third derivative.
    """
    n = values.size
    out = []
    for order in (1, 2, 3):
        width = order + 4  # points in the stencil: 4th-order accurate
        d = np.empty(n)
        for k in range(n):
            lo = min(max(k - width // 2, 0), n - width)
            offsets = np.arange(lo, lo + width) - k
            d[k] = _fd_weights(offsets, order) @ values[lo:lo + width] / dz ** order
        out.append(d)
    return out


def _fd_weights(offsets, order):
    """Finite-difference weights at 0 for the given integer offsets."""
    offsets = np.asarray(offsets, dtype=float)
    n = offsets.size
    A = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = _fact(order)
    return np.linalg.solve(A, rhs)


def _fact(k):
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


@dataclass(frozen=True, eq=False)
class StratificationProfile:
    """lambda(z) on [0, h] together with its first three derivatives.

    ``derivatives`` holds callables for lambda', lambda'', lambda'''.
    ``bound`` is Lambda; when omitted it is taken as the tightest value
    compatible with the sampled profile.
    """

    lambda_fn: Callable[[np.ndarray], np.ndarray]
    h: float
    derivatives: Sequence[Callable[[np.ndarray], np.ndarray]]
    bound: Optional[float] = None
    kind: str = "callable"
    spec: dict = field(default_factory=dict)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(np.asarray(self.lambda_fn(z), dtype=float), z.shape).copy()

    def derivative(self, z, k=1):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(np.asarray(self.derivatives[k - 1](z), dtype=float), z.shape).copy()

    def derivative_samples(self, z_nodes):
        """``(lambda', lambda'', lambda''')`` sampled at ``z_nodes``."""
        return tuple(self.derivative(z_nodes, k) for k in (1, 2, 3))

    def effective_bound(self, z_nodes):
        if self.bound is not None:
            return float(self.bound)
        lam = self(z_nodes)
        return float(max(1.0, lam.max(), 1.0 / lam.min()))

    def is_constant(self):
        return self.kind == "constant"

    # -- constructors --------------------------------------------------------

    @classmethod
    def constant(cls, value, h, bound=None):
        value = float(value)
        zero = lambda z: np.zeros_like(np.asarray(z, dtype=float))  # noqa: E731
        return cls(lambda z: np.full_like(np.asarray(z, dtype=float), value), float(h),
                   (zero, zero, zero), bound, "constant", {"kind": "constant", "value": value})

    @classmethod
    def poly_flat(cls, base, amp, h, bound=None):
        """``base + amp * (z (h - z))**4 / (h/2)**8``: flat to third order at both lids."""
        b, a, h = float(base), float(amp), float(h)
        c = a / (0.5 * h) ** 8

        def lam(z):
            p = z * (h - z)
            return b + c * p ** 4

        def d1(z):
            p, q = z * (h - z), h - 2 * z
            return c * 4 * p ** 3 * q

        def d2(z):
            p, q = z * (h - z), h - 2 * z
            return c * (12 * p ** 2 * q ** 2 - 8 * p ** 3)

        def d3(z):
            p, q = z * (h - z), h - 2 * z
            return c * (24 * p * q ** 3 - 72 * p ** 2 * q)

        return cls(lam, h, (d1, d2, d3), bound, "poly-flat",
                   {"kind": "poly-flat", "base": b, "amp": a})

    @classmethod
    def from_expression(cls, expr, h, bound=None):
        """Closed-form profile from a sympy expression (or string) in ``z``.

        ``h`` is available as a symbol inside the expression.  Derivatives are
        exact (symbolic).
        """
        z, hs = sp.symbols("z h")
        e = sp.sympify(expr, locals={"z": z, "h": hs}).subs(hs, float(h))
        fns = [sp.lambdify(z, sp.diff(e, z, k), "numpy") for k in range(4)]

        return cls(fns[0], float(h), tuple(fns[1:]), bound,
                   "expression", {"kind": "expression", "expr": str(expr)})

    @classmethod
    def from_callable(cls, fn, h, derivatives, bound=None):
        if len(derivatives) != 3:
            raise ValueError("need callables for the first three derivatives")
        return cls(fn, float(h), tuple(derivatives), bound, "callable", {})

    @classmethod
    def from_samples(cls, values, h, bound=None):
        """Profile from samples on a uniform grid covering ``[0, h]``.

        Derivative samples come from 4th-order finite differences; values
        between samples come from a cubic spline.
        """
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 7:
            raise ValueError("samples profile needs at least 7 values")
        zs = np.linspace(0.0, float(h), values.size)
        spline = CubicSpline(zs, values)
        ders = _fd4_derivatives(values, zs[1] - zs[0])
        dfn = tuple(CubicSpline(zs, d) for d in ders)
        return cls(lambda z: spline(z), float(h), dfn, bound, "samples",
                   {"kind": "samples", "values": values.tolist()})

    @classmethod
    def from_spec(cls, spec, h):
        """Build from a config entry (see ``PROFILE_KINDS``)."""
        kind = spec.get("kind")
        if kind == "constant":
            return cls.constant(spec["value"], h, spec.get("bound"))
        if kind == "poly-flat":
            return cls.poly_flat(spec["base"], spec["amp"], h, spec.get("bound"))
        if kind == "samples":
            return cls.from_samples(spec["values"], h, spec.get("bound"))
        raise ValueError(f"unknown profile kind {kind!r}; valid kinds: {', '.join(PROFILE_KINDS)}")


@dataclass
class ProfileReport:
    residuals: dict
    tol: float

    @property
    def passed(self):
        return all(v <= self.tol for v in self.residuals.values())

    def failures(self):
        return [k for k, v in self.residuals.items() if v > self.tol]


def validate_profile(profile: StratificationProfile, tol=1e-8, z_nodes=None) -> ProfileReport:
    """Check boundedness and endpoint flatness of lambda through order 3."""
    if z_nodes is None:
        z_nodes = np.linspace(0.0, profile.h, 257)
    lam = profile(z_nodes)
    Lam = profile.effective_bound(z_nodes)
    res = {
        "lower_bound": max(0.0, 1.0 / Lam - float(lam.min())),
        "upper_bound": max(0.0, float(lam.max()) - Lam),
    }
    ends = np.array([0.0, profile.h])
    for k in (1, 2, 3):
        res[f"flat_k{k}"] = float(np.max(np.abs(profile.derivative(ends, k))))
    return ProfileReport(res, tol)


# -- vertical chart ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VerticalChart:
    z_nodes: np.ndarray
    theta_nodes: np.ndarray
    h_tilde: float
    inverse_grid: np.ndarray
    inverse_values: np.ndarray
    substeps: int
    profile: StratificationProfile = field(repr=False)

    def theta(self, z):
        """theta at arbitrary points in ``[0, max z]`` via the same RK4 scheme."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        order = np.argsort(z)
        zs = np.concatenate([[0.0], z[order]])
        vals = _rk4_chart(self.profile, zs, self.substeps)[1:]
        out = np.empty_like(z)
        out[order] = vals
        return out

    def inverse(self, s):
        return chart_inverse(self.profile, s)


def _rhs(profile, th):
    lam = float(profile(np.array(th)))
    if not lam > 0:
        raise CylQGError(f"lambda must stay positive along the chart, got {lam}")
    return np.sqrt(lam)


def _rk4_chart(profile, z_nodes, substeps):
    th = np.zeros(len(z_nodes))
    for k in range(1, len(z_nodes)):
        hstep = (z_nodes[k] - z_nodes[k - 1]) / substeps
        y = th[k - 1]
        for _ in range(substeps):
            k1 = _rhs(profile, y)
            k2 = _rhs(profile, y + 0.5 * hstep * k1)
            k3 = _rhs(profile, y + 0.5 * hstep * k2)
            k4 = _rhs(profile, y + hstep * k3)
            y = y + hstep * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        th[k] = y
    return th


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def chart_inverse(profile, s, panels=64):
    """``int_0^s lambda^{-1/2}`` by composite 8-point Gauss-Legendre."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty_like(s)
    for i, si in enumerate(s):
        edges = np.linspace(0.0, si, panels + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        pts = mid[:, None] + half[:, None] * _GL_X[None, :]
        vals = 1.0 / np.sqrt(profile(pts))
        out[i] = float(np.sum(half[:, None] * _GL_W[None, :] * vals))
    return out


def solve_vertical_chart(profile: StratificationProfile, ode_tol=1e-10, z_nodes=None,
                         n_inverse=None, max_substeps=1 << 14) -> VerticalChart:
    """Integrate the chart ODE with fixed-substep RK4.

    The substep count per z-interval starts at 1 and doubles until two
    successive counts agree to ``ode_tol`` (Richardson estimate), so the
    result is deterministic.
    """
    if z_nodes is None:
        z_nodes = np.linspace(0.0, profile.h, 65)
    z_nodes = np.asarray(z_nodes, dtype=float)
    n = 1
    prev = _rk4_chart(profile, z_nodes, n)
    while True:
        if 2 * n > max_substeps:
            raise CylQGError("chart integration did not reach ode_tol; lambda is pathological")
        cur = _rk4_chart(profile, z_nodes, 2 * n)
        n *= 2
        if np.max(np.abs(cur - prev)) / 15.0 <= ode_tol:
            break
        prev = cur
    h_tilde = float(cur[-1])
    m = n_inverse or len(z_nodes)
    inv_grid = np.linspace(0.0, h_tilde, m)
    return VerticalChart(z_nodes, cur, h_tilde, inv_grid, chart_inverse(profile, inv_grid), n, profile)
