import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cylqg import make_grid, sobolev_norm
from cylqg.norms import data_norm, multi_indices, multinomial, spectral_sobolev_norm
from cylqg.operators import cartesian_gradient, fd4, polar_gradient


@pytest.fixture
def grid():
    return make_grid(24, 32, 17, 1.0)


def test_polar_gradient_of_smooth_field(grid):
    R, TH, Z = grid.mesh()
    u = R ** 4 * np.cos(2 * TH) * np.sin(Z)
    d_r, d_t = polar_gradient(u, grid)
    assert np.max(np.abs(d_r - 4 * R ** 3 * np.cos(2 * TH) * np.sin(Z))) < 1e-4
    assert np.max(np.abs(d_t + 2 * R ** 3 * np.sin(2 * TH) * np.sin(Z))) < 1e-12


def test_cartesian_gradient_across_the_axis(grid):
    X, Y, Z = grid.xyz()
    u = np.exp(X - 0.5 * Y) * (1 + Z)
    gx, gy = cartesian_gradient(u, grid)
    assert np.max(np.abs(gx - u)) < 1e-5
    assert np.max(np.abs(gy + 0.5 * u)) < 1e-5


def test_fd4_is_exact_on_quartics():
    z = np.linspace(0, 1, 9)
    assert np.max(np.abs(fd4(z ** 4 - z, z[1]) - (4 * z ** 3 - 1))) < 1e-11


def test_multinomials_sum_to_dim_power():
    for k in range(5):
        assert sum(multinomial(a) for a in multi_indices(k, 3)) == 3 ** k


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3))
def test_norm_is_absolutely_homogeneous(c):
    g = make_grid(8, 16, 9, 1.0)
    X, Y, Z = g.xyz()
    u = np.cos(X) * np.sin(Y + Z)
    assert sobolev_norm(c * u, g, 3) == pytest.approx(abs(c) * sobolev_norm(u, g, 3), rel=1e-12)


def test_h0_norm_is_l2(grid):
    X, Y, Z = grid.xyz()
    u = X * Y + Z
    assert sobolev_norm(u, grid, 0) == pytest.approx(np.sqrt(grid.integrate(u ** 2)), rel=1e-14)


def test_sobolev_proxy_matches_fourier_weight():
    # e^{i k.x} has |D^alpha|^2 summing to |k|^{2s}; a plane wave on the cylinder
    # should reproduce sum_s |k|^{2s} times the L2 norm
    g = make_grid(32, 64, 33, 1.0)
    X, Y, Z = g.xyz()
    k = np.array([1.0, 0.5, 1.0])
    u = np.cos(k[0] * X + k[1] * Y + k[2] * Z)
    k2 = k @ k
    l2 = g.integrate(u ** 2)
    for s in (1, 2, 3):
        want = np.sqrt(l2 * sum(k2 ** q for q in range(s + 1)))
        # exact up to the boundary-weighted mean of sin^2 vs cos^2
        assert sobolev_norm(u, g, s) == pytest.approx(want, rel=0.15)


def test_spectral_reference_norm():
    n = 32
    x = np.arange(n) * 2 * np.pi / n
    u = np.cos(2 * x)[:, None] * np.ones((1, 8))
    # |c|^2 sum = 1/2, box volume 2 pi * 2 pi, weight 1 + 4 + 16
    got = spectral_sobolev_norm(u, (2 * np.pi, 2 * np.pi), 2)
    assert got == pytest.approx(np.sqrt(0.5 * 4 * np.pi ** 2 * 21), rel=1e-12)


def test_data_norm_zero_and_positive():
    g = make_grid(8, 16, 9, 1.0)
    z = np.zeros(g.shape)
    d = np.zeros(g.disk_shape)
    assert data_norm(z, d, d, np.zeros(g.n_z), g) == 0.0
    assert data_norm(z, d, d, np.ones(g.n_z), g) == pytest.approx(1.0, rel=1e-12)
