import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cylqg import (CFLViolation, ParticleSet, ScalarField3D, SurfaceField, advect_interior,
                   advect_surface, make_grid, trace_particles, velocity_from_stream)
from cylqg.transport import (DiskInterpolator, VelocityField, advance_particles,
                             horizontal_divergence, polar_filter, read_particles,
                             velocity_gradient_max, write_particles)


@pytest.fixture(scope="module")
def grid():
    return make_grid(16, 32, 5, 1.0)


def _field(grid, values):
    return ScalarField3D(grid, values)


def _rotation(grid, omega=1.0):
    R, _, _ = grid.mesh()
    # psi = -omega r^2 / 2 gives u_theta = -omega r
    return velocity_from_stream(_field(grid, -0.5 * omega * R ** 2))


def test_paraboloid_stream_function(grid):
    R, _, _ = grid.mesh()
    v = velocity_from_stream(_field(grid, 1 - R ** 2))
    assert np.max(np.abs(v.u_theta + 2 * R)) < 1e-12
    assert np.max(np.abs(v.u_r)) < 1e-12
    assert v.max_speed == pytest.approx(2.0, rel=1e-12)


def test_linear_stream_function(grid):
    _, Y, _ = grid.xyz()
    v = velocity_from_stream(_field(grid, Y.copy()))
    assert np.max(np.abs(v.u_x + 1)) < 1e-10
    assert np.max(np.abs(v.u_y)) < 1e-10
    assert velocity_gradient_max(v) < 1e-8


def test_velocity_divergence_free_and_tangent(grid):
    X, Y, Z = grid.xyz()
    R, _, _ = grid.mesh()
    # vanishes on the wall with its theta derivative, so u . nu = 0 there
    psi = (1 - R ** 2) ** 2 * (X + X * Y) * (1 + Z)
    v = velocity_from_stream(_field(grid, psi))
    assert np.max(np.abs(horizontal_divergence(v))) < 1e-3
    assert v.wall_normal_max() < 1e-12


def test_gradient_max_of_solid_rotation(grid):
    assert velocity_gradient_max(_rotation(grid, 2.0)) == pytest.approx(2.0, rel=1e-6)


def test_axisymmetric_field_invariant_under_rotation(grid):
    R, _, Z = grid.mesh()
    F = _field(grid, np.exp(-4 * R ** 2) * (1 + Z))
    vel = _rotation(grid)
    dt = 0.5 * grid.min_spacing / vel.max_speed
    out = advect_interior(F, vel, dt=dt)
    assert np.max(np.abs(out.values - F.values)) < 1e-3


def test_rotation_moves_a_bump(grid):
    X, Y, Z = grid.xyz()
    bump = lambda x, y: np.exp(-10 * ((x - 0.4) ** 2 + y ** 2))  # noqa: E731
    F = _field(grid, bump(X, Y))
    vel = _rotation(grid)
    dt = 0.4 * grid.min_spacing
    out = F
    for _ in range(10):
        out = advect_interior(out, vel, dt=dt)
    # clockwise rotation (u_theta = -r) by angle 10 dt
    a = -10 * dt
    want = bump(np.cos(a) * X + np.sin(a) * Y, -np.sin(a) * X + np.cos(a) * Y)
    err = np.sqrt(grid.integrate((out.values - want) ** 2) / grid.integrate(want ** 2))
    assert err < 0.05


def test_mass_fix_restores_integral(grid):
    X, Y, _ = grid.xyz()
    F = _field(grid, np.exp(-10 * ((X - 0.3) ** 2 + (Y + 0.2) ** 2)))
    R, _, _ = grid.mesh()
    vel = velocity_from_stream(_field(grid, (1 - R ** 2) ** 2 * X * (1 + Y)))
    dt = 0.4 * grid.min_spacing / vel.max_speed
    loose = advect_interior(F, vel, dt=dt)
    tight = advect_interior(F, vel, dt=dt, conserve=True, filtered=True)
    assert abs(loose.integral() - F.integral()) > 1e-9
    assert abs(tight.integral() - F.integral()) < 1e-13


def test_surface_mass_fix(grid):
    X, Y = grid.disk_xy()
    G = SurfaceField(grid, "top", np.exp(-8 * ((X + 0.2) ** 2 + Y ** 2)))
    out = advect_surface(G, _rotation(grid), 0.4 * grid.min_spacing, conserve=True)
    assert abs(out.integral() - G.integral()) < 1e-13
    assert out.surface == "top"


def test_polar_filter_preserves_ring_means(grid):
    rng = np.random.default_rng(0)
    v = rng.normal(size=grid.shape)
    out = polar_filter(v, grid)
    assert np.allclose(out.mean(axis=1), v.mean(axis=1), atol=1e-14)
    assert np.allclose(out[-1], v[-1], atol=1e-13)
    assert np.max(np.abs(out[0] - out[0].mean(axis=0))) < np.max(np.abs(v[0] - v[0].mean(axis=0)))


def test_cfl_violation(grid):
    F = _field(grid, np.zeros(grid.shape))
    vel = _rotation(grid)
    with pytest.raises(CFLViolation):
        advect_interior(F, vel, dt=10.0)


def test_beta_forms_agree_for_small_steps(grid):
    X, Y, _ = grid.xyz()
    F = _field(grid, np.exp(-10 * (X ** 2 + Y ** 2)))
    vel = _rotation(grid)
    dt = 0.1 * grid.min_spacing
    a = advect_interior(F, vel, beta0=1.0, dt=dt, form="invariant")
    b = advect_interior(F, vel, beta0=1.0, dt=dt, form="source")
    assert np.max(np.abs(a.values - b.values)) < 1e-3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 15), st.integers(0, 31), st.integers(0, 10 ** 6))
def test_interpolation_reproduces_node_values(i, l, seed):
    g = make_grid(16, 32, 1 + 4, 1.0)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=g.disk_shape)
    interp = DiskInterpolator(g)
    r, th = g.r_nodes[i], g.theta_nodes[l]
    st_ = interp.stencil(np.array([r]), np.array([th]))
    assert interp.evaluate(interp.extend(v), st_)[0] == pytest.approx(v[i, l], abs=1e-12)


def test_particles_follow_rotation(grid):
    p = ParticleSet(np.array([[0.5, 0.0], [0.0, 0.3]]), np.array([0, 2]))
    vel = _rotation(grid)
    out = trace_particles(p, [(0.0, vel), (1.0, vel)], 0.0, 1.0, max_substep=0.05)
    assert np.allclose(out.radii(), p.radii(), atol=1e-6)
    ang = np.arctan2(out.positions[0, 1], out.positions[0, 0])
    # implicit midpoint rotates by 2 atan(dt/2) per step
    assert ang == pytest.approx(-20 * 2 * np.arctan(0.025), abs=1e-8)
    assert out.t == 1.0 and out.min_boundary_distance == pytest.approx(0.5, abs=1e-6)


def test_particles_stay_put_in_rest(grid):
    p = ParticleSet(np.array([[0.1, 0.2]]), np.array([1]))
    out = advance_particles(p, VelocityField.zeros(grid), 0.3)
    assert np.array_equal(out.positions, p.positions) and out.t == pytest.approx(0.3)


def test_particles_csv_round_trip(tmp_path):
    p = ParticleSet(np.array([[0.1, -0.2], [0.3, 0.4]]), np.array([0, 3]), t=0.25)
    write_particles(tmp_path / "p.csv", p)
    q = read_particles(tmp_path / "p.csv")
    assert np.array_equal(q.positions, p.positions)
    assert np.array_equal(q.z_label, p.z_label) and q.t == 0.25


def test_particles_must_lie_in_disk():
    with pytest.raises(ValueError):
        ParticleSet(np.array([[1.1, 0.0]]), np.array([0]))
