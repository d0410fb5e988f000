import numpy as np
import pytest
import sympy as sp
from scipy.integrate import solve_ivp

from cylqg import StratificationProfile, solve_vertical_chart, validate_profile
from cylqg.stratification import chart_inverse


def test_constant_and_poly_flat_pass():
    assert validate_profile(StratificationProfile.constant(1.0, 1.0)).passed
    assert validate_profile(StratificationProfile.poly_flat(2.0, 1.0, 2.0)).passed


def test_cosine_profile_fails_second_derivative_only():
    rep = validate_profile(StratificationProfile.from_expression("2 + cos(pi*z/h)", 1.0))
    assert "flat_k2" in rep.failures()
    assert "flat_k1" not in rep.failures()
    assert rep.residuals["flat_k2"] == pytest.approx(np.pi ** 2, rel=1e-12)


def test_bound_violation_detected():
    rep = validate_profile(StratificationProfile.constant(0.2, 1.0, bound=2.0))
    assert rep.failures() == ["lower_bound"]


def test_poly_flat_derivatives_match_sympy():
    z = sp.symbols("z")
    h, b, a = 1.7, 2.0, 0.8
    lam = b + a * (z * (h - z)) ** 4 / (h / 2) ** 8
    prof = StratificationProfile.poly_flat(b, a, h)
    pts = np.linspace(0, h, 9)
    for k in range(4):
        exact = sp.lambdify(z, sp.diff(lam, z, k))(pts)
        got = prof(pts) if k == 0 else prof.derivative(pts, k)
        assert np.allclose(got, exact, atol=1e-12)


def test_samples_profile_recovers_poly_flat():
    h = 1.0
    ref = StratificationProfile.poly_flat(2.0, 1.0, h)
    zs = np.linspace(0, h, 129)
    prof = StratificationProfile.from_samples(ref(zs), h)
    z = np.linspace(0, h, 37)
    # cubic spline on 128 intervals: O(dz^4) in value, O(dz^3) in slope
    assert np.max(np.abs(prof(z) - ref(z))) < 1e-6
    assert np.max(np.abs(prof.derivative(z, 1) - ref.derivative(z, 1))) < 1e-4


def test_sampled_flatness_residuals_shrink_with_resolution():
    ref = StratificationProfile.poly_flat(2.0, 1.0, 1.0)
    res = [validate_profile(StratificationProfile.from_samples(ref(np.linspace(0, 1, n)), 1.0))
           .residuals for n in (129, 257)]
    for k in (1, 2, 3):
        assert res[1][f"flat_k{k}"] < res[0][f"flat_k{k}"] / 2


def test_from_spec_unknown_kind_lists_kinds():
    with pytest.raises(ValueError, match="constant, poly-flat, samples"):
        StratificationProfile.from_spec({"kind": "wavy"}, 1.0)


@pytest.mark.parametrize("value,slope", [(1.0, 1.0), (4.0, 2.0)])
def test_chart_constant_profiles(value, slope):
    prof = StratificationProfile.constant(value, 1.5)
    ch = solve_vertical_chart(prof)
    assert np.allclose(ch.theta_nodes, slope * ch.z_nodes, atol=1e-12)
    assert ch.h_tilde == pytest.approx(slope * 1.5, abs=1e-12)


@pytest.fixture(scope="module")
def varying():
    prof = StratificationProfile.poly_flat(2.0, 1.0, 2.0)
    s_top = float(chart_inverse(prof, prof.h)[0])
    return prof, s_top, solve_vertical_chart(prof, 1e-12, z_nodes=np.linspace(0, s_top, 17))


def test_chart_matches_independent_ode_solver(varying):
    prof, s_top, ch = varying
    sol = solve_ivp(lambda _, y: np.sqrt(prof(y)), (0, s_top), [0.0], t_eval=ch.z_nodes,
                    rtol=1e-12, atol=1e-13, method="DOP853")
    assert np.max(np.abs(sol.y[0] - ch.theta_nodes)) < 1e-9
    assert np.all(np.diff(ch.theta_nodes) > 0) and ch.theta_nodes[0] == 0.0
    assert ch.h_tilde == pytest.approx(prof.h, abs=1e-9)


def test_chart_inverse_round_trip(varying):
    prof, _, ch = varying
    assert np.max(np.abs(chart_inverse(prof, ch.theta_nodes) - ch.z_nodes)) < 1e-10
    assert np.max(np.abs(ch.inverse(ch.theta_nodes) - ch.z_nodes)) < 1e-10
