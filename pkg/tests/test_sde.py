import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughgreeks.drift import CapabilityError, RegimeSwitching, Smooth, linear_drift, mollify, zero_drift
from roughgreeks.noise import NoiseBundle, Scaled, TimeGrid, sample_bundle, wiener_paths
from roughgreeks.sde import (
    euler_solve,
    first_variation_euler,
    first_variation_exp,
    first_variation_localtime,
    local_time_space_integral,
)

SINE = Smooth(lambda t, y: np.sin(y) + 0.3 * np.cos(2 * t), lambda t, y: np.cos(y), name="sine")


@pytest.fixture(scope="module")
def bundle():
    return sample_bundle(TimeGrid(1.0, 128), 0.1, Scaled(1.0, 0.7), seed=21, n_paths=64)


@settings(max_examples=25, deadline=None)
@given(st.floats(-50, 50))
def test_zero_drift_is_bitwise_identity(x0):
    b = sample_bundle(TimeGrid(1.0, 16), 0.1, seed=1, n_paths=4)
    assert np.array_equal(euler_solve(zero_drift(), b, x0).X, x0 + b.BH)


def test_linear_ode_on_frozen_noise():
    g = TimeGrid(1.0, 200)
    p = euler_solve(linear_drift(0.5), NoiseBundle.frozen(g), 2.0)
    assert p.X[0, -1] == pytest.approx(2.0 * (1 - 0.5 * g.delta) ** g.N, rel=1e-13)
    assert abs(p.X[0, -1] - 2.0 * np.exp(-0.5)) < 2.0 * g.delta


def test_regime_below_threshold_follows_lower_branch():
    rs = RegimeSwitching(1.0, 2.0, -3.0, 1.0, 0.0)
    g = TimeGrid(1.0, 100)
    p = euler_solve(rs, NoiseBundle.frozen(g), -5.0, sign=-1.0)
    y = -5.0
    for i in range(g.N):
        y = y - 1.0 * (y + 3.0) * g.delta
        assert p.X[0, i + 1] == pytest.approx(y, rel=1e-14)
    assert np.all(p.X < 0)


def test_per_path_initial_values(bundle):
    x0 = np.linspace(-1, 1, bundle.n_paths)
    p = euler_solve(SINE, bundle, x0)
    np.testing.assert_array_equal(p.X[:, 0], x0)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(0.01, 2))
def test_monotone_flow(x, gap):
    b = sample_bundle(TimeGrid(1.0, 64), 0.1, seed=2, n_paths=16)
    lo = euler_solve(SINE, b, x).X
    hi = euler_solve(SINE, b, x + gap).X
    assert np.all(lo <= hi)


def test_exp_route_trivial_cases(bundle):
    assert np.all(first_variation_exp(zero_drift(), euler_solve(zero_drift(), bundle, 0.0)) == 1.0)
    g = bundle.grid
    J = first_variation_exp(linear_drift(0.7), euler_solve(linear_drift(0.7), bundle, 1.0))
    np.testing.assert_allclose(J, np.broadcast_to(np.exp(-0.7 * g.nodes), J.shape), rtol=1e-12)


def test_exp_route_requires_derivative(bundle):
    rs = RegimeSwitching(1.0, 1.0, -1.0, 1.0, 0.0)
    with pytest.raises(CapabilityError):
        first_variation_exp(rs, euler_solve(rs, bundle, 0.0))


def test_exp_route_matches_finite_difference():
    g = TimeGrid(1.0, 1024)
    b = sample_bundle(g, 0.1, seed=4, n_paths=50)
    h = 1e-5
    fd = (euler_solve(SINE, b, 0.3 + h).X - euler_solve(SINE, b, 0.3).X) / h
    J = first_variation_exp(SINE, euler_solve(SINE, b, 0.3))
    assert np.max(np.abs(fd - J)) <= 1e-3


def test_euler_tangent_is_exact_derivative_of_scheme(bundle):
    h = 1e-6
    fd = (euler_solve(SINE, bundle, 0.3 + h).X - euler_solve(SINE, bundle, 0.3 - h).X) / (2 * h)
    J = first_variation_euler(SINE, euler_solve(SINE, bundle, 0.3))
    np.testing.assert_allclose(J, fd, atol=1e-7)


def test_secant_rule(bundle):
    p = euler_solve(linear_drift(0.7), bundle, 1.0)
    np.testing.assert_allclose(first_variation_exp(linear_drift(0.7), p, rule="secant"),
                               first_variation_exp(linear_drift(0.7), p), rtol=1e-12)
    q = euler_solve(SINE, bundle, 0.3)
    diff = first_variation_exp(SINE, q, rule="secant") - first_variation_exp(SINE, q)
    assert np.max(np.abs(diff)) < 0.2
    with pytest.raises(ValueError):
        first_variation_exp(SINE, q, rule="middle")


def test_local_time_of_zero_function_vanishes():
    g = TimeGrid(1.0, 64)
    _, W = wiener_paths(g, 1, 5)
    assert np.all(local_time_space_integral(lambda t, y: 0 * y, W, g) == 0)


def test_local_time_of_constant_has_zero_mean():
    g = TimeGrid(1.0, 1024)
    _, W = wiener_paths(g, 2, 1000)
    v = local_time_space_integral(lambda t, y: 2.0 + 0 * y, W, g)
    assert abs(v.mean()) <= 3 * v.std() / np.sqrt(v.size)


@pytest.mark.parametrize("upto", [512, 1024])
def test_local_time_integration_by_parts(upto):
    g = TimeGrid(1.0, 1024)
    _, W = wiener_paths(g, 3, 1000)
    v = local_time_space_integral(lambda t, y: y, W, g, upto=upto) + g.nodes[upto]
    assert abs(v.mean()) <= 3 * v.std() / np.sqrt(v.size)


def test_local_time_pathwise_error_shrinks():
    errs = []
    for N in (256, 4096):
        g = TimeGrid(1.0, N)
        _, W = wiener_paths(g, 5, 100)
        errs.append(np.abs(local_time_space_integral(lambda t, y: np.sin(y), W, g, x=0.4)
                           + np.sum(np.cos(0.4 + W[:, :-1]), axis=1) * g.delta).mean())
    assert errs[1] < errs[0] / 2


def test_local_time_route_trivial_and_errors(bundle):
    p = euler_solve(zero_drift(), bundle, 0.0)
    assert np.all(first_variation_localtime(zero_drift(), bundle, p, 1.0, 0.7) == 1.0)
    with pytest.raises(CapabilityError):
        first_variation_localtime(zero_drift(), bundle, p, 1.0, 0.0)


def test_local_time_route_matches_exp_route_for_smooth_drift():
    g = TimeGrid(1.0, 2048)
    b = sample_bundle(g, 0.1, Scaled(1.0, 0.5), seed=6, n_paths=300)
    p = euler_solve(SINE, b, 0.3)
    d = first_variation_localtime(SINE, b, p, 1.0, 0.5)[:, -1] - first_variation_exp(SINE, p)[:, -1]
    assert abs(d.mean()) <= 3 * d.std() / np.sqrt(d.size)
    assert np.abs(d).mean() < 0.05


def test_mollified_regime_routes_agree():
    rs = RegimeSwitching(1.0, 1.0, np.log(0.15), np.log(0.3), np.log(0.2))
    g = TimeGrid(1.0, 1024)
    b = sample_bundle(g, 0.1, Scaled(1.0, 1.0), seed=8, n_paths=500)
    raw = euler_solve(rs, b, rs.R, sign=-1.0)
    J_raw = first_variation_localtime(rs, b, raw, 1.0, 1.0)[:, -1]
    m = mollify(rs, 16)
    J_m = first_variation_localtime(m, b, euler_solve(m, b, rs.R, sign=-1.0), 1.0, 1.0)[:, -1]
    d = J_m - J_raw
    assert abs(d.mean()) <= 3 * d.std() / np.sqrt(d.size)
