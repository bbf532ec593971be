import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from freelunch.model import QuantumStateSpec, ScenarioFlags, SystemParams
from freelunch.noise import NoiseModel, build_noise_model
from freelunch.response import (InitialState, homogeneous_basis, homogeneous_solution, impulse_response,
                                mean_position, position_covariance)

P = SystemParams()
UNDAMPED = SystemParams(Gamma=0.0)
DAMPED = SystemParams(Gamma=2e4)


def test_impulse_response_basics():
    assert impulse_response(P, 0.0) == 0.0
    h = 1e-12 / P.omega_x
    assert impulse_response(P, h) / h == pytest.approx(1 / P.m, rel=1e-9)
    with pytest.raises(ValueError):
        impulse_response(P, -1e-9)


def test_impulse_response_undamped_closed_form():
    t = np.linspace(0, 3e-5, 17)
    expected = np.sin(UNDAMPED.omega_x * t) / (UNDAMPED.m * UNDAMPED.omega_x)
    np.testing.assert_allclose(impulse_response(UNDAMPED, t), expected, rtol=1e-12, atol=1e-30)


def test_impulse_response_decay_envelope():
    t = np.linspace(0, 1e-4, 4001)
    env = 2 / (DAMPED.m * DAMPED.Omega) * np.exp(-DAMPED.Gamma * t / 2)
    assert np.all(np.abs(impulse_response(DAMPED, t)) <= env * (1 + 1e-12))


def test_homogeneous_initial_conditions():
    c, s, cd, sd = homogeneous_basis(DAMPED, 0.0)
    assert (c, s, cd, sd) == (1.0, 0.0, 0.0, 1.0)


def test_homogeneous_undamped_is_cosine():
    t = np.linspace(0, 5e-5, 11)
    np.testing.assert_allclose(homogeneous_solution(UNDAMPED, 2e-9, 0.0, t),
                               2e-9 * np.cos(UNDAMPED.omega_x * t), rtol=1e-12, atol=1e-24)


def _ode(params, x0, v0, tmax, force=lambda t: 0.0):
    def rhs(t, y):
        return [y[1], -params.Gamma * y[1] - params.omega_x**2 * y[0] + force(t) / params.m]
    return solve_ivp(rhs, (0, tmax), [x0, v0], method="DOP853", rtol=1e-12,
                     atol=[1e-14 * max(abs(x0), 1e-9), 1e-14 * max(abs(v0), 1e-4)], dense_output=True)


def test_homogeneous_solution_matches_ode():
    x0, v0 = 1e-9, 3e-4
    sol = _ode(DAMPED, x0, v0, 4e-5)
    t = np.linspace(0, 4e-5, 9)
    np.testing.assert_allclose(homogeneous_solution(DAMPED, x0, v0, t), sol.sol(t)[0], rtol=1e-8, atol=1e-18)


def test_homogeneous_residual_by_finite_differences():
    x0, v0, t, h = 1e-9, 3e-4, 2.3e-5, 1e-9
    x = lambda tt: homogeneous_solution(DAMPED, x0, v0, tt)  # noqa: E731
    xdd = (x(t + h) - 2 * x(t) + x(t - h)) / h**2
    xd = (x(t + h) - x(t - h)) / (2 * h)
    residual = xdd + DAMPED.Gamma * xd + DAMPED.omega_x**2 * x(t)
    assert abs(residual) <= 1e-6 * DAMPED.omega_x**2 * abs(x0)
    assert (-3 * x(0.0) + 4 * x(h) - x(2 * h)) / (2 * h) == pytest.approx(v0, rel=1e-6)


def test_undamped_energy_conserved():
    t = np.linspace(0, 1e-3, 257)
    x0, v0 = 1e-9, 5e-4
    c, s, cd, sd = homogeneous_basis(UNDAMPED, t)
    x = x0 * c + v0 * s
    v = x0 * cd + v0 * sd
    E = 0.5 * (v**2 + UNDAMPED.omega_x**2 * x**2)
    np.testing.assert_allclose(E, E[0], rtol=1e-10)


def test_mean_position_zero_without_force():
    t = np.linspace(0, 1e-4, 5)
    np.testing.assert_array_equal(mean_position(P, lambda u: 0.0 * u, InitialState.thermal(P), t), 0.0)


def test_mean_position_constant_force_closed_form():
    F = 1e-17
    t = np.linspace(0, 1e-4, 7)
    got = mean_position(UNDAMPED, lambda u: F + 0 * u, InitialState.zero(), t)
    expected = F / (UNDAMPED.m * UNDAMPED.omega_x**2) * (1 - np.cos(UNDAMPED.omega_x * t))
    np.testing.assert_allclose(got, expected, rtol=1e-9, atol=1e-12 * np.max(expected))


def test_mean_position_resonant_growth_matches_ode():
    w = UNDAMPED.omega_x
    force = lambda u: 1e-17 * np.cos(w * u)  # noqa: E731
    t = np.linspace(1e-6, 1e-4, 23)
    got = mean_position(UNDAMPED, force, InitialState.zero(), t)
    sol = _ode(UNDAMPED, 0.0, 0.0, 1e-4, force)
    scale = np.max(np.abs(got))
    np.testing.assert_allclose(got, sol.sol(t)[0], rtol=1e-7, atol=1e-9 * scale)
    np.testing.assert_allclose(got, 1e-17 * t * np.sin(w * t) / (2 * UNDAMPED.m * w), rtol=1e-9, atol=1e-12 * scale)


def test_mean_position_superposition():
    t = np.linspace(0, 6e-5, 9)
    f1 = lambda u: 1e-17 * np.sin(3e5 * u)  # noqa: E731
    f2 = lambda u: 2e-17 * np.cos(1e6 * u)  # noqa: E731
    init = InitialState.zero()
    a = mean_position(P, f1, init, t, omega_max=1e6)
    b = mean_position(P, f2, init, t, omega_max=1e6)
    ab = mean_position(P, lambda u: f1(u) + f2(u), init, t, omega_max=1e6)
    np.testing.assert_allclose(ab, a + b, rtol=1e-9, atol=1e-9 * np.max(np.abs(ab)))


def test_thermal_variance_constant_without_noise():
    p = UNDAMPED
    init = InitialState.thermal(p)
    target = p.k_B * p.T / (p.m * p.omega_x**2)
    for t in (0.0, 1.3e-6, 7.7e-5):
        assert position_covariance(p, NoiseModel(), init, t, t) == pytest.approx(target, rel=1e-12)


def test_no_noise_zero_init_gives_zero_covariance():
    assert position_covariance(P, NoiseModel(), InitialState.zero(), 1e-5, 2e-5) == 0.0


# brute-force oracle: 2D Simpson on 801 x 801 nodes of G(t-u) G(t'-v) K(u, v), r = 0.5
@pytest.mark.parametrize("t1, t2, expected", [
    (2e-5, 3.1e-5, -1.90407520564484e-20),
    (1e-5, 1e-5, 2.425794814323332e-21),
])
def test_quadrature_noise_covariance_matches_brute_force(t1, t2, expected):
    model = build_noise_model(P, QuantumStateSpec(r=0.5), ScenarioFlags.quantum())
    got = position_covariance(P, model, InitialState.zero(), t1, t2)
    assert got == pytest.approx(expected, rel=1e-6)


@settings(deadline=None, max_examples=25)
@given(t1=st.floats(0.0, 5e-5), t2=st.floats(0.0, 5e-5), r=st.floats(0.0, 1.5))
def test_covariance_symmetric(t1, t2, r):
    model = build_noise_model(DAMPED, QuantumStateSpec(r=r), ScenarioFlags.full())
    init = InitialState.thermal(DAMPED)
    a = position_covariance(DAMPED, model, init, t1, t2)
    b = position_covariance(DAMPED, model, init, t2, t1)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12 * abs(position_covariance(DAMPED, model, init, t1, t1)))


def test_covariance_matrix_is_psd():
    model = build_noise_model(DAMPED, QuantumStateSpec(r=1.0), ScenarioFlags.full())
    init = InitialState.thermal(DAMPED)
    grid = np.linspace(0, 4e-5, 24)
    C = np.array([[position_covariance(DAMPED, model, init, a, b) for b in grid] for a in grid])
    vals = np.linalg.eigvalsh(0.5 * (C + C.T))
    assert vals.min() >= -1e-12 * np.trace(C)


def test_covariance_additive_over_components():
    full = build_noise_model(DAMPED, QuantumStateSpec(r=0.4), ScenarioFlags(True, True, "zero"))
    white = build_noise_model(DAMPED, QuantumStateSpec(r=0.4), ScenarioFlags(True, False, "zero"))
    quad = build_noise_model(DAMPED, QuantumStateSpec(r=0.4), ScenarioFlags(False, True, "zero"))
    z = InitialState.zero()
    total = position_covariance(DAMPED, full, z, 1.7e-5, 3e-5)
    parts = position_covariance(DAMPED, white, z, 1.7e-5, 3e-5) + position_covariance(DAMPED, quad, z, 1.7e-5, 3e-5)
    assert total == pytest.approx(parts, rel=1e-12)


def test_initial_state_presets():
    th = InitialState.thermal(P)
    kT = P.k_B * P.T
    assert (th.var_x0, th.var_v0) == pytest.approx((kT / (P.m * P.omega_x**2), kT / P.m))
    assert InitialState.zero().covariance.sum() == 0.0
    with pytest.raises(ValueError):
        InitialState(var_x0=1.0, var_v0=1.0, cov_x0v0=2.0)
    assert math.isfinite(th.var_x0)
