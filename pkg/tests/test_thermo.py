import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import erfc

from freelunch.model import QuantumStateSpec, ScenarioFlags, SystemParams
from freelunch.noise import NoiseModel, build_noise_model
from freelunch.response import InitialState
from freelunch.scan import reversible_points
from freelunch.thermo import (ForceProtocol, SecondLawViolation, analyze, equilibrium_deltas,
                              free_energy_difference, free_lunch_probability, gaussian_entropy, mean_work,
                              work_moments, work_statistics, work_variance)

P = SystemParams()
KAPPA = P.force_scale
ZERO = InitialState.zero()
QUANTUM = ScenarioFlags.quantum()
IC_ONLY = ScenarioFlags(False, False, "thermal")


def proto(n=1, theta=0.0, r=0.0, tau=1e-4, params=P):
    return ForceProtocol(QuantumStateSpec(n=n, theta=theta, r=r), params, tau)


# ---------------------------------------------------------------------------
# force and free energy


def test_zero_photons_give_zero_force():
    t = np.linspace(0, 1e-4, 11)
    np.testing.assert_array_equal(proto(n=0).force(t), 0.0)
    assert proto(n=0).amplitude == 0.0


def test_initial_force_value():
    assert proto().force(0.0) == pytest.approx(-2 * KAPPA, rel=1e-15)
    assert proto().force(0.0) == pytest.approx(-1.648e-17, rel=2e-3)


def test_squeezed_form_reduces_to_coherent_form():
    t = np.linspace(0, 1e-4, 1000)
    for theta in np.linspace(0, 2 * np.pi, 7):
        coherent = -2 * KAPPA * np.cos(P.omega_y * t + theta)
        np.testing.assert_array_equal(proto(theta=theta, r=0.0).force(t), coherent)


def test_force_rate_is_the_derivative():
    p = proto(n=3, theta=0.4, r=0.6)
    t, h = np.linspace(1e-6, 9e-5, 13), 1e-11
    fd = (p.force(t + h) - p.force(t - h)) / (2 * h)
    np.testing.assert_allclose(p.force_rate(t), fd, rtol=1e-5, atol=1e-6 * p.amplitude * P.omega_y)


def test_force_outside_window_rejected():
    with pytest.raises(ValueError):
        proto(tau=1e-5).force(2e-5)
    with pytest.raises(ValueError):
        proto().force_rate(-1e-9)
    with pytest.raises(ValueError):
        proto(tau=0.0)


def test_free_energy_at_full_period():
    dF = free_energy_difference(proto(tau=2 * np.pi / P.omega_y))
    assert dF == pytest.approx(-(2 * KAPPA) ** 2 / (2 * P.m * P.omega_x**2), rel=1e-12)
    assert dF == pytest.approx(-1.9e-28, rel=0.02)


def test_free_energy_vanishes_where_force_does():
    tau = (np.pi / 2) / P.omega_y
    assert abs(free_energy_difference(proto(tau=tau))) <= 1e-30 * 1.9e-28


@settings(max_examples=30)
@given(n=st.integers(1, 1000), tau=st.floats(1e-6, 1e-3), theta=st.floats(0, 2 * np.pi), r=st.floats(0, 1.5))
def test_free_energy_nonpositive_and_linear_in_n(n, tau, theta, r):
    one = free_energy_difference(proto(1, theta, r, tau))
    many = free_energy_difference(proto(n, theta, r, tau))
    assert one <= 0
    assert many == pytest.approx(n * one, rel=1e-12, abs=1e-300)


def test_equilibrium_route_zero_force():
    d = equilibrium_deltas(proto(tau=(np.pi / 2) / P.omega_y), P.beta)
    assert abs(d.dU) < 1e-40 and d.dS == 0.0 and abs(d.dF) < 1e-40


def test_shifted_gaussian_entropy_unchanged():
    p = proto(n=10, tau=3.3e-5)
    d = equilibrium_deltas(p, P.beta)
    assert d.dS == 0.0
    assert d.dF == d.dU
    # numerical -int p log p of the shifted final distribution
    k = P.m * P.omega_x**2
    var = 1 / (P.beta * k)
    mu = float(p.force(p.tau)) / k
    sd = math.sqrt(var)
    dens = lambda x: math.exp(-((x - mu) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)  # noqa: E731
    ent = quad(lambda x: -dens(x) * math.log(dens(x)), mu - 30 * sd, mu + 30 * sd, epsabs=0, epsrel=1e-12)[0]
    assert ent == pytest.approx(gaussian_entropy(var), rel=1e-10)


def test_equilibrium_route_matches_closed_form_for_random_protocols():
    rng = np.random.default_rng(3)
    for _ in range(10):
        p = proto(n=int(rng.integers(1, 200)), theta=rng.uniform(0, 2 * np.pi), r=rng.uniform(0, 1.2),
                  tau=10 ** rng.uniform(-5, -3))
        d = equilibrium_deltas(p, P.beta)
        assert d.dF == pytest.approx(float(free_energy_difference(p)), rel=1e-12)


def test_equilibrium_deltas_rejects_nonpositive_beta():
    with pytest.raises(ValueError):
        equilibrium_deltas(proto(), 0.0)


# ---------------------------------------------------------------------------
# mean work and variance against frozen ODE oracles (DOP853, rtol 1e-13)


@pytest.mark.parametrize("n, theta, r, tau, gamma, expected", [
    (1, 0.0, 0.0, 1e-4, P.Gamma, 1.3187166324224137e-26),
    (1, math.pi / 2, 0.0, 3.3e-5, P.Gamma, 2.222211987625714e-26),
    (4, 0.7, 0.5, 2e-4, P.Gamma, 3.2194706653364634e-26),
    (1, 0.0, 0.0, 1e-4, 1e3, 1.3480804258617654e-26),
])
def test_mean_work_matches_ode(n, theta, r, tau, gamma, expected):
    p = proto(n, theta, r, tau, SystemParams(Gamma=gamma))
    assert mean_work(p, ZERO) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("n, theta, r, tau, st_expected, nst_expected", [
    (1, 0.0, 0.0, 1e-4, 1.4853055796040022e-51, 0.0),
    (1, 0.0, 0.8, 6e-5, 6.5842334544407e-51, -8.21798423381607e-52),
    (1, 0.3, 0.5, 2.5e-5, 1.1533573720937407e-52, 5.670950205476839e-53),
])
def test_quantum_variance_matches_ode(n, theta, r, tau, st_expected, nst_expected):
    p = proto(n, theta, r, tau)
    noise = build_noise_model(P, p.state, QUANTUM)
    thermal, st_, nst = work_variance(p, ZERO, noise)
    assert thermal == 0.0
    assert st_ == pytest.approx(st_expected, rel=1e-7)
    assert nst == pytest.approx(nst_expected, rel=1e-7, abs=1e-12 * st_expected)


@pytest.mark.parametrize("n, theta, tau, expected", [
    (100, math.pi / 2, 3e-5, 3.311420216639628e-45),
    (1, 0.0, 1e-4, 2.629305714391656e-47),
])
def test_initial_condition_variance_matches_ode(n, theta, tau, expected):
    p = proto(n, theta, 0.0, tau)
    thermal, st_, nst = work_variance(p, InitialState.thermal(P), NoiseModel())
    assert (st_, nst) == (0.0, 0.0)
    assert thermal == pytest.approx(expected, rel=1e-8)


# Simpson on h(s)^2 with h from an ODE per node; both integration routes are exercised
@pytest.mark.parametrize("gamma, expected", [
    (1e3, 1.5932983942776452e-48),
    (2e4, 2.3918009774768364e-47),
])
def test_white_noise_variance_matches_oracle(gamma, expected):
    params = SystemParams(Gamma=gamma)
    p = proto(1, 0.4, 0.0, 1e-4, params)
    noise = build_noise_model(params, p.state, ScenarioFlags(True, False, "zero"))
    thermal, _, _ = work_variance(p, ZERO, noise)
    assert thermal == pytest.approx(expected, rel=1e-7)


def test_no_force_gives_zero_moments():
    p = proto(n=0)
    noise = build_noise_model(P, p.state, ScenarioFlags.full())
    assert mean_work(p, ZERO) == 0.0
    assert work_variance(p, InitialState.thermal(P), noise) == (0.0, 0.0, 0.0)


def test_no_noise_zero_init_gives_zero_budget():
    assert work_variance(proto(n=5, r=0.3), ZERO, NoiseModel()) == (0.0, 0.0, 0.0)


def test_vectorised_sweep_matches_pointwise():
    taus = np.array([1.3e-5, 4.1e-5, 2.2e-4])
    p = proto(n=2, theta=0.2, r=0.4)
    noise = build_noise_model(P, p.state, ScenarioFlags.full())
    init = InitialState.thermal(P)
    swept = work_moments(p, init, noise, taus)
    for i, t in enumerate(taus):
        single = work_moments(p.with_tau(t), init, noise)
        for key in ("W", "var_thermal", "var_q_st", "var_q_nst", "dF"):
            assert swept[key][i] == pytest.approx(single[key], rel=1e-8, abs=1e-10 * abs(single["var_q_st"]))


@pytest.mark.parametrize("flags", [ScenarioFlags.classical(), ScenarioFlags.quantum(), ScenarioFlags.full()])
def test_mean_work_and_variance_scale_with_n(flags):
    base = analyze(proto(1, 0.7, 0.3, 7e-5), flags)
    for n in (10, 100):
        s = analyze(proto(n, 0.7, 0.3, 7e-5), flags)
        assert s["W"] / n == pytest.approx(base["W"], rel=1e-9)
        assert s["var_total"] / n == pytest.approx(base["var_total"], rel=1e-9)
        assert s["I"] / math.sqrt(n) == pytest.approx(base["I"], rel=1e-9)


def test_nonstationary_part_goes_negative_while_total_stays_nonnegative():
    taus = np.geomspace(1e-5, 1e-3, 400)
    s = analyze(proto(1, 0.0, 0.8, 1e-3), QUANTUM, taus)
    assert np.any(s["var_q_nst"] < 0)
    assert np.all(s["var_total"] >= 0)


def test_reversible_durations_exist():
    # a strict sign change of W_irr, bracketed and refined by bisection
    rev = reversible_points(proto(n=100), ScenarioFlags.classical(), 1e-5, 1e-3)
    assert len(rev.roots) > 0


def test_gaussian_jarzynski_identity_at_quarter_phase():
    for tau in (1.7e-5, 6.3e-5, 2.9e-4):
        s = work_statistics(proto(10, math.pi / 2, 0.0, tau), IC_ONLY)
        assert s.W_irr == pytest.approx(P.beta * s.var_thermal / 2, rel=1e-4)


# ---------------------------------------------------------------------------
# free-lunch probability


def test_reversible_mean_gives_half():
    assert free_lunch_probability(1e-27, 1e-28, 1e-27) == (0.5, 0.0)


def test_one_sigma_tail():
    p, i = free_lunch_probability(2.0, 1.0, 1.0)
    assert i == 1.0
    assert p == pytest.approx(0.15865525393145705, rel=1e-15)


def test_far_tail_does_not_underflow_to_garbage():
    p, _ = free_lunch_probability(40.0, 1.0, 0.0)
    # the exact value is about 4e-350, below the smallest subnormal double
    assert 0.0 <= p < 1e-300 and math.isfinite(p)
    assert free_lunch_probability(37.0, 1.0, 0.0)[0] == pytest.approx(0.5 * erfc(37 / math.sqrt(2)), rel=1e-13)
    assert 0 < free_lunch_probability(37.0, 1.0, 0.0)[0] < 1e-298


@pytest.mark.parametrize("i", np.linspace(-0.0, 6.0, 13))
def test_probability_matches_high_precision_erfc(i):
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    p, _ = free_lunch_probability(i, 1.0, 0.0)
    assert p == pytest.approx(float(mpmath.erfc(mpmath.mpf(i) / mpmath.sqrt(2)) / 2), rel=1e-12)


def test_delta_limit():
    assert free_lunch_probability(-1e-28, 0.0, -1e-28)[0] == 0.5
    p, i = free_lunch_probability(1e-27, 0.0, -1e-28)
    assert p == 0.0 and i == math.inf


def test_second_law_violation_raises():
    with pytest.raises(SecondLawViolation):
        free_lunch_probability(-2e-28, 1e-29, -1e-28)
    with pytest.raises(ValueError):
        free_lunch_probability(0.0, -1.0, 0.0)


def test_quadrature_tolerance_widens_guard():
    dF = -1e-28
    W = dF - 1e-33
    with pytest.raises(SecondLawViolation):
        free_lunch_probability(W, 1e-30, dF)
    assert free_lunch_probability(W, 1e-30, dF, abs_tol=1e-32)[0] == 0.5


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 100), theta=st.floats(0, 2 * np.pi), r=st.floats(0, 1.0), tau=st.floats(1e-5, 1e-3),
       which=st.sampled_from(["classical", "quantum", "full"]))
def test_second_law_and_gaussian_bound(n, theta, r, tau, which):
    flags = getattr(ScenarioFlags, which)()
    s = work_statistics(proto(n, theta, r, tau), flags)
    assert s.W - s.dF >= -1e-6 * abs(s.dF) - 1e-12 * abs(s.W)
    assert s.P_freelunch <= 0.5 + 1e-9
    assert s.var_total >= 0
