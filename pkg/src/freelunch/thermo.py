"""Work statistics, free energy and free-lunch probabilities.

The work done by the deterministic force on the classical particle is

    w = - int_0^tau f'(t) x(t) dt,

a linear functional of Gaussian inputs. Its mean and variance follow from
the response functions in :mod:`freelunch.response`. Every double integral
over a noise kernel is evaluated through the kernel's rank factorisation:

* initial-state spread: two linear functionals u_c, u_s of the basis c, s;
* quadrature noise: two functionals alpha, beta of the cos/sin responses;
* white noise: the double integral collapses to a single integral of h(s)^2
  with h(s) = int_s^tau f'(t) G(t - s) dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .model import QuantumStateSpec, ScenarioFlags, SystemParams, validate_params
from .noise import NoiseModel, build_noise_model
from .quadrature import PanelRule, exp_convolution, refine_until_converged, running_integral
from .response import InitialState, eigenvalue, homogeneous_basis, impulse_response

REL_TOL = 1e-9
ABS_FLOOR = 1e-12
SECOND_LAW_REL = 1e-6
SECOND_LAW_FLOOR = 1e-35  # J


class SecondLawViolation(ArithmeticError):
    """Analytic mean work fell below the free-energy difference."""


@dataclass(frozen=True)
class ForceProtocol:
    state: QuantumStateSpec
    params: SystemParams
    tau: float

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"protocol duration must be > 0, got {self.tau!r}")

    @property
    def amplitude(self) -> float:
        """2 sqrt(n) hbar g / zpf [N]."""
        return 2.0 * math.sqrt(self.state.n) * self.params.force_scale

    @property
    def omega(self) -> float:
        return self.params.omega_y

    def with_tau(self, tau) -> "ForceProtocol":
        return ForceProtocol(self.state, self.params, float(tau))

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.tau * (1 + 1e-12)):
            raise ValueError(f"time outside the protocol window [0, {self.tau!r}]")
        return t

    def _f(self, t):
        r, th, w = self.state.r, self.state.theta, self.omega
        return -self.amplitude * (np.cosh(r) * np.cos(w * t + th) + np.sinh(r) * np.sin(w * t - th))

    def _fdot(self, t):
        r, th, w = self.state.r, self.state.theta, self.omega
        return self.amplitude * w * (np.cosh(r) * np.sin(w * t + th) - np.sinh(r) * np.cos(w * t - th))

    def force(self, t):
        return self._f(self._check(t))

    def force_rate(self, t):
        return self._fdot(self._check(t))


def deterministic_force(proto: ForceProtocol, t):
    return proto.force(t)


def force_rate(proto: ForceProtocol, t):
    return proto.force_rate(t)


def free_energy_difference(proto: ForceProtocol, tau=None) -> float:
    """-f(tau)^2 / (2 m omega_x^2); ``tau`` may be an array for sweeps."""
    tau = proto.tau if tau is None else tau
    f = proto._f(np.asarray(tau, dtype=float))
    return -(f**2) / (2.0 * proto.params.m * proto.params.omega_x**2)


@dataclass(frozen=True)
class EquilibriumDeltas:
    dU: float
    dS: float
    dF: float


def gaussian_entropy(variance) -> float:
    """Shannon entropy (nats) of a normal distribution."""
    return 0.5 * math.log(2.0 * math.pi * math.e * variance)


def equilibrium_deltas(proto: ForceProtocol, beta: float) -> EquilibriumDeltas:
    """Energy, entropy and free-energy differences between the two equilibria.

    Initial: p0(x) ~ exp(-beta k x^2/2). Final: p(x) ~ exp(-beta (k x^2/2 - f x))
    with k = m omega_x^2 and f = f(tau).
    """
    if not beta > 0:
        raise ValueError("beta must be > 0")
    k = proto.params.m * proto.params.omega_x**2
    f = float(proto._f(proto.tau))
    var0 = 1.0 / (beta * k)
    # completing the square: final density is N(f/k, 1/(beta k))
    var_f = 1.0 / (beta * k)
    mean_f = f / k
    # <k x^2/2 - f x>_final - <k x^2/2>_0, grouped so the thermal parts cancel exactly
    dU = 0.5 * k * (var_f - var0) + (0.5 * k * mean_f**2 - f * mean_f)
    dS = gaussian_entropy(var_f) - gaussian_entropy(var0)
    dF = dU - dS / beta
    expected = float(free_energy_difference(proto))
    if not math.isclose(dF, expected, rel_tol=1e-12, abs_tol=1e-300):
        raise ArithmeticError(f"equilibrium route gives dF={dF!r}, closed form {expected!r}")
    return EquilibriumDeltas(dU, dS, dF)


@dataclass(frozen=True)
class WorkStatistics:
    W: float
    var_thermal: float
    var_quantum_stationary: float
    var_quantum_nonstationary: float
    dF: float
    W_irr: float
    I: float
    P_freelunch: float
    tau: float = float("nan")
    n: float = float("nan")
    fingerprint: tuple = field(default=(), compare=False, repr=False)

    @property
    def var_total(self):
        return self.var_thermal + self.var_quantum_stationary + self.var_quantum_nonstationary

    @property
    def sigma_W(self):
        return math.sqrt(max(self.var_total, 0.0))


# ---------------------------------------------------------------------------
# work moments


def _fastest(proto: ForceProtocol):
    p = proto.params
    return max(p.omega_x, 0.5 * p.Omega, p.omega_y)


def _scales(proto: ForceProtocol, tmax):
    p = proto.params
    amp = proto.amplitude * (math.cosh(proto.state.r) + math.sinh(proto.state.r)) or 1.0
    cycles = 1.0 + p.omega_y * tmax
    u_scale = amp * cycles
    x_scale = 1.0 / (p.m * p.omega_x**2)
    return {
        "W": (REL_TOL, ABS_FLOOR * amp * u_scale * x_scale),
        "u_c": (REL_TOL, ABS_FLOOR * u_scale),
        "u_s": (REL_TOL, ABS_FLOOR * u_scale / p.omega_x),
        "alpha": (REL_TOL, ABS_FLOOR * u_scale * x_scale),
        "beta": (REL_TOL, ABS_FLOOR * u_scale * x_scale),
    }


def _moments_on_rule(proto: ForceProtocol, init: InitialState, omegas, taus, rule, white):
    """Linear functionals of the work at every tau, on one fixed panel rule."""
    p = proto.params
    lam = eigenvalue(p)
    pref = 2.0 / (p.m * p.Omega)
    f, fdot = proto._f, proto._fdot

    def responses(t):
        # stack: deterministic force, then cos/sin per quadrature frequency
        def forcing(u):
            rows = [f(u)]
            for w in omegas:
                rows.append(np.cos(w * u))
                rows.append(np.sin(w * u))
            return np.stack(rows)
        return pref * exp_convolution(lam, forcing, t, rule).imag

    def integrand(t):
        c, s, _, _ = homogeneous_basis(p, t)
        resp = responses(t)
        xbar = init.mean_x0 * c + init.mean_v0 * s + resp[0]
        fd = fdot(t)
        rows = [-fd * xbar, fd * c, fd * s]
        rows.extend(fd * resp[1:])
        return np.stack(rows)

    vals = running_integral(integrand, taus, rule)
    out = {"W": vals[0], "u_c": vals[1], "u_s": vals[2]}
    out["alpha"] = vals[3::2] if omegas else np.zeros((0,) + np.shape(taus))
    out["beta"] = vals[4::2] if omegas else np.zeros((0,) + np.shape(taus))
    if white:
        out["white"] = _white_cumulative(proto, taus, rule)
    return out


def _white_cumulative(proto: ForceProtocol, taus, rule):
    """int_0^tau h_tau(s)^2 ds for all taus at once (needs Gamma*tau small).

    h_tau(s) = pref * Im[E(s) (P(tau) - P(s))], E(s) = exp(-lam s),
    P(s) = int_0^s exp(lam t) f'(t) dt; expanding the square leaves only
    running integrals in s.
    """
    p = proto.params
    lam = eigenvalue(p)
    pref = 2.0 / (p.m * p.Omega)
    fdot = proto._fdot

    def P(s):
        return running_integral(lambda t: np.exp(lam * t) * fdot(t), s, rule)

    def integrand(s):
        E = np.exp(-lam * s)
        e1, e2 = E.imag, E.real
        q = (E * P(s)).imag
        return np.stack([e1 * e1, e2 * e2, e1 * e2, q * q, e1 * q, e2 * q])

    I = running_integral(integrand, taus, rule)
    A = P(np.asarray(taus, dtype=float))
    a1, a2 = A.real, A.imag
    val = (a1 * a1 * I[0] + a2 * a2 * I[1] + 2 * a1 * a2 * I[2] + I[3]
           - 2 * a1 * I[4] - 2 * a2 * I[5])
    return pref**2 * val


def _white_single(proto: ForceProtocol, tau, omega_max):
    """int_0^tau h_tau(s)^2 ds by a reversed causal convolution; any Gamma."""
    p = proto.params
    lam = eigenvalue(p)
    pref = 2.0 / (p.m * p.Omega)
    fdot = proto._fdot

    def evaluate(rl):
        # V(s') = int_0^s' exp(lam (s'-u)) f'(tau-u) du, s' = tau - s
        def h2(sp):
            v = exp_convolution(lam, lambda u: fdot(tau - u), sp, rl)
            return (pref * v.imag) ** 2
        return {"white": rl.integrate(h2)}

    rule = PanelRule.for_frequency(tau, omega_max)
    scale = tau * (proto.amplitude * (1 + p.omega_y * tau) / (p.m * p.omega_x**2)) ** 2
    return float(refine_until_converged(evaluate, rule, {"white": (REL_TOL, ABS_FLOOR * scale)})["white"])


def work_moments(proto: ForceProtocol, init: InitialState, noise: NoiseModel, taus=None):
    """Mean work and variance budget at every duration in ``taus``.

    Returns a dict of arrays: W, var_thermal, var_q_st, var_q_nst, dF.
    """
    scalar = taus is None
    taus = np.atleast_1d(np.asarray(proto.tau if scalar else taus, dtype=float))
    if np.any(taus <= 0):
        raise ValueError("durations must be > 0")
    tmax = float(taus.max())
    p = proto.params
    quad = noise.quadrature
    omegas = [c.omega for c in quad]
    D = noise.white_strength
    cumulative_white = D > 0 and p.Gamma * tmax <= 1.0
    omega_max = max([_fastest(proto)] + omegas)

    tol = _scales(proto, tmax)
    if cumulative_white:
        x_scale = proto.amplitude * (1 + p.omega_y * tmax) / (p.m * p.omega_x**2)
        tol["white"] = (REL_TOL, ABS_FLOOR * tmax * x_scale**2)

    rule = PanelRule.for_frequency(tmax, omega_max)
    if proto.amplitude == 0:
        mom = {k: np.zeros_like(taus) for k in ("W", "u_c", "u_s")}
        mom["alpha"] = np.zeros((len(omegas),) + taus.shape)
        mom["beta"] = np.zeros((len(omegas),) + taus.shape)
        mom["white"] = np.zeros_like(taus)
    else:
        mom = refine_until_converged(
            lambda rl: _moments_on_rule(proto, init, omegas, taus, rl, cumulative_white), rule, tol
        )
        if D > 0 and not cumulative_white:
            mom["white"] = np.array([_white_single(proto, t, omega_max) for t in taus])
        elif D == 0:
            mom["white"] = np.zeros_like(taus)

    u_c, u_s = mom["u_c"], mom["u_s"]
    var_ic = init.var_x0 * u_c**2 + init.var_v0 * u_s**2 + 2 * init.cov_x0v0 * u_c * u_s
    var_white = D * np.maximum(mom["white"], 0.0)
    st = np.zeros_like(taus)
    nst = np.zeros_like(taus)
    for k, comp in enumerate(quad):
        a2 = mom["alpha"][k] ** 2
        b2 = mom["beta"][k] ** 2
        st = st + comp.stationary_amplitude * (a2 + b2)
        nst = nst + comp.nonstationary_amplitude * (a2 - b2)
    out = {
        "tau": taus,
        "W": mom["W"],
        "var_thermal": var_ic + var_white,
        "var_q_st": st,
        "var_q_nst": nst,
        "dF": free_energy_difference(proto, taus),
    }
    if scalar:
        out = {k: float(v[0]) for k, v in out.items()}
    return out


def mean_work(proto: ForceProtocol, init: InitialState) -> float:
    return work_moments(proto, init, NoiseModel())["W"]


def work_variance(proto: ForceProtocol, init: InitialState, noise: NoiseModel):
    """(sigma_beta^2, sigma_q_st^2, sigma_q_nst^2) in J^2."""
    mom = work_moments(proto, init, noise)
    return mom["var_thermal"], mom["var_q_st"], mom["var_q_nst"]


# ---------------------------------------------------------------------------
# free lunch


def second_law_tolerance(dF):
    return SECOND_LAW_REL * np.maximum(np.abs(dF), SECOND_LAW_FLOOR)


def free_lunch_probability(W, sigma_W, dF, abs_tol=0.0):
    """Return (P(w < dF), I) for Gaussian work of mean W and spread sigma_W.

    P = erfc(I/sqrt 2)/2 with I = (W - dF)/sigma_W. For sigma_W = 0 the
    distribution is a delta: P = 1/2 when W = dF, else 0. Works elementwise
    on arrays. ``abs_tol`` widens the second-law guard by the absolute
    accuracy of the quadrature that produced W.
    """
    W, sigma_W, dF = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (W, sigma_W, dF)))
    if np.any(sigma_W < 0):
        raise ValueError("sigma_W must be >= 0")
    w_irr = W - dF
    tol = np.maximum(second_law_tolerance(dF), abs_tol)
    bad = w_irr < -tol
    if np.any(bad):
        worst = float(np.min(w_irr[bad] / np.maximum(np.abs(dF[bad]), SECOND_LAW_FLOOR)))
        raise SecondLawViolation(
            f"mean work below free energy (W - dF)/|dF| = {worst:.3e}; quadrature or model bug"
        )
    w_irr = np.where(w_irr < 0, 0.0, w_irr)
    with np.errstate(divide="ignore", invalid="ignore"):
        I = np.where(sigma_W > 0, w_irr / np.where(sigma_W > 0, sigma_W, 1.0), 0.0)
    reversible = w_irr <= tol
    P = np.where(sigma_W > 0, 0.5 * erfc(I / math.sqrt(2.0)), np.where(reversible, 0.5, 0.0))
    I = np.where((sigma_W == 0) & ~reversible, np.inf, I)
    if P.ndim == 0:
        return float(P), float(I)
    return P, I


# ---------------------------------------------------------------------------
# one-call helpers


def initial_state_for(params: SystemParams, flags: ScenarioFlags) -> InitialState:
    return InitialState.from_flag(flags.initial_condition, params)


def fingerprint(proto: ForceProtocol, flags: ScenarioFlags):
    return (proto.params, proto.state, flags)


def analyze(proto: ForceProtocol, flags: ScenarioFlags, taus=None):
    """Full statistics for one protocol; with ``taus`` a dict of arrays over durations."""
    validate_params(proto.params)
    init = initial_state_for(proto.params, flags)
    noise = build_noise_model(proto.params, proto.state, flags)
    mom = work_moments(proto, init, noise, taus)
    var_total = mom["var_thermal"] + mom["var_q_st"] + mom["var_q_nst"]
    sigma = np.sqrt(np.maximum(var_total, 0.0))
    taus = np.atleast_1d(mom["tau"])
    w_abs = _scales(proto, float(taus.max()))["W"][1]
    P, I = free_lunch_probability(mom["W"], sigma, mom["dF"], abs_tol=w_abs)
    mom = dict(mom)
    mom.update(W_irr=np.asarray(mom["W"]) - np.asarray(mom["dF"]), var_total=var_total, I=I, P=P)
    return mom


def work_statistics(proto: ForceProtocol, flags: ScenarioFlags) -> WorkStatistics:
    r = analyze(proto, flags)
    return WorkStatistics(
        W=r["W"],
        var_thermal=r["var_thermal"],
        var_quantum_stationary=r["var_q_st"],
        var_quantum_nonstationary=r["var_q_nst"],
        dF=r["dF"],
        W_irr=r["W_irr"],
        I=float(r["I"]),
        P_freelunch=float(r["P"]),
        tau=proto.tau,
        n=proto.state.n,
        fingerprint=fingerprint(proto, flags) + (proto.tau,),
    )
