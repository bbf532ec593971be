"""Trajectory-level Monte Carlo of the driven Langevin oscillator.

Each path is propagated with the exact one-step solution of the damped
oscillator under a force held constant over the step. The deterministic
drive and the quadrature noise are smooth, so they are applied as their
exact step averages; white thermal noise enters as a momentum kick of
variance ``2 m Gamma k_B T dt`` per step. The work is accumulated with the
trapezoid rule on the step grid.

Random numbers for path ``i`` come from a Philox stream keyed by
``(seed, i)``, so an ensemble does not depend on chunking or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .model import ScenarioFlags
from .noise import NoiseModel, build_noise_model, path_rng, psd_factor
from .response import InitialState, homogeneous_basis
from .thermo import ForceProtocol, WorkStatistics, fingerprint, initial_state_for, free_energy_difference

DEFAULT_STEPS_PER_PERIOD = 128
MIN_STEPS_PER_PERIOD = 64
CHUNK = 1024
LOW_POWER_N = 1000
THREADS_ENV = "FREELUNCH_THREADS"


@dataclass(frozen=True)
class SimGrid:
    dt: float
    steps: int

    @classmethod
    def for_protocol(cls, proto: ForceProtocol, steps_per_period=DEFAULT_STEPS_PER_PERIOD):
        if steps_per_period < MIN_STEPS_PER_PERIOD:
            raise ValueError(f"need at least {MIN_STEPS_PER_PERIOD} steps per period")
        p = proto.params
        period = 2 * math.pi / max(p.omega_x, p.omega_y)
        steps = max(1, math.ceil(proto.tau / period * steps_per_period - 1e-9))
        return cls(proto.tau / steps, steps)

    @property
    def times(self):
        return self.dt * np.arange(self.steps + 1)

    @property
    def tau(self):
        return self.dt * self.steps


def step_matrices(params, dt):
    """Exact propagator: (x, v) -> A (x, v) + b F for a force F constant over dt."""
    c, s, c_dot, s_dot = homogeneous_basis(params, dt)
    A = np.array([[c, s], [c_dot, s_dot]], dtype=float)
    b = np.array([(1.0 - c) / (params.m * params.omega_x**2), s / params.m])
    return A, b


def propagate_step(params, state, dt, force_value, noise_increment=0.0):
    """Advance (x, v) by dt; ``noise_increment`` is a white-noise impulse [N s]."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    A, b = step_matrices(params, dt)
    x, v = state
    x_new = A[0, 0] * x + A[0, 1] * v + b[0] * force_value
    v_new = A[1, 0] * x + A[1, 1] * v + b[1] * force_value + noise_increment / params.m
    return x_new, v_new


def _sinc_avg(omega, dt):
    """Mean of cos(omega t + phi) over a step, relative to its midpoint value."""
    return float(np.sinc(omega * dt / (2 * np.pi)))


def _draws(noise: NoiseModel, init: InitialState, grid: SimGrid, seed, index, thermal_ic):
    rng = path_rng(seed, index)
    if thermal_ic:
        z = rng.standard_normal(2)
        x0, v0 = np.array([init.mean_x0, init.mean_v0]) + psd_factor(init.covariance) @ z
    else:
        x0, v0 = init.mean_x0, init.mean_v0
    amps = [(c.omega, math.sqrt(c.var_cos) * rng.standard_normal(), math.sqrt(c.var_sin) * rng.standard_normal())
            for c in noise.quadrature]
    D = noise.white_strength
    kicks = math.sqrt(D * grid.dt) * rng.standard_normal(grid.steps) if D > 0 else None
    return x0, v0, amps, kicks


def _simulate_chunk(proto: ForceProtocol, noise: NoiseModel, init: InitialState, grid: SimGrid,
                    seed, indices, thermal_ic):
    p = proto.params
    n = len(indices)
    draws = [_draws(noise, init, grid, seed, i, thermal_ic) for i in indices]
    x = np.array([d[0] for d in draws], dtype=float)
    v = np.array([d[1] for d in draws], dtype=float)
    quad = noise.quadrature
    a = np.array([[d[2][k][1] for k in range(len(quad))] for d in draws]).reshape(n, len(quad))
    b = np.array([[d[2][k][2] for k in range(len(quad))] for d in draws]).reshape(n, len(quad))
    kicks = np.array([d[3] for d in draws]) if noise.white_strength > 0 else None

    A, bv = step_matrices(p, grid.dt)
    dt = grid.dt
    t = grid.times
    mid = t[:-1] + 0.5 * dt
    drive = proto._f(mid) * _sinc_avg(proto.omega, dt)
    fdot = proto._fdot(t)
    qcos = [np.cos(c.omega * mid) * _sinc_avg(c.omega, dt) for c in quad]
    qsin = [np.sin(c.omega * mid) * _sinc_avg(c.omega, dt) for c in quad]

    w = np.zeros(n)
    prev = fdot[0] * x
    for i in range(grid.steps):
        F = drive[i]
        for k in range(len(quad)):
            F = F + a[:, k] * qcos[k][i] + b[:, k] * qsin[k][i]
        x, v = (A[0, 0] * x + A[0, 1] * v + bv[0] * F,
                A[1, 0] * x + A[1, 1] * v + bv[1] * F)
        if kicks is not None:
            v = v + kicks[:, i] / p.m
        cur = fdot[i + 1] * x
        w -= 0.5 * dt * (prev + cur)
        prev = cur
    return w


def _threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def simulate_work(proto: ForceProtocol, noise: NoiseModel, flags: ScenarioFlags, grid: SimGrid,
                  seed, indices, chunk=CHUNK, threads=None):
    """Work samples for the given path indices, in index order."""
    indices = np.asarray(indices, dtype=np.int64)
    init = initial_state_for(proto.params, flags)
    thermal_ic = init.var_x0 > 0 or init.var_v0 > 0
    blocks = [indices[i:i + chunk] for i in range(0, len(indices), chunk)]
    threads = _threads() if threads is None else threads

    def run(block):
        return _simulate_chunk(proto, noise, init, grid, seed, block, thermal_ic)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(blk) for blk in blocks]
    return np.concatenate(parts) if parts else np.zeros(0)


def simulate_work_sample(proto: ForceProtocol, noise: NoiseModel, flags: ScenarioFlags, grid: SimGrid,
                         seed, path_index) -> float:
    return float(simulate_work(proto, noise, flags, grid, seed, [path_index])[0])


def wilson_interval(successes, trials, confidence=0.99):
    z = norm.ppf(0.5 + confidence / 2)
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return centre - half, centre + half


def _moments(samples):
    """Mean, unbiased variance, skewness, excess kurtosis with exactly rounded sums."""
    n = len(samples)
    mean = math.fsum(samples) / n
    d = samples - mean
    m2 = math.fsum(d * d) / n
    m3 = math.fsum(d**3) / n
    m4 = math.fsum(d**4) / n
    var = m2 * n / (n - 1)
    if m2 > 0:
        skew = m3 / m2**1.5
        kurt = m4 / m2**2 - 3.0
    else:
        skew = kurt = 0.0
    return mean, var, skew, kurt


@dataclass(frozen=True)
class TrajectoryEnsemble:
    samples: np.ndarray = field(repr=False)
    mean: float
    var: float
    skewness: float
    excess_kurtosis: float
    hist_counts: np.ndarray = field(repr=False)
    hist_edges: np.ndarray = field(repr=False)
    dF: float
    freelunch_count: int
    freelunch_freq: float
    wilson: tuple
    seed: int
    grid: SimGrid
    fingerprint: tuple = field(default=(), compare=False, repr=False)

    @property
    def N(self):
        return len(self.samples)


def run_ensemble(proto: ForceProtocol, flags: ScenarioFlags, N, seed, steps_per_period=DEFAULT_STEPS_PER_PERIOD,
                 threads=None) -> TrajectoryEnsemble:
    if N < 100:
        raise ValueError("ensembles need N >= 100")
    grid = SimGrid.for_protocol(proto, steps_per_period)
    noise = build_noise_model(proto.params, proto.state, flags)
    w = simulate_work(proto, noise, flags, grid, seed, np.arange(N), threads=threads)
    mean, var, skew, kurt = _moments(w)
    if np.ptp(w) > 0:
        counts, edges = np.histogram(w, bins="fd")
    else:
        counts, edges = np.array([len(w)]), np.array([w[0] - 0.5, w[0] + 0.5])
    dF = float(free_energy_difference(proto))
    k = int(np.count_nonzero(w < dF))
    return TrajectoryEnsemble(
        samples=w, mean=mean, var=var, skewness=skew, excess_kurtosis=kurt,
        hist_counts=counts, hist_edges=edges, dF=dF, freelunch_count=k, freelunch_freq=k / N,
        wilson=wilson_interval(k, N), seed=int(seed), grid=grid,
        fingerprint=fingerprint(proto, flags) + (proto.tau,),
    )


@dataclass
class ComparisonReport:
    N: int
    z_mean: float
    variance_ratio: float
    z_variance: float
    skewness: float
    z_skewness: float
    excess_kurtosis: float
    z_kurtosis: float
    freelunch_freq: float
    wilson: tuple
    P_analytic: float
    checks: dict
    warnings: list

    @property
    def passed(self):
        return all(self.checks.values())

    def lines(self):
        out = [
            f"N = {self.N}",
            f"mean z-score          {self.z_mean:+.3f}",
            f"variance ratio        {self.variance_ratio:.5f} (z {self.z_variance:+.3f})",
            f"skewness              {self.skewness:+.4f} (z {self.z_skewness:+.3f})",
            f"excess kurtosis       {self.excess_kurtosis:+.4f} (z {self.z_kurtosis:+.3f})",
            f"free-lunch frequency  {self.freelunch_freq:.5f} 99% Wilson [{self.wilson[0]:.5f}, {self.wilson[1]:.5f}]"
            f" analytic {self.P_analytic:.5f}",
        ]
        out += [f"{name:22s}{'PASS' if ok else 'FAIL'}" for name, ok in self.checks.items()]
        out += [f"warning: {w}" for w in self.warnings]
        return out


def compare_to_analytic(ens: TrajectoryEnsemble, stats: WorkStatistics, z_threshold=4.0,
                        shape_threshold=5.0) -> ComparisonReport:
    """z-scores of the empirical moments against the analytic Gaussian prediction."""
    if ens.fingerprint and stats.fingerprint and ens.fingerprint != stats.fingerprint:
        raise ValueError("ensemble and analytic statistics were computed for different configurations")
    N = ens.N
    var = stats.var_total
    sigma = math.sqrt(max(var, 0.0))
    warnings = []
    if N < LOW_POWER_N:
        warnings.append(f"low statistical power: N = {N} < {LOW_POWER_N}")
    if sigma > 0:
        z_mean = (ens.mean - stats.W) / (sigma / math.sqrt(N))
        ratio = ens.var / var
        z_var = (ratio - 1.0) / math.sqrt(2.0 / (N - 1))
    else:
        scale = max(abs(stats.W), 1e-300)
        z_mean = 0.0 if abs(ens.mean - stats.W) <= 1e-4 * scale else math.inf
        ratio = 1.0 if ens.var <= (1e-4 * scale) ** 2 else math.inf
        z_var = 0.0 if ratio == 1.0 else math.inf
    z_skew = ens.skewness / math.sqrt(6.0 / N)
    z_kurt = ens.excess_kurtosis / math.sqrt(24.0 / N)
    lo, hi = ens.wilson
    checks = {
        "mean": abs(z_mean) <= z_threshold,
        "variance": abs(z_var) <= z_threshold,
        "skewness": abs(z_skew) <= shape_threshold,
        "kurtosis": abs(z_kurt) <= shape_threshold,
        "free_lunch": lo <= stats.P_freelunch <= hi,
    }
    return ComparisonReport(N, z_mean, ratio, z_var, ens.skewness, z_skew, ens.excess_kurtosis, z_kurt,
                            ens.freelunch_freq, ens.wilson, stats.P_freelunch, checks, warnings)
