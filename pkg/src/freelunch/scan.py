"""Dense duration scans: reversible points and free-lunch extrema.

W_irr(tau) >= 0 by the second law, so its zeros are normally tangential
(local minima touching or nearly touching zero) rather than sign changes.
Both kinds are located here: sign changes are bracketed and bisected;
near-zero local minima are refined by bisecting the sign change of

    dW_irr/dtau = -f'(tau) [<x(tau)> - f(tau)/(m omega_x^2)].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .model import ScenarioFlags
from .response import mean_position
from .thermo import ForceProtocol, analyze, initial_state_for

POINTS_PER_PERIOD = 64
ROOT_XTOL = 1e-12
NEAR_ZERO_FRACTION = 0.05
CLUSTER_PERIODS = 3.0


def dense_grid(proto: ForceProtocol, tau_min, tau_max, points_per_period=POINTS_PER_PERIOD):
    period = 2 * math.pi / proto.params.omega_y
    count = max(2, math.ceil((tau_max - tau_min) / period * points_per_period) + 1)
    return np.linspace(tau_min, tau_max, count)


def irreversible_work_rate(proto: ForceProtocol, flags: ScenarioFlags, tau):
    p = proto.params
    init = initial_state_for(p, flags)
    x = float(mean_position(p, proto._f, init, tau, omega_max=p.omega_y))
    return -float(proto._fdot(tau)) * (x - float(proto._f(tau)) / (p.m * p.omega_x**2))


def irreversible_work(proto: ForceProtocol, flags: ScenarioFlags, tau):
    r = analyze(proto.with_tau(tau), flags)
    return float(r["W_irr"])


@dataclass
class ReversiblePoints:
    roots: list          # bisected sign changes of W_irr
    tangential: list     # refined near-zero local minima, one per cluster
    peak: float          # max W_irr over the scan

    @property
    def all(self):
        return sorted(self.roots + self.tangential)


def reversible_points(proto: ForceProtocol, flags: ScenarioFlags, tau_min, tau_max,
                      points_per_period=POINTS_PER_PERIOD, near_zero=NEAR_ZERO_FRACTION, scan=None):
    """Locate W_irr = 0 points on [tau_min, tau_max]."""
    taus = dense_grid(proto, tau_min, tau_max, points_per_period)
    if scan is None or not np.array_equal(scan["tau"], taus):
        scan = analyze(proto.with_tau(tau_max), flags, taus)
    wirr = np.asarray(scan["W_irr"])
    peak = float(np.max(wirr))

    roots = []
    sign = np.sign(wirr)
    for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
        roots.append(brentq(lambda t: irreversible_work(proto, flags, t), taus[i], taus[i + 1], xtol=ROOT_XTOL))

    interior = np.arange(1, len(taus) - 1)
    is_min = (wirr[interior] <= wirr[interior - 1]) & (wirr[interior] <= wirr[interior + 1])
    cand = interior[is_min & (wirr[interior] <= near_zero * peak)]
    refined = []
    for i in cand:
        lo, hi = taus[i - 1], taus[i + 1]
        try:
            dlo = irreversible_work_rate(proto, flags, lo)
            dhi = irreversible_work_rate(proto, flags, hi)
            if dlo < 0 < dhi:
                t = brentq(lambda s: irreversible_work_rate(proto, flags, s), lo, hi, xtol=ROOT_XTOL)
            else:
                t = taus[i]
        except ValueError:
            t = taus[i]
        refined.append((t, irreversible_work(proto, flags, t)))

    gap = CLUSTER_PERIODS * 2 * math.pi / proto.params.omega_y
    tangential = []
    cluster = []
    for t, w in refined:
        if cluster and t - cluster[-1][0] > gap:
            tangential.append(min(cluster, key=lambda e: e[1])[0])
            cluster = []
        cluster.append((t, w))
    if cluster:
        tangential.append(min(cluster, key=lambda e: e[1])[0])
    return ReversiblePoints(roots, tangential, peak)


def lobe_minima(taus, P, boundaries):
    """Grid minimum of P within each lobe delimited by ``boundaries`` (sorted taus).

    Returns (tau, P, grid index) per lobe.
    """
    taus = np.asarray(taus)
    P = np.asarray(P)
    cuts = [taus[0]] + [b for b in boundaries if taus[0] < b < taus[-1]] + [taus[-1]]
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        sel = (taus >= a) & (taus <= b)
        if np.any(sel):
            k = np.argmin(np.where(sel, P, np.inf))
            out.append((float(taus[k]), float(P[k]), int(k)))
    return out


def free_lunch_probability_at(proto: ForceProtocol, flags: ScenarioFlags, tau):
    return float(analyze(proto.with_tau(tau), flags)["P"])


def refine_minimum(proto: ForceProtocol, flags: ScenarioFlags, taus, k):
    """Polish a grid minimum of P between its grid neighbours."""
    lo = taus[max(k - 1, 0)]
    hi = taus[min(k + 1, len(taus) - 1)]
    grid_p = free_lunch_probability_at(proto, flags, taus[k])
    if hi <= lo:
        return float(taus[k]), grid_p
    res = minimize_scalar(lambda t: free_lunch_probability_at(proto, flags, t), bounds=(lo, hi),
                          method="bounded", options={"xatol": ROOT_XTOL})
    if res.fun < grid_p:
        return float(res.x), float(res.fun)
    return float(taus[k]), grid_p


def scan_free_lunch(proto: ForceProtocol, flags: ScenarioFlags, tau_min, tau_max,
                    points_per_period=POINTS_PER_PERIOD):
    """Dense scan plus reversible points and per-lobe minima of P."""
    taus = dense_grid(proto, tau_min, tau_max, points_per_period)
    scan = analyze(proto.with_tau(tau_max), flags, taus)
    rev = reversible_points(proto, flags, tau_min, tau_max, points_per_period, scan=scan)
    mins = [refine_minimum(proto, flags, taus, k) for _, _, k in lobe_minima(taus, scan["P"], rev.all)]
    return scan, rev, mins
