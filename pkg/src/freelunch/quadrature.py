"""Composite Gauss-Legendre panel rules for smooth oscillatory integrands.

The central primitive is :func:`exp_convolution`, which evaluates causal
integrals

    Z(s) = int_0^s exp(lam (s - u)) h(u) du

at arbitrary points ``s`` with one pass over the panels plus one partial
panel per query point. With ``lam = 0`` this is the running integral of h.
Nested integrals (a response inside a work integral) are obtained by passing
an integrand that itself calls :func:`exp_convolution`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter

NODES_PER_PANEL = 32
REL_TOL = 1e-9
MAX_DOUBLINGS = 4


class QuadratureError(ArithmeticError):
    """Successive panel refinements failed to agree."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


@lru_cache(maxsize=16)
def _legendre(m):
    x, w = np.polynomial.legendre.leggauss(m)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class PanelRule:
    """Uniform panels on [0, length] with an m-point Gauss-Legendre rule each."""

    length: float
    panels: int
    m: int = NODES_PER_PANEL

    @classmethod
    def for_frequency(cls, length, omega_max, panels_per_period=1, m=NODES_PER_PANEL):
        """At least ``m * panels_per_period`` nodes per period of ``omega_max``."""
        periods = length * omega_max / (2 * math.pi)
        panels = max(1, math.ceil(periods * panels_per_period - 1e-9))
        return cls(float(length), int(panels), m)

    def refined(self):
        return PanelRule(self.length, 2 * self.panels, self.m)

    @property
    def width(self):
        return self.length / self.panels

    @property
    def edges(self):
        return np.linspace(0.0, self.length, self.panels + 1)

    def nodes_weights(self):
        """Nodes and weights, both shaped (panels, m)."""
        x, w = _legendre(self.m)
        a = self.edges[:-1, None]
        h = self.width
        return a + 0.5 * h * (x + 1.0), np.broadcast_to(0.5 * h * w, (self.panels, self.m))

    def integrate(self, h):
        """int_0^length h(u) du."""
        u, w = self.nodes_weights()
        return np.sum(w * h(u))


def exp_convolution(lam, h, s, rule: PanelRule, chunk=2048):
    """Evaluate int_0^s exp(lam (s-u)) h(u) du for every entry of ``s``.

    ``lam`` must have non-positive real part so every exponential stays
    bounded. ``h`` is called on arrays of arbitrary shape ``S`` and returns
    either shape ``S`` or ``(k,) + S`` for k stacked integrands. The result
    has shape ``s.shape`` (or ``(k,) + s.shape``) and is complex unless
    ``lam == 0`` and h is real.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < -1e-15 * rule.length) or np.any(s > rule.length * (1 + 1e-12)):
        raise ValueError("query points must lie inside the panel range")
    lam = complex(lam)
    plain = lam == 0
    x, w = _legendre(rule.m)
    hw = rule.width

    u, wu = rule.nodes_weights()
    edges = rule.edges
    hu = h(u)
    if plain:
        full = np.sum(wu * hu, axis=-1)
        Z = np.cumsum(full, axis=-1)
    else:
        full = np.sum(wu * np.exp(lam * (edges[1:, None] - u)) * hu, axis=-1)
        # Z_{j+1} = q Z_j + full_j
        q = np.exp(lam * hw)
        Z = lfilter([1.0], [1.0, -q], full, axis=-1)
    Z = np.concatenate((np.zeros(Z.shape[:-1] + (1,), dtype=Z.dtype), Z), axis=-1)

    flat = s.reshape(-1)
    pieces = []
    for lo in range(0, max(flat.size, 1), chunk):
        sc = flat[lo:lo + chunk]
        if hw > 0:
            j = np.clip(np.floor(sc / hw).astype(int), 0, rule.panels - 1)
        else:  # zero-length window: every query sits at the origin
            j = np.zeros(sc.shape, dtype=int)
        a = edges[j]
        span = sc - a
        sub = a[:, None] + 0.5 * span[:, None] * (x + 1.0)
        sw = 0.5 * span[:, None] * w
        hs = h(sub)
        if plain:
            pieces.append(Z[..., j] + np.sum(sw * hs, axis=-1))
        else:
            kern = np.exp(lam * (sc[:, None] - sub))
            pieces.append(np.exp(lam * span) * Z[..., j] + np.sum(sw * kern * hs, axis=-1))
    out = np.concatenate(pieces, axis=-1) if pieces else Z[..., :0]
    return out.reshape(out.shape[:-1] + s.shape)


def running_integral(h, s, rule: PanelRule):
    """int_0^s h(u) du for every entry of ``s``."""
    return exp_convolution(0.0, h, s, rule)


def agree(coarse, fine, rel=REL_TOL, abs_tol=0.0):
    coarse = np.asarray(coarse)
    fine = np.asarray(fine)
    return np.abs(fine - coarse) <= np.maximum(rel * np.abs(fine), abs_tol)


def refine_until_converged(evaluate, rule: PanelRule, tolerances, max_doublings=MAX_DOUBLINGS):
    """Richardson-style doubling: evaluate on ``rule`` and on ``rule.refined()``.

    ``evaluate(rule)`` returns a dict of arrays; ``tolerances`` maps each key
    to ``(rel, abs)``. The finer result is returned once every entry agrees.
    """
    coarse = evaluate(rule)
    worst = None
    for _ in range(max_doublings):
        rule = rule.refined()
        fine = evaluate(rule)
        ok = True
        worst = {}
        for key, (rel, abs_tol) in tolerances.items():
            good = agree(coarse[key], fine[key], rel, abs_tol)
            if not np.all(good):
                ok = False
                diff = np.abs(np.asarray(fine[key]) - np.asarray(coarse[key]))
                worst[key] = float(np.max(diff))
        if ok:
            return fine
        coarse = fine
    raise QuadratureError(
        f"panel refinement did not converge after {max_doublings} doublings "
        f"({rule.panels} panels); largest differences {worst}",
        achieved=worst,
    )
