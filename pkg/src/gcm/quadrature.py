"""Quadrature rules for expectations under a standard normal."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_hermitenorm

# the standard normal density is below 2e-22 beyond this radius
PANEL_RADIUS = 10.0
PANEL_ORDER = 8


@lru_cache(maxsize=32)
def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with ``sum(w * f(x)) ~ E[f(Z)]`` for ``Z ~ N(0, 1)``."""
    if n < 1:
        raise ValueError("number of nodes must be positive")
    x, w = roots_hermitenorm(n)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=4)
def _legendre(order: int):
    return leggauss(order)


def gaussian_panels(
    n: int,
    breakpoints=(),
    radius: float = PANEL_RADIUS,
    order: int = PANEL_ORDER,
) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule for ``E[f(Z)]``, ``Z ~ N(0, 1)``.

    The interval ``[-radius, radius]`` is cut into about ``n / order`` equal
    panels, plus extra cuts at ``breakpoints`` where ``f`` has a kink or a
    sharp transition. Each panel gets an ``order``-point Gauss-Legendre rule
    weighted by the normal density.

    Gauss-Hermite spends most of its nodes far in the tails and converges
    slowly once the integrand has poles close to the real axis, which is the
    case for sigmoid-type scores at large overlaps. Short panels do not have
    that problem, and a cut at each breakpoint keeps piecewise smooth
    integrands (hinge) at full accuracy.
    """
    if n < 1:
        raise ValueError("number of nodes must be positive")
    n_panels = max(2, n // order)
    cuts = [b for b in breakpoints if -radius < b < radius]
    edges = np.union1d(np.linspace(-radius, radius, n_panels + 1), cuts)
    t, wt = _legendre(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    x = (lo + half * (t + 1.0)).ravel()
    w = (half * wt).ravel() * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return x, w


def gaussian_expectation(f, n: int = 129, kinked: bool = False) -> float:
    """``E[f(Z)]`` for a vectorized ``f``, ``Z ~ N(0, 1)``.

    With ``kinked=True`` the integral is split at zero and done with the panel
    rule, which handles sign and relu type integrands exactly up to rounding.
    """
    if kinked:
        x, w = gaussian_panels(max(n, 256), breakpoints=(0.0,))
    else:
        x, w = gauss_hermite(n)
    return float(np.dot(w, f(x)))
