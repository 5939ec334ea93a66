"""Kernel ridge regression learning curves for diagonal and power-law spectra.

For a diagonal model the ridge fixed point collapses to one scalar
equation for an effective regularization ``z``:

    z = lam + (z / n) * sum_i omega_i / (z / alpha + omega_i)

and the generalization error follows in closed form. With the power laws
``omega_i ~ i^-b`` and ``theta_i^2 omega_i ~ i^-a`` the sums have a finite
limit as the dimension goes to infinity, which gives the learning-curve
exponents ``-min(a - 1, 2b)`` (small n) and ``-min(a - 1, 2b) / b`` (large n).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .curves import CurveRow, LearningCurve, format_float
from .exceptions import DenominatorNonPositive, NoBracket
from .model import SpectralModel

DEFAULT_MIN_CUTOFF = 1_000_000
ROOT_XTOL = 1e-15
REGIME_BUFFER = 10.0


@dataclass(frozen=True)
class PowerLawSpec:
    a: float
    b: float
    lam: float
    n_values: tuple[int, ...] = ()
    cutoff: int | None = None

    def __post_init__(self):
        if not self.a > 1:
            raise ValueError("a must be > 1")
        if not self.b > 1:
            raise ValueError("b must be > 1 for the z-equation to converge")
        if not self.lam > 0:
            raise ValueError("lambda must be > 0")
        n_values = tuple(int(n) for n in self.n_values)
        if any(n < 1 for n in n_values):
            raise ValueError("n values must be positive")
        object.__setattr__(self, "n_values", n_values)
        cutoff = self.cutoff
        if cutoff is None:
            cutoff = max(DEFAULT_MIN_CUTOFF, 100 * max(n_values, default=1))
        if n_values and cutoff < max(n_values):
            raise ValueError("cutoff must be at least the largest n")
        object.__setattr__(self, "cutoff", int(cutoff))

    @property
    def crossover_n(self) -> float:
        """Sample size where explicit and effective regularization are comparable."""
        return self.lam ** (-1.0 / (self.b - 1.0))


class _PowerLawSums:
    """Truncated series over i = 1..M plus an integral estimate of the rest."""

    def __init__(self, spec: PowerLawSpec):
        self.spec = spec
        self.i = np.arange(1, spec.cutoff + 1, dtype=float)
        self.i_b = self.i**spec.b
        self.i_a = self.i ** (-spec.a)
        self.tail_start = spec.cutoff + 0.5

    def _tail(self, f, decay: float) -> float:
        """Midpoint estimate of ``sum_{i > M} f(i)`` for ``f(x) ~ x^-decay``.

        Integrating in ``s = log x`` turns the slow algebraic tail into an
        exponential one that quad handles reliably.
        """
        lo = math.log(self.tail_start)
        hi = min(700.0, lo + 60.0 / (decay - 1.0))
        val, _ = quad(lambda s: f(math.exp(s)) * math.exp(s), lo, hi,
                      limit=200, epsabs=0.0, epsrel=1e-10)
        return val

    def z_rhs(self, z: float, n: int) -> float:
        c = z / n
        b = self.spec.b
        head = float(np.sum(c / (1.0 + c * self.i_b)))
        return head + self._tail(lambda x: c / (1.0 + c * x**b), b)

    def error_terms(self, z: float, n: int) -> tuple[float, float]:
        a, b = self.spec.a, self.spec.b
        r = n / z
        shrink = 1.0 / (1.0 + r / self.i_b)
        num = float(np.sum(self.i_a * shrink**2))
        num += self._tail(lambda x: x**-a / (1.0 + r * x**-b) ** 2, a)
        sq = float(np.sum((shrink / self.i_b) ** 2))
        sq += self._tail(lambda x: (x**-b / (1.0 + r * x**-b)) ** 2, 2.0 * b)
        return num, 1.0 - (n / z**2) * sq


def solve_z(spec: PowerLawSpec, n: int, _sums: _PowerLawSums | None = None) -> float:
    """Root of ``z - lam - (z/n) sum_i 1 / (1 + (z/n) i^b)``.

    The right-hand side is bounded by ``sum_i i^-b``, so the root lies in
    ``[lam, lam + zeta(b) + 1]`` and is unique since ``z - RHS(z)`` is convex
    and negative at ``lam``.
    """
    sums = _sums or _PowerLawSums(spec)
    lo = spec.lam
    hi = spec.lam + float(np.sum(1.0 / sums.i_b)) + sums.tail_start ** (1 - spec.b) / (spec.b - 1) + 1.0

    def resid(z):
        return z - spec.lam - sums.z_rhs(z, n)

    if not (resid(lo) < 0 < resid(hi)):
        raise NoBracket(f"z-equation not bracketed on [{lo}, {hi}]")
    return brentq(resid, lo, hi, xtol=ROOT_XTOL * spec.lam, rtol=4 * np.finfo(float).eps, maxiter=500)


def z_residual(spec: PowerLawSpec, n: int, z: float) -> float:
    return z - spec.lam - _PowerLawSums(spec).z_rhs(z, n)


def generalization_error_powerlaw(spec: PowerLawSpec, n: int, z: float,
                                  _sums: _PowerLawSums | None = None) -> float:
    """Infinite-dimensional ridge error for the power-law spectrum."""
    sums = _sums or _PowerLawSums(spec)
    num, den = sums.error_terms(z, n)
    if not den > 0:
        raise DenominatorNonPositive(f"error denominator {den:.3e} <= 0 at n={n}")
    return num / den


def numerator_tail_bound(spec: PowerLawSpec) -> float:
    """Bound on the numerator mass beyond the cutoff, ``int_M^inf x^-a dx``."""
    return spec.cutoff ** (1.0 - spec.a) / (spec.a - 1.0)


def classify_regime(spec: PowerLawSpec, n: float) -> str:
    n_star = spec.crossover_n
    if n < n_star / REGIME_BUFFER:
        return "effective_regularization"
    if n > n_star * REGIME_BUFFER:
        return "explicit_regularization"
    return "crossover"


def expected_slope(spec: PowerLawSpec, regime: str) -> float:
    base = -min(spec.a - 1.0, 2.0 * spec.b)
    return base / spec.b if regime == "explicit_regularization" else base


@dataclass(frozen=True)
class PowerLawPoint:
    n: int
    z: float
    eps_g: float
    regime: str


def powerlaw_curve(spec: PowerLawSpec) -> list[PowerLawPoint]:
    sums = _PowerLawSums(spec)
    points = []
    for n in sorted(spec.n_values):
        z = solve_z(spec, n, sums)
        points.append(PowerLawPoint(n, z, generalization_error_powerlaw(spec, n, z, sums),
                                    classify_regime(spec, n)))
    return points


def powerlaw_csv(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("n", "z", "eps_g", "regime"))
    for p in points:
        writer.writerow((p.n, format_float(p.z), format_float(p.eps_g), p.regime))
    return buf.getvalue()


def fit_slope(x, y, exclude_extremes: bool = True) -> tuple[float, float]:
    """Least-squares slope and intercept of log y against log x.

    The smallest and largest x are dropped by default since the scalings are
    asymptotic statements.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    if exclude_extremes:
        x, y = x[1:-1], y[1:-1]
    if x.size < 2:
        raise ValueError("need at least two points to fit a slope")
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)


def slope_report(spec: PowerLawSpec, points) -> dict:
    ns = [p.n for p in points]
    slope, intercept = fit_slope(ns, [p.eps_g for p in points])
    z_slope, _ = fit_slope(ns, [p.z for p in points])
    regimes = sorted({p.regime for p in points})
    expected = {r: expected_slope(spec, r) for r in regimes if r != "crossover"}
    return {
        "a": spec.a,
        "b": spec.b,
        "lambda": spec.lam,
        "cutoff": spec.cutoff,
        "numerator_tail_bound": numerator_tail_bound(spec),
        "crossover_n": spec.crossover_n,
        "n_min": min(ns),
        "n_max": max(ns),
        "slope": slope,
        "intercept": intercept,
        "z_slope": z_slope,
        "regimes": regimes,
        "expected_slopes": expected,
    }


def slope_report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def _finite_z(model: SpectralModel, lam: float, n: float) -> float:
    w = model.eigenvalues
    alpha = n / model.d
    pos = w > 0

    def resid(z):
        return z - lam - (z / n) * float(np.sum(w[pos] / (z / alpha + w[pos])))

    # each term of the sum is below one, so z <= lam + (z/n) * d_pos
    hi = 2.0 * lam
    while resid(hi) <= 0:
        hi *= 2.0
        if hi > 1e300:
            raise NoBracket("finite-d z-equation has no root")
    return brentq(resid, lam, hi, xtol=ROOT_XTOL * lam, rtol=4 * np.finfo(float).eps, maxiter=500)


def finite_d_kernel_curve(model: SpectralModel, lam: float, n_values) -> LearningCurve:
    """Ridge learning curve of a diagonal model from the scalar z-equation.

    Gives the same answer as the full fixed-point iteration, without
    iterating. ``model`` must describe a diagonal model (``gamma == 1`` and
    all teacher variance visible to the student).
    """
    if not math.isclose(model.gamma, 1.0):
        raise ValueError("finite_d_kernel_curve expects gamma == 1")
    if not math.isclose(model.explained_rho(), model.rho, rel_tol=1e-9):
        raise ValueError("finite_d_kernel_curve expects a diagonal model with rho fully explained")
    d = model.d
    w = model.eigenvalues
    t2 = model.teacher_projection**2
    pos = w > 0
    theta_tilde = np.zeros_like(w)
    theta_tilde[pos] = t2[pos] / w[pos]
    rows = []
    for n in sorted(float(n) for n in n_values):
        z = _finite_z(model, lam, n)
        s = z * d / n
        num = (z * d / n) ** 2 * float(np.sum(theta_tilde / (s + w) ** 2)) / d
        den = 1.0 - float(np.sum(w**2 / (s + w) ** 2)) / n
        if not den > 0:
            raise DenominatorNonPositive(f"error denominator {den:.3e} <= 0 at n={n}")
        e_gen = num / den
        v = z / lam - 1.0
        alpha = n / d
        v_hat = alpha / (1.0 + v)
        m = v_hat * float(np.sum(t2 / (lam + v_hat * w))) / d
        q = e_gen - model.rho + 2.0 * m
        rows.append(CurveRow(n, e_gen, e_gen / (1.0 + v) ** 2, v, q, m, True, 0))
    return LearningCurve(tuple(rows), "n")
