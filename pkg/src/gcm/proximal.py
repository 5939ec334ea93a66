"""Scalar proximal operators and Moreau envelopes for the supported losses.

For a loss ``l(z, y)`` and variance ``V > 0`` the proximal point is

    prox = argmin_z  l(z, y) + (z - omega)**2 / (2 V)

and ``f_g = (prox - omega) / V`` is minus the omega-derivative of the
envelope. All functions broadcast over numpy arrays; passing Python scalars
returns a :class:`ProxResult` of floats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import NonPositiveV, RootFindingFailed
from .model import Loss

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 200


@dataclass(frozen=True)
class ProxResult:
    prox: np.ndarray | float
    envelope: np.ndarray | float
    f_g: np.ndarray | float
    f_g_prime: np.ndarray | float


def _pack(scalar: bool, prox, envelope, f_g, f_g_prime) -> ProxResult:
    if scalar:
        return ProxResult(float(prox), float(envelope), float(f_g), float(f_g_prime))
    return ProxResult(prox, envelope, f_g, f_g_prime)


def _prepare(omega_arg, y, v, binary: bool):
    scalar = np.ndim(omega_arg) == 0 and np.ndim(y) == 0 and np.ndim(v) == 0
    omega_arg, y, v = np.broadcast_arrays(
        np.asarray(omega_arg, float), np.asarray(y, float), np.asarray(v, float)
    )
    if np.any(~(v > 0)):
        raise NonPositiveV("proximal variance V must be > 0")
    if binary and np.any(np.abs(y) != 1.0):
        raise ValueError("labels must be +1 or -1")
    return scalar, omega_arg, y, v


def square_loss(z, y):
    return 0.5 * (np.asarray(y) - z) ** 2


def logistic_loss(z, y):
    return np.logaddexp(0.0, -np.asarray(y) * z)


def hinge_loss(z, y):
    return np.maximum(0.0, 1.0 - np.asarray(y) * z)


LOSS_FUNCTIONS = {
    Loss.SQUARE: square_loss,
    Loss.LOGISTIC: logistic_loss,
    Loss.HINGE: hinge_loss,
}


def prox_square(omega_arg, y, v) -> ProxResult:
    scalar, w, y, v = _prepare(omega_arg, y, v, binary=False)
    prox = (w + v * y) / (1.0 + v)
    f_g = (y - w) / (1.0 + v)
    envelope = 0.5 * (y - w) ** 2 / (1.0 + v)
    return _pack(scalar, prox, envelope, f_g, -1.0 / (1.0 + v))


def _logistic_root(w, y, v):
    """Solve ``z - w - v*y*sigmoid(-y*z) = 0`` elementwise.

    The left side is increasing in z with slope in [1, 1 + v/4], and the root
    always lies in [w - v, w + v]. A Newton step is replaced by bisection
    when it leaves the bracket or fails to halve the previous step, which
    stops Newton from cycling when v is large.
    """
    lo, hi = w - v, w + v
    z = w.copy()
    last_dx = 2.0 * v
    for _ in range(NEWTON_MAX_ITER):
        s = expit(-y * z)
        resid = z - w - v * y * s
        lo = np.where(resid < 0, z, lo)
        hi = np.where(resid > 0, z, hi)
        if np.all(np.abs(resid) <= NEWTON_TOL * (1.0 + np.abs(z))):
            return z
        slope = 1.0 + v * s * (1.0 - s)
        dx = resid / slope
        step = z - dx
        ok = (step > lo) & (step < hi) & (2.0 * np.abs(dx) <= np.abs(last_dx))
        new_z = np.where(ok, step, 0.5 * (lo + hi))
        last_dx = new_z - z
        z = new_z
    raise RootFindingFailed("logistic proximal solve did not converge")


def prox_logistic(omega_arg, y, v) -> ProxResult:
    scalar, w, y, v = _prepare(omega_arg, y, v, binary=True)
    z = _logistic_root(w, y, v)
    f_g = y * expit(-y * z)
    s = expit(z) * expit(-z)
    f_g_prime = -s / (1.0 + v * s)
    envelope = logistic_loss(z, y) + (z - w) ** 2 / (2.0 * v)
    return _pack(scalar, z, envelope, f_g, f_g_prime)


def prox_hinge(omega_arg, y, v) -> ProxResult:
    scalar, w, y, v = _prepare(omega_arg, y, v, binary=True)
    margin = w * y
    flat = margin >= 1.0
    linear = margin < 1.0 - v
    middle = ~flat & ~linear
    f_g = np.where(flat, 0.0, np.where(linear, y, (y - w) / v))
    f_g_prime = np.where(middle, -1.0 / v, 0.0)
    # on the middle branch the prox sits exactly on the hinge, y*z = 1
    prox = np.where(middle, y, w + v * f_g)
    envelope = hinge_loss(prox, y) + (prox - w) ** 2 / (2.0 * v)
    return _pack(scalar, prox, envelope, f_g, f_g_prime)


PROX_FUNCTIONS = {
    Loss.SQUARE: prox_square,
    Loss.LOGISTIC: prox_logistic,
    Loss.HINGE: prox_hinge,
}


def prox(loss: Loss, omega_arg, y, v) -> ProxResult:
    return PROX_FUNCTIONS[Loss(loss)](omega_arg, y, v)
