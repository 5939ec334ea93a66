"""Training and generalization errors from converged overlaps.

Square-loss quantities are reported as plain mean squared errors
``E[(y - yhat)^2]`` even though the estimator minimizes ``(y - yhat)^2 / 2``.
Logistic and hinge training errors are the average loss itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateOverlap, NegativeError
from .model import Loss, Metric, Overlaps, SolverOptions, SpectralModel, TaskSpec, Teacher
from .proximal import LOSS_FUNCTIONS, prox
from .quadrature import gauss_hermite
from .state_evolution import (
    StateEvolutionResult,
    student_field_rule,
    teacher_channel_sign,
    weight_norm,
)

NEGATIVE_TOL = 1e-10


@dataclass(frozen=True)
class ErrorReport:
    e_gen: float
    e_train: float
    metric: Metric

    def __post_init__(self):
        if self.metric is Metric.ZERO_ONE and not 0.0 <= self.e_gen <= 1.0:
            raise ValueError(f"zero-one error outside [0, 1]: {self.e_gen}")


def _clamp_nonnegative(value: float, name: str) -> float:
    if value < -NEGATIVE_TOL:
        raise NegativeError(f"{name} = {value:.3e} is negative; overlaps are inconsistent")
    return max(value, 0.0)


def mse_errors(overlaps: Overlaps, rho: float) -> ErrorReport:
    """Ridge errors: ``rho + q - 2m`` and its training counterpart ``E_gen / (1+V)^2``."""
    e_gen = _clamp_nonnegative(rho + overlaps.q - 2.0 * overlaps.m, "e_gen")
    e_train = e_gen / (1.0 + overlaps.v) ** 2
    return ErrorReport(e_gen, e_train, Metric.MSE)


def classification_error(overlaps: Overlaps, rho: float) -> float:
    """Probability that sign(student field) differs from sign(teacher field)."""
    if not overlaps.q > 0:
        raise DegenerateOverlap(f"q must be positive, got {overlaps.q}")
    cos = np.clip(overlaps.m / math.sqrt(rho * overlaps.q), -1.0, 1.0)
    return float(np.arccos(cos) / math.pi)


def sign_teacher_mse(overlaps: Overlaps, rho: float) -> float:
    """``E[(sign(nu) - student field)^2]`` for a sign teacher."""
    return 1.0 + overlaps.q - 2.0 * overlaps.m * math.sqrt(2.0 / (math.pi * rho))


def _pointwise_loss(loss: Loss, y, field, v):
    """Loss at the proximal point, with square loss counted as (y - yhat)^2."""
    z = prox(loss, field, y, v).prox
    if loss is Loss.SQUARE:
        return (y - z) ** 2
    return LOSS_FUNCTIONS[loss](z, y)


def training_loss_quadrature(
    overlaps: Overlaps,
    rho: float,
    task: TaskSpec,
    opts: SolverOptions = SolverOptions(),
) -> float:
    """Average training loss predicted at the fixed point.

    The training sample's student field is ``sqrt(q) xi`` and its label is
    drawn given ``xi``; the prediction on it is the proximal point with
    variance ``V``. Sign teachers use the exact two-label mixture, linear
    teachers a second Gauss-Hermite dimension for the Gaussian label.
    """
    if not overlaps.q > 0:
        raise DegenerateOverlap(f"q must be positive, got {overlaps.q}")
    v0 = rho - overlaps.m**2 / overlaps.q
    if v0 < -NEGATIVE_TOL * rho:
        raise DegenerateOverlap(f"rho*q - m^2 must be nonnegative (rho={rho}, q={overlaps.q}, m={overlaps.m})")
    sq = math.sqrt(overlaps.q)
    xi, w = student_field_rule(task.loss, sq, overlaps.v, opts)
    field = sq * xi
    mean0 = (overlaps.m / sq) * xi
    if task.teacher is Teacher.SIGN:
        if not v0 > 0:
            raise DegenerateOverlap("sign teacher needs rho*q - m^2 > 0")
        total = 0.0
        for y in (1.0, -1.0):
            z0, _ = teacher_channel_sign(mean0, v0, y)
            total += float(np.dot(w, z0 * _pointwise_loss(task.loss, y, field, overlaps.v)))
        return total
    eta, w_eta = gauss_hermite(int(opts.quad_nodes))
    y = mean0[:, None] + math.sqrt(max(v0, 0.0)) * eta[None, :]
    vals = _pointwise_loss(task.loss, y, field[:, None], overlaps.v)
    return float(w @ vals @ w_eta)


def evaluate_errors(
    result: StateEvolutionResult,
    model: SpectralModel,
    task: TaskSpec,
    alpha: float,
    opts: SolverOptions = SolverOptions(),
    regularized: bool = False,
) -> ErrorReport:
    """Errors for a solved task, using closed forms wherever they exist.

    With ``regularized=True`` the training error includes the penalty
    ``lam |w|^2 / (2n)``, doubled for square loss to match the reported
    squared-error convention.
    """
    ov, rho = result.overlaps, model.rho
    if task.teacher is Teacher.LINEAR:
        report = mse_errors(ov, rho)
        e_gen, e_train = report.e_gen, report.e_train
    else:
        if task.metric is Metric.ZERO_ONE:
            e_gen = classification_error(ov, rho)
        else:
            e_gen = _clamp_nonnegative(sign_teacher_mse(ov, rho), "e_gen")
        if task.loss is Loss.SQUARE:
            e_train = _clamp_nonnegative(sign_teacher_mse(ov, rho), "e_train") / (1.0 + ov.v) ** 2
        else:
            e_train = training_loss_quadrature(ov, rho, task, opts)
    if regularized and alpha > 0:
        scale = 1.0 if task.loss is Loss.SQUARE else 0.5
        e_train += scale * task.lam / alpha * weight_norm(result.hats, model, task.lam)
    return ErrorReport(float(e_gen), float(e_train), task.metric)
