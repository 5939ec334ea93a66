"""Fixed-point solver for the asymptotic overlaps.

The six order parameters split into two groups updated alternately:

* the *variance channel* maps the conjugate overlaps ``(v_hat, q_hat, m_hat)``
  to ``(v, q, m)`` through spectral sums over the student covariance;
* the *hat channel* maps ``(v, q, m)`` back to the conjugates through a
  scalar expectation that only depends on the loss and teacher.

Iterating both with damping until the update falls below ``tol`` gives the
overlaps that determine the training and generalization errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .exceptions import DegenerateOverlap, SingularDenominator
from .model import (
    ConjugateOverlaps,
    Loss,
    Overlaps,
    SolverOptions,
    SpectralModel,
    TaskSpec,
    Teacher,
)
from .proximal import prox
from .quadrature import gauss_hermite, gaussian_panels

CLIP_FACTOR = 0.999


@dataclass(frozen=True)
class StateEvolutionResult:
    overlaps: Overlaps
    hats: ConjugateOverlaps
    iterations: int
    converged: bool
    residual: float


def _resolvent_denominator(hats: ConjugateOverlaps, model: SpectralModel, lam: float) -> np.ndarray:
    den = lam + hats.v_hat * model.eigenvalues
    if np.any(den <= 0):
        raise SingularDenominator(
            f"lambda + v_hat * omega_i <= 0 (lambda={lam}, v_hat={hats.v_hat})"
        )
    return den


def variance_channel(hats: ConjugateOverlaps, model: SpectralModel, lam: float) -> Overlaps:
    """Overlaps from conjugates via the l2 resolvent in the eigenbasis of omega."""
    den = _resolvent_denominator(hats, model, lam)
    w = model.eigenvalues
    t2 = model.teacher_projection**2
    d = model.d
    v = float(np.sum(w / den)) / d
    q = float(np.sum((hats.q_hat * w**2 + hats.m_hat**2 * t2 * w) / den**2)) / d
    m = hats.m_hat * float(np.sum(t2 / den)) / (math.sqrt(model.gamma) * d)
    return Overlaps(v, q, m)


def weight_norm(hats: ConjugateOverlaps, model: SpectralModel, lam: float) -> float:
    """Asymptotic squared norm of the estimator per coordinate, ``|w|^2 / d``."""
    den = _resolvent_denominator(hats, model, lam)
    t2 = model.teacher_projection**2
    return float(np.sum((hats.m_hat**2 * t2 + hats.q_hat * model.eigenvalues) / den**2)) / model.d


def hat_channel_ridge(overlaps: Overlaps, rho: float, alpha: float, gamma: float) -> ConjugateOverlaps:
    """Closed-form conjugates for square loss on a linear teacher."""
    if overlaps.v <= -1:
        raise SingularDenominator("ridge hat channel needs V > -1")
    g = 1.0 + overlaps.v
    return ConjugateOverlaps(
        v_hat=alpha / g,
        q_hat=alpha * (rho + overlaps.q - 2.0 * overlaps.m) / g**2,
        m_hat=alpha / (math.sqrt(gamma) * g),
    )


def hat_channel_square_classification(
    overlaps: Overlaps, rho: float, alpha: float, gamma: float
) -> ConjugateOverlaps:
    """Closed-form conjugates for square loss on a sign teacher."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    g = 1.0 + overlaps.v
    c = math.sqrt(2.0 / (math.pi * rho))
    return ConjugateOverlaps(
        v_hat=alpha / g,
        q_hat=alpha * (1.0 + overlaps.q - 2.0 * overlaps.m * c) / g**2,
        m_hat=alpha * c / (math.sqrt(gamma) * g),
    )


def teacher_channel_sign(omega0: np.ndarray, v0: float, y: float):
    """Sign-teacher likelihood ``Z0(y | omega0, v0)`` and its omega0-derivative."""
    z0 = 0.5 * erfc(-y * omega0 / math.sqrt(2.0 * v0))
    dz0 = y * np.exp(-(omega0**2) / (2.0 * v0)) / math.sqrt(2.0 * math.pi * v0)
    return z0, dz0


def loss_kinks(loss: Loss, v: float) -> tuple[float, ...]:
    """Student-field values where the prox of ``loss`` switches branch, for both labels."""
    if loss is Loss.HINGE:
        return (1.0, -1.0, 1.0 - v, v - 1.0)
    return ()


def student_field_rule(loss: Loss, sq: float, v: float, opts: SolverOptions):
    """Quadrature nodes in xi for integrands evaluated at the student field ``sq * xi``."""
    n = int(opts.quad_nodes)
    if opts.quad_rule == "hermite":
        return gauss_hermite(n)
    cuts = (0.0,) + tuple(k / sq for k in loss_kinks(loss, v))
    return gaussian_panels(n, breakpoints=cuts)


def _check_overlaps(overlaps: Overlaps, rho: float) -> float:
    q, m = overlaps.q, overlaps.m
    if not q > 0:
        raise DegenerateOverlap(f"q must be positive, got {q}")
    v0 = rho - m * m / q
    if not v0 > 0:
        raise DegenerateOverlap(f"rho*q - m^2 must be positive (rho={rho}, q={q}, m={m})")
    if not overlaps.v > 0:
        raise DegenerateOverlap(f"V must be positive, got {overlaps.v}")
    return v0


def hat_channel_quadrature(
    overlaps: Overlaps,
    rho: float,
    alpha: float,
    gamma: float,
    task: TaskSpec,
    opts: SolverOptions = SolverOptions(),
) -> ConjugateOverlaps:
    """Conjugates for a sign teacher by quadrature over the student field.

    The label sum over y = +-1 is exact. The expectation over the standard
    normal xi uses ``opts.quad_nodes`` nodes of either the panel rule (default,
    with cuts at the teacher threshold and at the loss kinks) or plain
    Gauss-Hermite.
    """
    if task.teacher is not Teacher.SIGN:
        raise ValueError("quadrature hat channel is implemented for the sign teacher")
    if alpha == 0:
        return ConjugateOverlaps(0.0, 0.0, 0.0)
    v0 = _check_overlaps(overlaps, rho)
    sq = math.sqrt(overlaps.q)
    xi, wts = student_field_rule(task.loss, sq, overlaps.v, opts)
    omega0 = (overlaps.m / sq) * xi
    v_hat = q_hat = m_hat = 0.0
    for y in (1.0, -1.0):
        z0, dz0 = teacher_channel_sign(omega0, v0, y)
        pr = prox(task.loss, sq * xi, y, overlaps.v)
        v_hat -= float(np.dot(wts, z0 * pr.f_g_prime))
        q_hat += float(np.dot(wts, z0 * pr.f_g**2))
        m_hat += float(np.dot(wts, dz0 * pr.f_g))
    return ConjugateOverlaps(alpha * v_hat, alpha * q_hat, alpha * m_hat / math.sqrt(gamma))


def hat_channel(overlaps: Overlaps, model: SpectralModel, task: TaskSpec, alpha: float,
                opts: SolverOptions = SolverOptions()) -> ConjugateOverlaps:
    """Dispatch to the exact closed form when one exists, quadrature otherwise."""
    if task.is_ridge:
        return hat_channel_ridge(overlaps, model.rho, alpha, model.gamma)
    if task.loss is Loss.SQUARE:
        return hat_channel_square_classification(overlaps, model.rho, alpha, model.gamma)
    return hat_channel_quadrature(overlaps, model.rho, alpha, model.gamma, task, opts)


def initial_overlaps(rho: float) -> Overlaps:
    q = rho / 2.0
    return Overlaps(v=1.0, q=q, m=0.01 * math.sqrt(rho * q))


def clip_alignment(overlaps: Overlaps, rho: float) -> Overlaps:
    """Pull m back inside the Cauchy-Schwarz region m^2 < rho q."""
    bound = rho * overlaps.q
    if overlaps.m**2 >= bound:
        return Overlaps(overlaps.v, overlaps.q, math.copysign(CLIP_FACTOR * math.sqrt(max(bound, 0.0)), overlaps.m))
    return overlaps


def solve(
    model: SpectralModel,
    task: TaskSpec,
    alpha: float,
    opts: SolverOptions = SolverOptions(),
    init: Overlaps | None = None,
) -> StateEvolutionResult:
    """Iterate both channels with damping until the overlaps stop moving.

    Non-convergence is reported through ``converged=False`` together with the
    last iterate, never raised.
    """
    alpha = float(alpha)
    if not (alpha >= 0 and math.isfinite(alpha)):
        raise ValueError(f"alpha must be a finite nonnegative number, got {alpha}")
    rho, lam, damp = model.rho, task.lam, opts.damping
    ov = clip_alignment(init if init is not None else initial_overlaps(rho), rho)
    hats = hat_channel(ov, model, task, alpha, opts)
    residual = math.inf
    for it in range(1, int(opts.max_iter) + 1):
        new_ov = variance_channel(hats, model, lam)
        new_ov = Overlaps(*((1 - damp) * new_ov.as_array() + damp * ov.as_array()))
        new_ov = clip_alignment(new_ov, rho)
        new_hats = hat_channel(new_ov, model, task, alpha, opts)
        new_hats = ConjugateOverlaps(*((1 - damp) * new_hats.as_array() + damp * hats.as_array()))
        residual = float(max(
            np.max(np.abs(new_ov.as_array() - ov.as_array())),
            np.max(np.abs(new_hats.as_array() - hats.as_array())),
        ))
        ov, hats = new_ov, new_hats
        if residual < opts.tol:
            return StateEvolutionResult(ov, hats, it, True, residual)
    return StateEvolutionResult(ov, hats, int(opts.max_iter), False, residual)
