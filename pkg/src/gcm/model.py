"""Domain types for the Gaussian covariate teacher-student model.

The covariates are drawn jointly as ``(u, v) ~ N(0, [[psi, phi], [phi.T, omega]])``
with ``u`` in R^p (teacher space) and ``v`` in R^d (student space). Labels are
``y = f0(theta0 @ u / sqrt(p))`` and the student learns ``w`` on ``v`` with an
l2 penalty. Every solver in the package only needs the spectrum of ``omega``,
the rotated teacher projection and two scalars, which is what
:class:`SpectralModel` holds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, NotPositiveDefinite

PD_FLOOR = 1e-12
SCHUR_TOL = 1e-10
EXPLAINED_RTOL = 1e-6


class Loss(str, enum.Enum):
    SQUARE = "square"
    LOGISTIC = "logistic"
    HINGE = "hinge"


class Teacher(str, enum.Enum):
    LINEAR = "linear"
    SIGN = "sign"


class Metric(str, enum.Enum):
    MSE = "mse"
    ZERO_ONE = "zero_one"


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _is_diagonal(mat: np.ndarray) -> bool:
    return not np.any(mat[~np.eye(mat.shape[0], dtype=bool)])


def _check_pd(mat: np.ndarray, name: str) -> np.ndarray:
    eig = np.sort(np.diag(mat)) if _is_diagonal(mat) else np.linalg.eigvalsh(mat)
    top = eig[-1]
    if top <= 0 or eig[0] <= PD_FLOOR * top:
        raise NotPositiveDefinite(
            f"{name} is not positive definite (min eig {eig[0]:.3e}, max eig {top:.3e})"
        )
    return eig


@dataclass(frozen=True)
class CovarianceTriple:
    """Full covariance specification ``(psi, phi, omega)`` plus teacher weights."""

    psi: np.ndarray
    phi: np.ndarray
    omega: np.ndarray
    theta0: np.ndarray

    def __post_init__(self):
        psi = _frozen(self.psi, 2, "psi")
        phi = _frozen(self.phi, 2, "phi")
        omega = _frozen(self.omega, 2, "omega")
        theta0 = _frozen(self.theta0, 1, "theta0")
        p, d = phi.shape
        if psi.shape != (p, p) or omega.shape != (d, d) or theta0.shape != (p,):
            raise DimensionMismatch(
                f"inconsistent shapes psi{psi.shape} phi{phi.shape} "
                f"omega{omega.shape} theta0{theta0.shape}"
            )
        for name, mat in (("psi", psi), ("omega", omega)):
            if not np.allclose(mat, mat.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(mat).max())):
                raise ValueError(f"{name} is not symmetric")
        _check_pd(psi, "psi")
        eig_omega = _check_pd(omega, "omega")
        if _is_diagonal(psi):
            schur = omega - phi.T @ (phi / np.diag(psi)[:, None])
        else:
            schur = omega - phi.T @ np.linalg.solve(psi, phi)
        schur_min = np.linalg.eigvalsh(0.5 * (schur + schur.T))[0]
        if schur_min < -SCHUR_TOL * eig_omega[-1]:
            raise NotPositiveDefinite(
                f"Schur complement omega - phi.T psi^-1 phi has eigenvalue {schur_min:.3e} < 0"
            )
        sq = float(theta0 @ theta0)
        if not (sq > 0 and math.isfinite(sq)):
            raise ValueError("theta0 must have finite nonzero norm")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "theta0", theta0)

    @property
    def p(self) -> int:
        return self.phi.shape[0]

    @property
    def d(self) -> int:
        return self.phi.shape[1]

    @property
    def rho(self) -> float:
        return float(self.theta0 @ self.psi @ self.theta0) / self.p


@dataclass(frozen=True)
class SpectralModel:
    """Spectral summary of a covariance triple.

    ``eigenvalues`` are the eigenvalues of omega (descending) and
    ``teacher_projection`` the components of ``phi.T @ theta0`` in the
    matching eigenvector basis.
    """

    eigenvalues: np.ndarray
    teacher_projection: np.ndarray
    rho: float
    gamma: float = 1.0

    def __post_init__(self):
        eig = _frozen(self.eigenvalues, 1, "eigenvalues")
        t = _frozen(self.teacher_projection, 1, "teacher_projection")
        if eig.shape != t.shape:
            raise DimensionMismatch(
                f"eigenvalues {eig.shape} and teacher_projection {t.shape} differ in length"
            )
        if eig.size == 0:
            raise DimensionMismatch("empty spectrum")
        if np.any(eig < 0):
            raise ValueError("eigenvalues must be nonnegative")
        rho, gamma = float(self.rho), float(self.gamma)
        if not (rho > 0 and math.isfinite(rho)):
            raise ValueError(f"rho must be positive, got {rho}")
        if not (gamma > 0 and math.isfinite(gamma)):
            raise ValueError(f"gamma must be positive, got {gamma}")
        object.__setattr__(self, "eigenvalues", eig)
        object.__setattr__(self, "teacher_projection", t)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "gamma", gamma)
        # the teacher variance the student can explain is bounded by rho,
        # otherwise the joint covariance has a negative Schur complement
        explained = self.explained_rho()
        if explained > rho * (1.0 + EXPLAINED_RTOL):
            raise NotPositiveDefinite(
                f"rho={rho} is below the teacher variance explained by the student ({explained})"
            )

    @property
    def d(self) -> int:
        return self.eigenvalues.size

    @property
    def p(self) -> float:
        """Teacher dimension implied by ``gamma``; not necessarily an integer."""
        return self.gamma * self.d

    def explained_rho(self) -> float:
        """Teacher variance visible to the student, ``theta0.T phi omega^-1 phi.T theta0 / p``.

        Directions with zero eigenvalue are skipped.
        """
        pos = self.eigenvalues > 0
        t = self.teacher_projection[pos]
        return float(np.sum(t * t / self.eigenvalues[pos])) / self.p


@dataclass(frozen=True)
class TaskSpec:
    loss: Loss = Loss.SQUARE
    teacher: Teacher = Teacher.LINEAR
    lam: float = 0.1
    metric: Metric = Metric.MSE

    def __post_init__(self):
        object.__setattr__(self, "loss", Loss(self.loss))
        object.__setattr__(self, "teacher", Teacher(self.teacher))
        object.__setattr__(self, "metric", Metric(self.metric))
        lam = float(self.lam)
        if not (lam > 0 and math.isfinite(lam)):
            raise ValueError("lambda must be > 0; approach lambda -> 0+ with a decreasing sequence")
        object.__setattr__(self, "lam", lam)
        if self.metric is Metric.ZERO_ONE and self.teacher is not Teacher.SIGN:
            raise ValueError("zero-one metric requires a sign teacher")
        if self.loss in (Loss.LOGISTIC, Loss.HINGE) and self.teacher is not Teacher.SIGN:
            raise ValueError(f"{self.loss.value} loss needs +-1 labels, i.e. a sign teacher")

    @property
    def is_ridge(self) -> bool:
        return self.loss is Loss.SQUARE and self.teacher is Teacher.LINEAR


@dataclass(frozen=True)
class Overlaps:
    v: float
    q: float
    m: float

    def __post_init__(self):
        for name in ("v", "q", "m"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.q, self.m])

    def alignment(self, rho: float) -> float:
        """Cosine ``m / sqrt(rho q)`` between teacher and student fields."""
        return self.m / math.sqrt(rho * self.q) if self.q > 0 else 0.0


@dataclass(frozen=True)
class ConjugateOverlaps:
    v_hat: float
    q_hat: float
    m_hat: float

    def __post_init__(self):
        for name in ("v_hat", "q_hat", "m_hat"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not all(math.isfinite(x) for x in (self.v_hat, self.q_hat, self.m_hat)):
            raise ValueError(f"non-finite conjugate overlaps {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.v_hat, self.q_hat, self.m_hat])


@dataclass(frozen=True)
class SolverOptions:
    damping: float = 0.5
    tol: float = 1e-8
    max_iter: int = 10_000
    quad_nodes: int = 256
    quad_rule: str = "panel"

    def __post_init__(self):
        if self.quad_rule not in ("panel", "hermite"):
            raise ValueError("quad_rule must be 'panel' or 'hermite'")
        if not 0 <= self.damping < 1:
            raise ValueError("damping must lie in [0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) < 1 or int(self.quad_nodes) < 1:
            raise ValueError("max_iter and quad_nodes must be positive integers")


def spectral_reduce(triple: CovarianceTriple) -> SpectralModel:
    """Rotate a covariance triple into the eigenbasis of ``omega``.

    Eigenvalues come out in descending order. Each eigenvector's sign is
    chosen so that the teacher projection is nonnegative, which makes the
    output deterministic.
    """
    evals, evecs = np.linalg.eigh(triple.omega)
    order = np.argsort(evals, kind="stable")[::-1]
    evals = evals[order]
    s = evecs[:, order].T
    t = s @ (triple.phi.T @ triple.theta0)
    # numerical noise can leave tiny negative eigenvalues after eigh
    evals = np.where(evals < 0, 0.0, evals)
    return SpectralModel(
        eigenvalues=evals,
        teacher_projection=np.abs(t),
        rho=triple.rho,
        gamma=triple.p / triple.d,
    )
