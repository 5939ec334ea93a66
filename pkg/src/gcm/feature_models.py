"""Constructors for common instances of the Gaussian covariate model.

* the vanilla model, where teacher and student see the same isotropic input;
* random features ``v = sigma(F u)`` through their Gaussian-equivalent
  covariances;
* diagonal (kernel) models with a prescribed spectrum;
* models estimated from a finite dataset of features and labels.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .exceptions import DegenerateLabels, DimensionMismatch
from .model import CovarianceTriple, SpectralModel
from .quadrature import gaussian_expectation

EIGEN_FLOOR = 1e-12
KAPPA_NODES = 512


class Nonlinearity(str, enum.Enum):
    ERF = "erf"
    TANH = "tanh"
    SIGN = "sign"
    RELU = "relu"


_ACTIVATIONS = {
    Nonlinearity.ERF: erf,
    Nonlinearity.TANH: np.tanh,
    Nonlinearity.SIGN: np.sign,
    Nonlinearity.RELU: lambda z: np.maximum(z, 0.0),
}


def activation(nonlinearity: Nonlinearity):
    return _ACTIVATIONS[Nonlinearity(nonlinearity)]


@dataclass(frozen=True)
class KappaConstants:
    """Gaussian-equivalence coefficients of a nonlinearity.

    ``kappa0 = E[s(z)]``, ``kappa1 = E[z s(z)]`` and
    ``kappa_star^2 = E[s(z)^2] - kappa0^2 - kappa1^2`` for ``z ~ N(0, 1)``.
    """

    kappa0: float
    kappa1: float
    kappa_star: float

    def __post_init__(self):
        if self.kappa_star < 0:
            raise ValueError("kappa_star must be nonnegative")


@dataclass(frozen=True)
class RandomFeatureSpec:
    p: int
    d: int
    nonlinearity: Nonlinearity = Nonlinearity.ERF
    seed: int = 0

    def __post_init__(self):
        if int(self.p) < 1 or int(self.d) < 1:
            raise ValueError("p and d must be at least 1")
        object.__setattr__(self, "nonlinearity", Nonlinearity(self.nonlinearity))


def kappa_constants(nonlinearity: Nonlinearity, nodes: int = KAPPA_NODES) -> KappaConstants:
    """Compute the constants of a named activation by quadrature."""
    return kappa_from_function(_ACTIVATIONS[Nonlinearity(nonlinearity)], nodes)


def kappa_from_function(s, nodes: int = KAPPA_NODES) -> KappaConstants:
    """Constants of an arbitrary vectorized activation ``s``.

    Uses the panel rule with a cut at the origin. It is exact for sign and
    relu up to rounding, and unlike Gauss-Hermite it stays accurate for
    steep smooth activations such as ``tanh(4 z)``.
    """
    k0 = gaussian_expectation(s, nodes, kinked=True)
    k1 = gaussian_expectation(lambda z: z * s(z), nodes, kinked=True)
    second = gaussian_expectation(lambda z: s(z) ** 2, nodes, kinked=True)
    return KappaConstants(k0, k1, math.sqrt(max(second - k0**2 - k1**2, 0.0)))


def vanilla_model(d: int, theta0=None, rho_target: float | None = None) -> SpectralModel:
    """Identity covariances with teacher and student on the same input.

    ``theta0`` defaults to all ones. When ``rho_target`` is given the teacher
    is rescaled so that ``|theta0|^2 / d == rho_target``.
    """
    if int(d) < 1:
        raise ValueError("d must be at least 1")
    theta0 = np.ones(d) if theta0 is None else np.asarray(theta0, dtype=float)
    if theta0.shape != (d,):
        raise DimensionMismatch(f"theta0 must have length {d}, got {theta0.shape}")
    rho = float(theta0 @ theta0) / d
    if rho_target is not None:
        theta0 = theta0 * math.sqrt(rho_target / rho)
        rho = float(rho_target)
    return SpectralModel(np.ones(d), theta0, rho, 1.0)


def random_features_triple(
    spec: RandomFeatureSpec,
    theta0=None,
    kappas: KappaConstants | None = None,
) -> CovarianceTriple:
    """Gaussian-equivalent covariances of ``v = sigma(F u)`` with ``u ~ N(0, I_p)``.

    ``F`` is d x p with entries of variance 1/p so that each preactivation has
    unit variance. Then ``phi = kappa1 F.T``,
    ``omega = kappa0^2 11^T + kappa1^2 F F^T + kappa_star^2 I``, and the
    Schur complement ``kappa0^2 11^T + kappa_star^2 I`` is positive
    semidefinite. ``theta0`` defaults to a standard normal draw from the same
    seed. ``kappas`` overrides the constants of the nonlinearity.
    """
    rng = np.random.default_rng(spec.seed)
    p, d = int(spec.p), int(spec.d)
    f = rng.standard_normal((d, p)) / math.sqrt(p)
    if theta0 is None:
        theta0 = rng.standard_normal(p)
    k = kappas if kappas is not None else kappa_constants(spec.nonlinearity)
    omega = k.kappa0**2 * np.ones((d, d)) + k.kappa1**2 * (f @ f.T) + k.kappa_star**2 * np.eye(d)
    return CovarianceTriple(np.eye(p), k.kappa1 * f.T, 0.5 * (omega + omega.T), theta0)


def kernel_diagonal_model(omega, theta0) -> SpectralModel:
    """Diagonal model with all three covariances equal to ``diag(omega)``."""
    omega = np.asarray(omega, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    if omega.shape != theta0.shape or omega.ndim != 1:
        raise DimensionMismatch(f"omega {omega.shape} and theta0 {theta0.shape} must be equal-length vectors")
    if np.any(omega < 0):
        raise ValueError("omega must be nonnegative")
    rho = float(np.sum(omega * theta0**2)) / omega.size
    return SpectralModel(omega, omega * theta0, rho, 1.0)


def powerlaw_diagonal_model(d: int, a: float, b: float) -> SpectralModel:
    """Diagonal model with ``omega_i = d i^-b`` and ``theta0_i^2 omega_i = d i^-a``."""
    i = np.arange(1, d + 1, dtype=float)
    omega = d * i**-b
    theta0 = np.sqrt(d * i**-a / omega)
    return kernel_diagonal_model(omega, theta0)


def _center(features: np.ndarray) -> np.ndarray:
    return features - features.mean(axis=0, keepdims=True)


def _check_data(features, labels):
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"features {x.shape} and labels {y.shape} do not match")
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    if np.all(y == y[0]):
        raise DegenerateLabels("all labels are equal")
    return x, y


def _eigenbasis(omega: np.ndarray):
    evals, evecs = np.linalg.eigh(omega)
    order = np.argsort(evals, kind="stable")[::-1]
    evals, evecs = evals[order], evecs[:, order]
    null = evals < EIGEN_FLOOR * max(evals[0], 0.0)
    evals = np.where(null, 0.0, evals)
    return evals, evecs, null


def empirical_moments(features, labels, center: bool = True):
    """Sample covariance, rescaled teacher cross-moment and ``rho`` of a dataset.

    The cross-moment ``sqrt(d) * mean(y v)`` estimates ``phi.T theta0`` for any
    linear teacher with ``gamma = 1`` that reproduces the labels.
    """
    x, y = _check_data(features, labels)
    if center:
        x = _center(x)
    n, d = x.shape
    return x.T @ x / n, math.sqrt(d) * (x.T @ y) / n, float(np.mean(y**2))


def estimate_from_data(features, labels, center: bool = True, warn: bool = True) -> SpectralModel:
    """Spectral model of a dataset seen through a linear teacher.

    Any linear teacher that reproduces the labels gives the same asymptotic
    predictions, since they depend on the teacher only through
    ``rho = E[y^2]`` and ``E[y v]``. Both are replaced by sample averages and
    the student covariance by the sample covariance. ``gamma`` is set to 1.

    The estimate is only trustworthy for training sizes well below the number
    of rows used here.
    """
    omega, cross, rho = empirical_moments(features, labels, center)
    n, d = np.shape(features)
    evals, evecs, null = _eigenbasis(omega)
    t = np.where(null, 0.0, np.abs(evecs.T @ cross))
    if warn:
        warnings.warn(
            f"model estimated from {n} samples; predictions are reliable only for n << {n}",
            stacklevel=2,
        )
    return SpectralModel(evals, t, rho, 1.0)


def estimate_triple_from_data(features, teacher_features, theta0, center: bool = True) -> CovarianceTriple:
    """Empirical covariance triple for explicit teacher features and weights."""
    v = np.asarray(features, dtype=float)
    u = np.asarray(teacher_features, dtype=float)
    if v.ndim != 2 or u.ndim != 2 or v.shape[0] != u.shape[0]:
        raise DimensionMismatch(f"features {v.shape} and teacher features {u.shape} do not match")
    if center:
        v, u = _center(v), _center(u)
    n = v.shape[0]
    psi = u.T @ u / n
    omega = v.T @ v / n
    return CovarianceTriple(0.5 * (psi + psi.T), u.T @ v / n, 0.5 * (omega + omega.T), theta0)


def with_unit_gamma(model: SpectralModel) -> SpectralModel:
    """Equivalent model with ``gamma = 1``.

    The fixed point only depends on ``teacher_projection^2 / gamma``, so
    rescaling the projection by ``1 / sqrt(gamma)`` leaves every prediction
    unchanged and gives models from different teacher dimensions a common
    form.
    """
    return SpectralModel(
        model.eigenvalues,
        model.teacher_projection / math.sqrt(model.gamma),
        model.rho,
        1.0,
    )
