"""Monte Carlo ERM at finite size, used as the oracle for the asymptotic solver.

Each trial samples ``n`` points of the Gaussian covariate model, fits the
student exactly (ridge in closed form, logistic by Newton's method) and
measures the population overlaps of the fitted weights. The generalization
error is then evaluated from those overlaps, which is exact for a fresh
Gaussian sample and avoids holdout noise.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit

from .errors import classification_error, mse_errors, sign_teacher_mse
from .exceptions import DimensionMismatch, NegativeConditionalVariance, SolverBudgetExceeded
from .model import (
    CovarianceTriple,
    Loss,
    Metric,
    Overlaps,
    SpectralModel,
    TaskSpec,
    Teacher,
)
from .proximal import logistic_loss

NEGATIVE_TOL = 1e-10
LOGISTIC_GTOL = 1e-9
LOGISTIC_MAX_ITER = 500


@dataclass(frozen=True)
class SimulationConfig:
    d: int
    n: int
    trials: int
    seed: int = 0
    task: TaskSpec = TaskSpec()

    def __post_init__(self):
        if int(self.d) < 2:
            raise ValueError("d must be at least 2")
        if int(self.n) < 1:
            raise ValueError("n must be at least 1")
        if int(self.trials) < 1:
            raise ValueError("trials must be at least 1")
        if self.task.loss is Loss.HINGE:
            raise ValueError("finite-size hinge training is not supported; use logistic with small lambda")

    @property
    def alpha(self) -> float:
        return self.n / self.d


@dataclass(frozen=True)
class TrialResult:
    e_gen: float
    e_train: float
    q: float
    m: float
    weight_norm: float


def _mean_stderr(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return float(arr.mean()), math.nan
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


@dataclass(frozen=True)
class SimulationReport:
    config: SimulationConfig
    trials: tuple[TrialResult, ...]

    def _stat(self, name: str) -> tuple[float, float]:
        return _mean_stderr([getattr(t, name) for t in self.trials])

    @property
    def e_gen(self) -> tuple[float, float]:
        return self._stat("e_gen")

    @property
    def e_train(self) -> tuple[float, float]:
        return self._stat("e_train")

    @property
    def q(self) -> tuple[float, float]:
        return self._stat("q")

    @property
    def m(self) -> tuple[float, float]:
        return self._stat("m")

    @property
    def weight_norm(self) -> tuple[float, float]:
        return self._stat("weight_norm")

    def summary(self) -> dict:
        out = {}
        for name in ("e_gen", "e_train", "q", "m", "weight_norm"):
            mean, err = self._stat(name)
            out[name] = mean
            out[name + "_stderr"] = err
        return out

    def to_json(self) -> str:
        cfg = asdict(self.config)
        cfg["task"] = {k: getattr(v, "value", v) for k, v in asdict(self.config.task).items()}
        doc = {
            "config": cfg,
            "summary": self.summary(),
            "trials": [asdict(t) for t in self.trials],
        }
        return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True)


def _apply_teacher(nu: np.ndarray, teacher: Teacher) -> np.ndarray:
    if teacher is Teacher.SIGN:
        return np.where(nu >= 0, 1.0, -1.0)
    return nu.copy()


def _conditional_std(var: float, rho: float) -> float:
    """Standard deviation of the teacher field given the student input.

    Variances within rounding of zero, of either sign, count as exactly zero.
    """
    scale = NEGATIVE_TOL * max(rho, 1.0)
    if var < -scale:
        raise NegativeConditionalVariance(f"conditional teacher variance {var:.3e} < 0")
    return math.sqrt(var) if var > scale else 0.0


def sample_instance(source, n: int, rng: np.random.Generator, teacher: Teacher = Teacher.LINEAR):
    """Draw ``n`` rows ``v ~ N(0, omega)`` with teacher fields and labels.

    The teacher field ``nu = theta0.u / sqrt(p)`` is sampled from its exact
    Gaussian law conditional on ``v``, so the teacher input ``u`` is never
    built. A :class:`SpectralModel` is sampled directly in the eigenbasis of
    omega; a :class:`CovarianceTriple` through a Cholesky factor.
    """
    teacher = Teacher(teacher)
    if isinstance(source, SpectralModel):
        w, t = source.eigenvalues, source.teacher_projection
        p = source.p
        x = rng.standard_normal((n, source.d)) * np.sqrt(w)
        pos = w > 0
        coef = np.zeros_like(w)
        coef[pos] = t[pos] / (w[pos] * math.sqrt(p))
        explained = float(np.sum(t[pos] ** 2 / w[pos])) / p
        rho = source.rho
    elif isinstance(source, CovarianceTriple):
        chol = np.linalg.cholesky(source.omega)
        x = rng.standard_normal((n, source.d)) @ chol.T
        b = source.phi.T @ source.theta0
        coef = linalg.cho_solve((chol, True), b) / math.sqrt(source.p)
        explained = float(b @ coef) / math.sqrt(source.p)
        rho = source.rho
    else:
        raise TypeError("source must be a SpectralModel or CovarianceTriple")
    std = _conditional_std(rho - explained, rho)
    nu = x @ coef + std * rng.standard_normal(n)
    return x, nu, _apply_teacher(nu, teacher)


def ridge_fit(design: np.ndarray, labels: np.ndarray, lam: float, method: str = "auto") -> np.ndarray:
    """Minimizer of ``sum (y - w.v/sqrt(d))^2 / 2 + lam |w|^2 / 2``.

    ``method="auto"`` uses the d x d normal equations when n >= d and the
    n x n dual system otherwise; ``"primal"`` or ``"dual"`` forces one.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if method not in ("auto", "primal", "dual"):
        raise ValueError(f"unknown ridge method {method!r}")
    n, d = design.shape
    v = design / math.sqrt(d)
    if method == "primal" or (method == "auto" and n >= d):
        return linalg.solve(lam * np.eye(d) + v.T @ v, v.T @ labels, assume_a="pos")
    return v.T @ linalg.solve(lam * np.eye(n) + v @ v.T, labels, assume_a="pos")


def _logistic_objective(v, y, w, lam):
    return float(np.sum(logistic_loss(v @ w, y)) + 0.5 * lam * (w @ w))


def logistic_fit(design: np.ndarray, labels: np.ndarray, lam: float,
                 gtol: float = LOGISTIC_GTOL, max_iter: int = LOGISTIC_MAX_ITER) -> np.ndarray:
    """Minimizer of ``sum log(1 + exp(-y w.v/sqrt(d))) + lam |w|^2 / 2``.

    Newton's method with backtracking; the penalty makes the problem strongly
    convex so the iteration always terminates for lam > 0.
    """
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    n, d = design.shape
    v = design / math.sqrt(d)
    y = np.asarray(labels, dtype=float)
    w = np.zeros(d)
    obj = _logistic_objective(v, y, w, lam)
    for _ in range(max_iter):
        margins = y * (v @ w)
        grad = -v.T @ (y * expit(-margins)) + lam * w
        if np.linalg.norm(grad) < gtol:
            return w
        s = expit(margins) * expit(-margins)
        hess = (v.T * s) @ v + lam * np.eye(d)
        step = linalg.solve(hess, grad, assume_a="pos")
        slope = float(grad @ step)
        # near the optimum the objective change drops below rounding, so the
        # sufficient-decrease test gets a little slack
        slack = 1e-13 * max(1.0, abs(obj))
        t = 1.0
        while True:
            cand = w - t * step
            cand_obj = _logistic_objective(v, y, cand, lam)
            if cand_obj <= obj - 1e-4 * t * slope + slack:
                break
            t *= 0.5
            if t < 1e-12:
                raise SolverBudgetExceeded("logistic line search failed to find a descent step")
        w, obj = cand, cand_obj
    raise SolverBudgetExceeded(f"logistic Newton did not reach gradient norm {gtol} in {max_iter} steps")


def population_overlaps(source, w: np.ndarray) -> tuple[float, float]:
    """``q = w.omega.w / d`` and ``m = theta0.phi.w / sqrt(d p)`` for fitted weights."""
    if isinstance(source, SpectralModel):
        d, p = source.d, source.p
        q = float(np.sum(source.eigenvalues * w**2)) / d
        m = float(source.teacher_projection @ w) / math.sqrt(d * p)
    else:
        d, p = source.d, source.p
        q = float(w @ source.omega @ w) / d
        m = float(source.theta0 @ source.phi @ w) / math.sqrt(d * p)
    return q, m


def _generalization_error(task: TaskSpec, q: float, m: float, rho: float) -> float:
    ov = Overlaps(0.0, q, m)
    if task.teacher is Teacher.LINEAR:
        return mse_errors(ov, rho).e_gen
    if task.metric is Metric.ZERO_ONE:
        return classification_error(ov, rho)
    return sign_teacher_mse(ov, rho)


def _training_error(task: TaskSpec, design, labels, w) -> float:
    pred = design @ w / math.sqrt(design.shape[1])
    if task.loss is Loss.SQUARE:
        return float(np.mean((labels - pred) ** 2))
    return float(np.mean(logistic_loss(pred, labels)))


def run_trial(config: SimulationConfig, source, trial: int) -> TrialResult:
    rng = np.random.default_rng([int(config.seed), int(trial)])
    task = config.task
    x, _, y = sample_instance(source, int(config.n), rng, task.teacher)
    if task.loss is Loss.SQUARE:
        w = ridge_fit(x, y, task.lam)
    else:
        w = logistic_fit(x, y, task.lam)
    q, m = population_overlaps(source, w)
    return TrialResult(
        e_gen=float(_generalization_error(task, q, m, source.rho)),
        e_train=_training_error(task, x, y, w),
        q=q,
        m=m,
        weight_norm=float(w @ w) / w.size,
    )


def run(config: SimulationConfig, source, max_workers: int | None = None) -> SimulationReport:
    """Run all trials, concurrently when ``max_workers`` allows.

    Each trial draws from its own generator seeded with ``(seed, trial)``, so
    the report does not depend on scheduling.
    """
    if source.d != int(config.d):
        raise DimensionMismatch(f"config d={config.d} but model has d={source.d}")
    trials = range(int(config.trials))
    if max_workers == 1:
        results = [run_trial(config, source, k) for k in trials]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda k: run_trial(config, source, k), trials))
    return SimulationReport(config, tuple(results))
