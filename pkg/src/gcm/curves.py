"""Learning curves: containers, CSV output and sweeps over the sample complexity."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import evaluate_errors
from .model import Overlaps, SolverOptions, SpectralModel, TaskSpec
from .state_evolution import solve

CURVE_COLUMNS = ("e_gen", "e_train", "v", "q", "m", "converged", "iterations")


def format_float(x: float) -> str:
    """Shortest locale-independent representation that round-trips exactly."""
    return repr(float(x))


@dataclass(frozen=True)
class CurveRow:
    x: float
    e_gen: float
    e_train: float
    v: float
    q: float
    m: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class LearningCurve:
    """Rows sorted by the sweep variable ``x_name`` (``alpha`` or ``n``)."""

    rows: tuple[CurveRow, ...]
    x_name: str = "alpha"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        xs = [r.x for r in self.rows]
        if xs != sorted(xs):
            raise ValueError("learning curve rows must be sorted by the sweep variable")

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.rows)

    def column(self, name: str) -> np.ndarray:
        key = "x" if name == self.x_name else name
        return np.array([getattr(r, key) for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}={value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow((self.x_name,) + CURVE_COLUMNS)
        for r in self.rows:
            writer.writerow([
                format_float(r.x), format_float(r.e_gen), format_float(r.e_train),
                format_float(r.v), format_float(r.q), format_float(r.m),
                int(r.converged), r.iterations,
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LearningCurve":
        meta, body = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            elif line.strip():
                body.append(line)
        reader = csv.reader(body)
        header = next(reader)
        rows = tuple(
            CurveRow(float(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]),
                     float(r[5]), bool(int(r[6])), int(r[7]))
            for r in reader
        )
        return cls(rows, header[0], meta)


def solve_point(model: SpectralModel, task: TaskSpec, alpha: float, opts: SolverOptions,
                init: Overlaps | None = None) -> CurveRow:
    """One grid point; a warm start that fails to converge is retried cold."""
    res = solve(model, task, alpha, opts, init=init)
    if not res.converged and init is not None:
        cold = solve(model, task, alpha, opts)
        if cold.converged or cold.residual < res.residual:
            res = cold
    try:
        err = evaluate_errors(res, model, task, alpha, opts)
        e_gen, e_train = err.e_gen, err.e_train
    except ArithmeticError:
        if res.converged:
            raise
        e_gen = e_train = math.nan
    ov = res.overlaps
    return CurveRow(float(alpha), e_gen, e_train, ov.v, ov.q, ov.m, res.converged, res.iterations)


def run_sweep(
    model: SpectralModel,
    task: TaskSpec,
    alphas,
    opts: SolverOptions = SolverOptions(),
    parallel: bool = False,
    max_workers: int | None = None,
) -> LearningCurve:
    """Solve on every alpha in increasing order.

    Sequential sweeps warm-start each point from the previous converged
    overlaps. ``parallel=True`` gives up warm starts and solves every point
    from the default initialization concurrently.
    """
    grid = sorted(float(a) for a in alphas)
    if not grid:
        raise ValueError("alpha grid is empty")
    if parallel:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(lambda a: solve_point(model, task, a, opts), grid))
    else:
        rows, init = [], None
        for a in grid:
            row = solve_point(model, task, a, opts, init)
            rows.append(row)
            init = Overlaps(row.v, row.q, row.m) if row.converged and row.q > 0 else None
    return LearningCurve(tuple(rows), "alpha")
