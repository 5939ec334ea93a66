"""Command-line interface.

Usage::

    gcm solve|sweep|simulate|compare|kernel-scaling|estimate --config CONFIG.json [--out PATH] [--parallel] [--seed N]

Exit status is 0 when every requested point converged, 2 when some did
not, and 1 on usage or configuration errors. ``GCM_THREADS`` caps the number
of worker threads.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

from . import formats
from .curves import LearningCurve, format_float, run_sweep, solve_point
from .exceptions import ConfigError, GCMError, MismatchedGrids
from .feature_models import (
    RandomFeatureSpec,
    estimate_from_data,
    kernel_diagonal_model,
    powerlaw_diagonal_model,
    random_features_triple,
    vanilla_model,
)
from .kernel_scaling import (
    PowerLawSpec,
    finite_d_kernel_curve,
    powerlaw_curve,
    powerlaw_csv,
    slope_report,
    slope_report_json,
)
from .model import SolverOptions, SpectralModel, TaskSpec, spectral_reduce
from .simulator import SimulationConfig, run as run_simulation

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2
MODEL_SOURCES = ("model", "spectrum_file", "data_file", "triple_bundle")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def thread_count() -> int | None:
    raw = os.environ.get("GCM_THREADS")
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"GCM_THREADS must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError("GCM_THREADS must be at least 1")
    return value


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def build_source(cfg: dict, base: Path = Path(".")):
    """The model named by the single model source in the config.

    Returns a SpectralModel, or a CovarianceTriple for triple bundles and
    random features (so simulations can sample from the full covariance).
    """
    present = [k for k in MODEL_SOURCES if k in cfg]
    if len(present) != 1:
        raise ConfigError(f"config needs exactly one of {', '.join(MODEL_SOURCES)}; found {present or 'none'}")
    key = present[0]
    if key == "spectrum_file":
        return formats.read_spectrum(_resolve(base, cfg[key]))
    if key == "triple_bundle":
        return formats.read_triple(_resolve(base, cfg[key]))
    if key == "data_file":
        features, labels = formats.read_dataset(_resolve(base, cfg[key]))
        return estimate_from_data(features, labels)
    spec = dict(cfg["model"])
    kind = spec.pop("kind", "vanilla")
    try:
        if kind == "vanilla":
            return vanilla_model(int(spec["d"]), spec.get("theta0"), spec.get("rho"))
        if kind == "random_features":
            return random_features_triple(RandomFeatureSpec(
                int(spec["p"]), int(spec["d"]), spec.get("nonlinearity", "erf"), int(spec.get("seed", 0))))
        if kind == "diagonal":
            return kernel_diagonal_model(spec["omega"], spec["theta0"])
        if kind == "powerlaw":
            return powerlaw_diagonal_model(int(spec["d"]), float(spec["a"]), float(spec["b"]))
    except KeyError as exc:
        raise ConfigError(f"model of kind {kind!r} is missing field {exc}") from exc
    raise ConfigError(f"unknown model kind {kind!r}")


def as_spectral(source) -> SpectralModel:
    return source if isinstance(source, SpectralModel) else spectral_reduce(source)


def build_task(cfg: dict) -> TaskSpec:
    raw = dict(cfg.get("task", {}))
    if "lambda" in raw:
        raw["lam"] = raw.pop("lambda")
    if "teacher_fn" in raw:
        raw["teacher"] = raw.pop("teacher_fn")
    unknown = set(raw) - {"loss", "teacher", "lam", "metric"}
    if unknown:
        raise ConfigError(f"unknown task fields {sorted(unknown)}")
    return TaskSpec(**raw)


def build_solver(cfg: dict) -> SolverOptions:
    raw = dict(cfg.get("solver", {}))
    unknown = set(raw) - {"damping", "tol", "max_iter", "quad_nodes", "quad_rule"}
    if unknown:
        raise ConfigError(f"unknown solver fields {sorted(unknown)}")
    return SolverOptions(**raw)


def alpha_grid(cfg: dict) -> list[float]:
    if "alphas" in cfg:
        grid = [float(a) for a in cfg["alphas"]]
    elif "alpha" in cfg:
        grid = [float(cfg["alpha"])]
    else:
        raise ConfigError("config needs 'alphas' (or 'alpha')")
    if not grid:
        raise ConfigError("alpha grid is empty")
    return sorted(grid)


def _metadata(command: str, cfg: dict, task: TaskSpec, opts: SolverOptions) -> dict:
    source = next(k for k in MODEL_SOURCES if k in cfg)
    return {
        "command": command,
        "source": source,
        "source_value": json.dumps(cfg[source], sort_keys=True),
        "loss": task.loss.value,
        "teacher": task.teacher.value,
        "lambda": format_float(task.lam),
        "metric": task.metric.value,
        "damping": format_float(opts.damping),
        "tol": format_float(opts.tol),
        "max_iter": opts.max_iter,
        "quad_nodes": opts.quad_nodes,
        "quad_rule": opts.quad_rule,
    }


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(cfg, args, base) -> int:
    model, task, opts = as_spectral(build_source(cfg, base)), build_task(cfg), build_solver(cfg)
    grid = alpha_grid(cfg)
    if len(grid) != 1:
        raise ConfigError("solve takes a single alpha; use sweep for a grid")
    row = solve_point(model, task, grid[0], opts)
    doc = {"metadata": _metadata("solve", cfg, task, opts), "result": asdict(row)}
    doc["result"]["alpha"] = doc["result"].pop("x")
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK if row.converged else EXIT_PARTIAL


def cmd_sweep(cfg, args, base) -> int:
    model, task, opts = as_spectral(build_source(cfg, base)), build_task(cfg), build_solver(cfg)
    curve = run_sweep(model, task, alpha_grid(cfg), opts, parallel=args.parallel, max_workers=thread_count())
    curve = LearningCurve(curve.rows, curve.x_name, _metadata("sweep", cfg, task, opts))
    _emit(curve.to_csv(), args.out)
    return EXIT_OK if curve.all_converged else EXIT_PARTIAL


def _simulation_settings(cfg, args):
    sim = dict(cfg.get("simulation", {}))
    seed = args.seed if args.seed is not None else int(sim.get("seed", 0))
    return sim, seed, int(sim.get("trials", 10))


def _simulate_grid(source, task, grid, trials, seed):
    d = source.d
    reports = []
    for a in grid:
        n = max(1, int(round(a * d)))
        reports.append(run_simulation(SimulationConfig(d, n, trials, seed, task), source, thread_count()))
    return reports


def cmd_simulate(cfg, args, base) -> int:
    source, task = build_source(cfg, base), build_task(cfg)
    sim, seed, trials = _simulation_settings(cfg, args)
    grid = sorted(float(a) for a in sim.get("alphas", cfg.get("alphas", [])))
    if not grid:
        raise ConfigError("simulation needs a nonempty 'alphas' grid")
    reports = _simulate_grid(source, task, grid, trials, seed)
    doc = {
        "metadata": {"command": "simulate", "seed": seed, "trials": trials},
        "points": [json.loads(r.to_json()) | {"alpha": a} for a, r in zip(grid, reports)],
    }
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def _z_score(theory: float, mean: float, stderr: float) -> float:
    if not stderr > 0:
        return math.nan
    return (mean - theory) / stderr


def cmd_compare(cfg, args, base) -> int:
    source, task, opts = build_source(cfg, base), build_task(cfg), build_solver(cfg)
    model = as_spectral(source)
    grid = alpha_grid(cfg)
    sim, seed, trials = _simulation_settings(cfg, args)
    sim_grid = sorted(float(a) for a in sim.get("alphas", grid))
    curve = run_sweep(model, task, grid, opts, parallel=args.parallel, max_workers=thread_count())
    header = ["alpha", "e_gen_theory", "e_train_theory", "converged"]
    if not sim_grid:
        warnings.warn("simulation grid is empty; writing theory only", stacklevel=1)
        lines = [",".join(header)]
        for r in curve.rows:
            lines.append(",".join([format_float(r.x), format_float(r.e_gen), format_float(r.e_train), str(int(r.converged))]))
    else:
        if sim_grid != grid:
            raise MismatchedGrids(f"theory grid {grid} and simulation grid {sim_grid} differ")
        reports = _simulate_grid(source, task, grid, trials, seed)
        header += ["e_gen_sim", "e_gen_sim_stderr", "e_gen_z", "e_train_sim", "e_train_sim_stderr", "e_train_z"]
        lines = [",".join(header)]
        for r, rep in zip(curve.rows, reports):
            (g, gs), (t, ts) = rep.e_gen, rep.e_train
            lines.append(",".join([
                format_float(r.x), format_float(r.e_gen), format_float(r.e_train), str(int(r.converged)),
                format_float(g), format_float(gs), format_float(_z_score(r.e_gen, g, gs)),
                format_float(t), format_float(ts), format_float(_z_score(r.e_train, t, ts)),
            ]))
    meta = _metadata("compare", cfg, task, opts) | {"seed": seed, "trials": trials}
    text = "".join(f"# {k}={v}\n" for k, v in meta.items()) + "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK if curve.all_converged else EXIT_PARTIAL


def cmd_kernel_scaling(cfg, args, base) -> int:
    ks = dict(cfg.get("kernel_scaling", {}))
    if any(k in cfg for k in MODEL_SOURCES):
        # finite-dimensional diagonal model given explicitly
        model = as_spectral(build_source(cfg, base))
        lam = float(ks.get("lambda", build_task(cfg).lam))
        n_values = ks.get("n_values")
        if not n_values:
            raise ConfigError("kernel_scaling needs a nonempty 'n_values'")
        curve = finite_d_kernel_curve(model, lam, n_values)
        _emit(curve.to_csv(), args.out)
        return EXIT_OK
    try:
        spec = PowerLawSpec(float(ks["a"]), float(ks["b"]), float(ks["lambda"]),
                            tuple(ks["n_values"]), ks.get("cutoff"))
    except KeyError as exc:
        raise ConfigError(f"kernel_scaling is missing field {exc}") from exc
    if not spec.n_values:
        raise ConfigError("kernel_scaling needs a nonempty 'n_values'")
    points = powerlaw_curve(spec)
    _emit(powerlaw_csv(points), args.out)
    if len(points) >= 4:
        report = slope_report_json(slope_report(spec, points)) + "\n"
        if args.out:
            Path(args.out).with_suffix(".slopes.json").write_text(report)
        else:
            sys.stderr.write(report)
    return EXIT_OK


def cmd_estimate(cfg, args, base) -> int:
    if "data_file" not in cfg:
        raise ConfigError("estimate needs 'data_file'")
    features, labels = formats.read_dataset(_resolve(base, cfg["data_file"]))
    model = estimate_from_data(features, labels, center=bool(cfg.get("center", True)))
    _emit(formats.spectrum_to_csv(model), args.out)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "kernel-scaling": cmd_kernel_scaling,
    "estimate": cmd_estimate,
}


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gcm", description="Asymptotic learning curves for the Gaussian covariate model.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", help="output file (stdout when omitted)")
    parser.add_argument("--parallel", action="store_true", help="solve sweep points concurrently without warm starts")
    parser.add_argument("--seed", type=int, help="override the simulation seed")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args, Path(args.config).resolve().parent)
    except (GCMError, ValueError, TypeError) as exc:
        sys.stderr.write(f"gcm: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
