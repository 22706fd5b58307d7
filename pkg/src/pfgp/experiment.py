"""Config-driven experiment runner: method x M x seed sweeps scored against the exact posterior."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    DatasetSpec,
    REGISTRY,
    aux_subset_size,
    draw_aux_subset,
    generate_synthetic,
    load_csv,
)
from .divergences import GaussianNd, kl_gaussian
from .errors import ConfigError, JitterCapExceededError, NonFiniteObjectiveError, PfgpError
from .exact import GaussianPosterior, fit_exact, predict_exact
from .kernels import KernelParams
from .optimize import OptimizerConfig, optimize_inducing, trace_to_csv
from .pf import (
    build_aux_sor,
    build_aux_subset,
    eps_bound,
    pf_dtc_objective_full,
    pf_dtc_value_and_gradient,
    pf_divergence_value,
)
from .sparse import (
    build_nystrom,
    dtc_predict,
    fit_hyperparams_pilot,
    sor_predict,
    subsample_predict,
    vfe_elbo,
    vfe_elbo_gradient,
)

__all__ = ["ExperimentConfig", "ResultRow", "MetricRecord", "parse_config",
           "run_experiment", "compute_metrics", "write_results_csv",
           "RESULT_COLUMNS", "bench_scaling"]

METHODS = ("pf-dtc", "vfe", "sor", "subsample")
RESULT_COLUMNS = ("dataset", "method", "M", "seed", "mean_rmse", "std_rmse",
                  "pred_rmse", "kl_to_exact", "objective_final", "eps_bound",
                  "wall_time_seconds", "status")


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic"
    csv_path: str | None = None
    target_column: str | None = None
    n_total: int = 2000
    data_seed: int = 0
    methods: tuple = ("pf-dtc", "vfe", "sor", "subsample")
    m_grid: tuple = (10, 20, 50, 100, 200)
    seeds: tuple = tuple(range(10))
    aux_kind: str = "sor"
    aux_fraction: float = 0.1
    aux_size: int | None = None
    algorithm: str = "adam"
    step_size: float = 1e-2
    max_iters: int = 500
    grad_tol: float = 1e-8
    restarts: int = 5
    pilot_enabled: bool = True
    pilot_m: int = 200
    pilot_max_evals: int = 400
    lengthscales: tuple | None = None
    signal_variance: float | None = None
    noise_variance: float | None = None
    out_dir: str = "results"
    emit_svg: bool = False
    validation_mode: bool = False
    compute_eps: bool = False
    validation_cap: int = 2000
    kl_points: int = 200
    workers: int = 1

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
        if not self.m_grid or list(self.m_grid) != sorted(set(self.m_grid)):
            raise ConfigError("m_grid must be non-empty, ascending and distinct")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError("seeds must be non-empty and distinct")
        if self.aux_kind not in ("sor", "subset"):
            raise ConfigError(f"unknown aux_kind {self.aux_kind!r}")

    def optimizer_config(self, seed: int) -> OptimizerConfig:
        return OptimizerConfig(self.algorithm, self.step_size, self.max_iters,
                               self.grad_tol, self.restarts, seed)


_BOOL_KEYS = {"pilot_enabled", "emit_svg", "validation_mode", "compute_eps"}
_INT_KEYS = {"n_total", "data_seed", "max_iters", "restarts", "pilot_m",
             "pilot_max_evals", "aux_size", "validation_cap", "kl_points", "workers"}
_FLOAT_KEYS = {"aux_fraction", "step_size", "grad_tol", "signal_variance",
               "noise_variance"}
_TUPLE_INT_KEYS = {"m_grid", "seeds"}
_TUPLE_FLOAT_KEYS = {"lengthscales"}
_STR_KEYS = {"dataset", "csv_path", "target_column", "aux_kind", "algorithm", "out_dir"}


def parse_config(path) -> ExperimentConfig:
    """Parse a flat ``key = value`` config file (``#`` starts a comment)."""
    values: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        try:
            if key == "methods":
                values[key] = tuple(v.strip() for v in val.split(",") if v.strip())
            elif key in _TUPLE_INT_KEYS:
                values[key] = tuple(int(v) for v in val.split(",") if v.strip())
            elif key in _TUPLE_FLOAT_KEYS:
                values[key] = tuple(float(v) for v in val.split(",") if v.strip())
            elif key in _BOOL_KEYS:
                if val.lower() not in ("true", "false", "0", "1", "yes", "no"):
                    raise ValueError(val)
                values[key] = val.lower() in ("true", "1", "yes")
            elif key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            elif key in _STR_KEYS:
                values[key] = val
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from None
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class MetricRecord:
    mean_rmse: float
    std_rmse: float
    pred_rmse: float
    kl_to_exact: float


def _rms(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(v))))


def compute_metrics(approx: GaussianPosterior, exact: GaussianPosterior,
                    y_test: np.ndarray, kl_points: int = 200,
                    seed: int = 0) -> MetricRecord:
    """Score an approximate posterior against the exact one.

    KL is evaluated on the joint Gaussian over a deterministic random
    subset of at most ``kl_points`` test locations; both covariances get
    the same tiny ridge (1e-8 of the exact average variance) since rank-
    deficient approximations (SoR at more points than inducing inputs)
    have genuinely infinite KL.
    """
    y_test = np.asarray(y_test, dtype=float).ravel()
    if approx.mean.size != exact.mean.size or approx.mean.size != y_test.size:
        raise ValueError("posterior and target sizes differ")
    mean_rmse = _rms(approx.mean - exact.mean)
    std_rmse = _rms(approx.std - exact.std)
    pred_rmse = _rms(approx.mean - y_test)

    n = y_test.size
    k = min(kl_points, n)
    idx = np.sort(np.random.default_rng(seed).choice(n, size=k, replace=False))
    ridge = 1e-8 * max(float(np.trace(exact.cov[np.ix_(idx, idx)])) / k, 1e-300)
    eye = ridge * np.eye(k)
    a = GaussianNd(approx.mean[idx], approx.cov[np.ix_(idx, idx)] + eye)
    e = GaussianNd(exact.mean[idx], exact.cov[np.ix_(idx, idx)] + eye)
    kl = kl_gaussian(a, e)
    return MetricRecord(mean_rmse, std_rmse, pred_rmse, float(max(kl, 0.0)))


@dataclass
class ResultRow:
    dataset: str
    method: str
    M: int
    seed: int
    mean_rmse: float = math.nan
    std_rmse: float = math.nan
    pred_rmse: float = math.nan
    kl_to_exact: float = math.nan
    objective_final: float | None = None
    eps_bound: float | None = None
    wall_time_seconds: float = 0.0
    status: str = "ok"

    def csv_values(self) -> list:
        def fmt(v):
            if v is None or (isinstance(v, float) and math.isnan(v)):
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)
        return [fmt(getattr(self, c)) for c in RESULT_COLUMNS]


def write_results_csv(rows, path) -> None:
    rows = sorted(rows, key=lambda r: (r.dataset, r.method, r.M, r.seed))
    lines = [",".join(RESULT_COLUMNS)]
    lines += [",".join(r.csv_values()) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.dataset == "synthetic" and config.csv_path is None:
        return generate_synthetic(config.n_total, config.data_seed)
    if config.csv_path is None:
        raise ConfigError(f"dataset {config.dataset!r} needs csv_path")
    spec = DatasetSpec(name=config.dataset, source=config.csv_path,
                       target=config.target_column)
    return load_csv(spec, config.data_seed)


def resolve_params(config: ExperimentConfig, ds: Dataset) -> KernelParams:
    if config.lengthscales is not None and config.signal_variance is not None \
            and config.noise_variance is not None:
        return KernelParams(np.asarray(config.lengthscales, dtype=float),
                            config.signal_variance, config.noise_variance)
    if config.pilot_enabled:
        m_pilot = min(config.pilot_m, ds.n_train)
        return fit_hyperparams_pilot(ds.X_train, ds.y_train, m_pilot,
                                     seed=config.data_seed,
                                     max_evals=config.pilot_max_evals)
    ls = np.maximum(np.std(ds.X_train, axis=0), 1e-3)
    var_y = max(float(np.var(ds.y_train)), 1e-12)
    return KernelParams(ls, var_y, 0.1 * var_y)


def _make_aux(config, ds, params, seed):
    size = config.aux_size or aux_subset_size(ds, config.aux_fraction)
    size = min(size, ds.n_train)
    idx = draw_aux_subset(ds, config.aux_fraction, seed, size=size)
    builder = build_aux_sor if config.aux_kind == "sor" else build_aux_subset
    cap = ds.n_train if config.validation_mode else config.validation_cap
    return idx, builder(ds.X_train, ds.y_train, idx, params, validation_cap=cap)


def make_pf_fun_grad(X, y, aux, params):
    """closure (X_tilde) -> (relative objective, gradient); degenerate geometry
    is reported as a non-finite objective so the restart aborts cleanly."""
    def fun_grad(Z):
        try:
            cache = build_nystrom(X, Z, params)
            return pf_dtc_value_and_gradient(cache, y, aux, params)
        except JitterCapExceededError as exc:
            raise NonFiniteObjectiveError(str(exc)) from exc
    return fun_grad


def make_vfe_fun_grad(X, y, params):
    """closure (X_tilde) -> (negative ELBO, gradient of negative ELBO)."""
    def fun_grad(Z):
        try:
            cache = build_nystrom(X, Z, params)
            value = -vfe_elbo(X, y, Z, params, cache=cache)
            grad = -vfe_elbo_gradient(X, y, Z, params, cache=cache)
            return value, grad
        except JitterCapExceededError as exc:
            raise NonFiniteObjectiveError(str(exc)) from exc
    return fun_grad


def _run_cell(config: ExperimentConfig, ds: Dataset, params: KernelParams,
              exact_post: GaussianPosterior, method: str, m: int, seed: int,
              out_dir: Path | None):
    row = ResultRow(ds.name, method, m, seed)
    start = time.perf_counter()
    extra: dict = {}
    try:
        aux_idx, aux = (None, None)
        if method == "pf-dtc":
            aux_idx, aux = _make_aux(config, ds, params, seed)
            fun = make_pf_fun_grad(ds.X_train, ds.y_train, aux, params)
            trace = optimize_inducing(fun, ds.X_train, m, config.optimizer_config(seed))
            inducing = trace.final_points
            cache = build_nystrom(ds.X_train, inducing, params)
            approx = dtc_predict(cache, ds.X_train, ds.y_train, ds.X_test, params)
            row.objective_final = trace.final_objective
            if out_dir is not None:
                trace_to_csv(trace, out_dir / f"trace_{ds.name}_{method}_M{m}_seed{seed}.csv")
            if config.compute_eps:
                sub_aux = build_aux_subset(ds.X_train, ds.y_train, aux_idx, params,
                                           validation_cap=max(config.validation_cap,
                                                              ds.n_train))
                full = pf_dtc_objective_full(ds.X_train, ds.y_train, inducing,
                                             sub_aux, params,
                                             validation_cap=max(config.validation_cap,
                                                                ds.n_train))
                pf_val = pf_divergence_value(full, params)
                row.eps_bound = eps_bound(ds.X_train, ds.y_train, sub_aux, params, pf_val)
                extra["eps_kind"] = ("subset" if config.aux_kind == "subset"
                                     else "subset-companion")
        elif method == "vfe":
            fun = make_vfe_fun_grad(ds.X_train, ds.y_train, params)
            trace = optimize_inducing(fun, ds.X_train, m, config.optimizer_config(seed))
            cache = build_nystrom(ds.X_train, trace.final_points, params)
            approx = dtc_predict(cache, ds.X_train, ds.y_train, ds.X_test, params)
            row.objective_final = trace.final_objective
            if out_dir is not None:
                trace_to_csv(trace, out_dir / f"trace_{ds.name}_{method}_M{m}_seed{seed}.csv")
        elif method == "sor":
            rng = np.random.default_rng(np.random.SeedSequence([seed, m]))
            inducing = ds.X_train[rng.choice(ds.n_train, size=m, replace=False)]
            cache = build_nystrom(ds.X_train, inducing, params)
            approx = sor_predict(cache, ds.X_train, ds.y_train, ds.X_test, params)
        elif method == "subsample":
            rng = np.random.default_rng(np.random.SeedSequence([seed, m]))
            idx = rng.choice(ds.n_train, size=min(m, ds.n_train), replace=False)
            approx = subsample_predict(ds.X_train, ds.y_train, idx, ds.X_test, params)
        else:  # pragma: no cover - guarded by config validation
            raise ConfigError(f"unknown method {method!r}")

        metrics = compute_metrics(approx, exact_post, ds.y_test,
                                  kl_points=config.kl_points, seed=seed)
        row.mean_rmse = metrics.mean_rmse
        row.std_rmse = metrics.std_rmse
        row.pred_rmse = metrics.pred_rmse
        row.kl_to_exact = metrics.kl_to_exact
    except (PfgpError, ValueError, IndexError, FloatingPointError) as exc:
        row.status = f"error:{type(exc).__name__}"
        extra["error_message"] = str(exc)
    row.wall_time_seconds = max(time.perf_counter() - start, 1e-9)
    return row, extra


@dataclass
class ExperimentResult:
    rows: list
    results_csv: Path | None
    any_failed: bool


def run_experiment(config: ExperimentConfig, write_outputs: bool = True) -> ExperimentResult:
    """Run the full sweep: pilot fit once, exact posterior once, then cells.

    Per-cell failures are recorded in the row's status and do not stop the
    sweep. Artifacts: results.csv, run.json, per-cell optimizer traces and
    (optionally) SVG charts in ``out_dir``.
    """
    ds = load_dataset(config)
    params = resolve_params(config, ds)
    exact_post = predict_exact(fit_exact(ds.X_train, ds.y_train, params), ds.X_test)

    out_dir = None
    if write_outputs:
        out_dir = Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    cells = [(method, m, seed) for method in config.methods
             for m in config.m_grid for seed in config.seeds]

    def work(cell):
        method, m, seed = cell
        return _run_cell(config, ds, params, exact_post, method, m, seed, out_dir)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(work, cells))
    else:
        outcomes = [work(cell) for cell in cells]

    rows = [row for row, _ in outcomes]
    any_failed = any(r.status != "ok" for r in rows)

    results_csv = None
    if write_outputs:
        results_csv = out_dir / "results.csv"
        write_results_csv(rows, results_csv)
        run_record = {
            "config": asdict(config),
            "kernel_params": {
                "lengthscales": params.lengthscales.tolist(),
                "signal_variance": params.signal_variance,
                "noise_variance": params.noise_variance,
            },
            "dataset": {"name": ds.name, "n_train": ds.n_train,
                        "n_test": ds.n_test, "dim": ds.dim},
            "cells": [dict(zip(RESULT_COLUMNS, r.csv_values()), **extra)
                      for r, extra in sorted(
                          outcomes, key=lambda o: (o[0].method, o[0].M, o[0].seed))],
        }
        (out_dir / "run.json").write_text(json.dumps(run_record, indent=2),
                                          encoding="utf-8")
        if config.emit_svg:
            from .report import emit_report
            emit_report(rows, out_dir)
    return ExperimentResult(rows, results_csv, any_failed)


@dataclass(frozen=True)
class BenchPoint:
    n: int
    seconds: float


def bench_scaling(n_grid=(1000, 2000, 4000, 8000), m: int = 20, aux_size: int = 100,
                  repeats: int = 3, seed: int = 0):
    """Time one objective+gradient evaluation per N and fit a log-log slope.

    The auxiliary subset size is held fixed across the grid: the linear-in-N
    claim is conditional on O(N M') auxiliary matvecs, and growing the
    subset with N would measure the auxiliary instead of the objective.
    """
    rng = np.random.default_rng(seed)
    params = KernelParams(np.array([0.7, 0.7]), 1.0, 0.1)
    points = []
    for n in n_grid:
        X = rng.uniform(-3, 3, size=(n, 2))
        y = np.sin(X[:, 0]) + 0.5 * np.cos(2 * X[:, 1]) + 0.1 * rng.standard_normal(n)
        idx = rng.choice(n, size=min(aux_size, n), replace=False)
        aux = build_aux_sor(X, y, idx, params)
        Z = X[rng.choice(n, size=m, replace=False)]
        fun = make_pf_fun_grad(X, y, aux, params)
        fun(Z)  # warm up caches / BLAS
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            fun(Z)
            times.append(time.perf_counter() - start)
        points.append(BenchPoint(n, float(np.median(times))))
    ns = np.log([p.n for p in points])
    ts = np.log([max(p.seconds, 1e-9) for p in points])
    slope = float(np.polyfit(ns, ts, 1)[0])
    return points, slope
