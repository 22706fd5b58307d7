"""Multi-restart first-order minimization over inducing-point locations.

The objective callable returns (value, gradient) and must be pure; each
restart starts from a distinct seeded random subset of the training inputs
(random boxes would leave k_II badly conditioned). Adam is the default;
backtracking gradient descent is kept for its monotone-trace guarantee.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AllRestartsFailedError, NonFiniteObjectiveError

__all__ = ["OptimizerConfig", "RestartTrace", "OptTrace", "optimize_inducing",
           "finite_diff_gradient", "trace_to_csv"]


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "adam"          # "adam" | "gd-backtracking"
    step_size: float = 1e-2
    max_iters: int = 500
    grad_tol: float = 1e-8
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ("adam", "gd-backtracking"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.step_size <= 0 or self.max_iters < 1 or self.restarts < 1:
            raise ValueError("step_size > 0, max_iters >= 1, restarts >= 1 required")


@dataclass(frozen=True)
class RestartTrace:
    objectives: np.ndarray           # recorded objective per iteration (incl. start)
    final_points: np.ndarray | None  # None when the restart aborted
    failed: bool = False


@dataclass(frozen=True)
class OptTrace:
    restarts: list[RestartTrace]
    best_restart: int
    final_points: np.ndarray
    iterations_used: int

    @property
    def objectives(self) -> np.ndarray:
        """Objective history of the winning restart."""
        return self.restarts[self.best_restart].objectives

    @property
    def final_objective(self) -> float:
        return float(self.objectives[-1])


def _adam(fun_grad, x0, cfg: OptimizerConfig):
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    x = x0.copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    value, grad = fun_grad(x)
    history = [value]
    best_x, best_value = x.copy(), value
    iters = 0
    for t in range(1, cfg.max_iters + 1):
        if not np.all(np.isfinite(grad)):
            raise NonFiniteObjectiveError("gradient is non-finite")
        if np.max(np.abs(grad)) < cfg.grad_tol:
            break
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        x = x - cfg.step_size * m_hat / (np.sqrt(v_hat) + eps)
        value, grad = fun_grad(x)
        if not np.isfinite(value):
            raise NonFiniteObjectiveError("objective is non-finite")
        history.append(value)
        iters = t
        if value < best_value:
            best_x, best_value = x.copy(), value
    # Adam is not monotone; return the best iterate (re-recorded as the
    # trace's final entry) so the final value never exceeds the initial one.
    history.append(best_value)
    return np.asarray(history), best_x, iters


def _gd_backtracking(fun_grad, x0, cfg: OptimizerConfig):
    x = x0.copy()
    value, grad = fun_grad(x)
    history = [value]
    shrink, armijo = 0.5, 1e-4
    iters = 0
    for _ in range(cfg.max_iters):
        if not np.all(np.isfinite(grad)):
            raise NonFiniteObjectiveError("gradient is non-finite")
        gnorm2 = float(np.sum(grad * grad))
        if np.sqrt(gnorm2) < cfg.grad_tol:
            break
        step = cfg.step_size
        accepted = False
        for _ in range(40):
            cand = x - step * grad
            cand_value, cand_grad = fun_grad(cand)
            if np.isfinite(cand_value) and cand_value <= value - armijo * step * gnorm2:
                x, value, grad = cand, cand_value, cand_grad
                history.append(value)
                accepted = True
                iters += 1
                break
            step *= shrink
        if not accepted:
            break
    return np.asarray(history), x, iters


def optimize_inducing(fun_grad, init_pool: np.ndarray, m: int,
                      config: OptimizerConfig) -> OptTrace:
    """Minimize over M x d inducing locations with seeded multi-restart.

    Each restart draws a distinct random size-M subset of ``init_pool``,
    runs the configured algorithm, and the best final objective wins.
    Restarts hitting a non-finite objective are recorded as failed and
    skipped; if all fail, AllRestartsFailedError is raised.
    """
    pool = np.asarray(init_pool, dtype=float)
    if pool.ndim == 1:
        pool = pool[:, None]
    if m > pool.shape[0]:
        raise ValueError(f"M={m} exceeds the init pool size {pool.shape[0]}")
    runner = _adam if config.algorithm == "adam" else _gd_backtracking

    traces: list[RestartTrace] = []
    total_iters = 0
    for r in range(config.restarts):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, r]))
        x0 = pool[rng.choice(pool.shape[0], size=m, replace=False)]
        try:
            history, final, iters = runner(fun_grad, x0, config)
            traces.append(RestartTrace(history, final))
            total_iters += iters
        except NonFiniteObjectiveError:
            traces.append(RestartTrace(np.asarray([np.inf]), None, failed=True))
    finals = [t.objectives[-1] if not t.failed else np.inf for t in traces]
    best = int(np.argmin(finals))
    if traces[best].failed or not np.isfinite(finals[best]):
        raise AllRestartsFailedError("every restart aborted on a non-finite objective")
    return OptTrace(traces, best, traces[best].final_points, total_iters)


def finite_diff_gradient(objective, x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of a scalar objective over an array."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.ravel()[i] += h
        xm.ravel()[i] -= h
        fp = objective(xp)
        fm = objective(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteObjectiveError("objective is non-finite at a probe point")
        flat[i] = (fp - fm) / (2.0 * h)
    return grad


def trace_to_csv(trace: OptTrace, path) -> None:
    """Write (iteration, objective, restart) rows for every restart."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective", "restart"])
        for r, rt in enumerate(trace.restarts):
            for i, val in enumerate(rt.objectives):
                writer.writerow([i, repr(float(val)), r])
