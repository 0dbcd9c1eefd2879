"""FISTA with constant step size.

Minimizes ``f(x) + g(x)`` where ``f`` is convex with Lipschitz gradient and
``g`` is convex with a computable proximal map. The solver knows nothing
about the problem beyond the callbacks in :class:`FistaProblem`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NumericalError

__all__ = ["FistaProblem", "FistaConfig", "SolveReport", "fista_solve", "theta_sequence"]


@dataclass
class FistaProblem:
    """Callbacks defining one composite minimization.

    Attributes
    ----------
    gradient : callable
        ``gradient(x) -> grad f(x)``, same shape as ``x``.
    prox : callable
        ``prox(z, step) -> prox_{step * g}(z)``. FISTA calls it with
        ``step = 1 / lipschitz_bound``.
    lipschitz_bound : float
        Upper bound ``L`` on the Lipschitz constant of ``grad f``.
    objective : callable, optional
        ``objective(x) -> f(x) + g(x)``, only used for monitoring.
    """

    gradient: Callable[[np.ndarray], np.ndarray]
    prox: Callable[[np.ndarray, float], np.ndarray]
    lipschitz_bound: float
    objective: Optional[Callable[[np.ndarray], float]] = None

    def __post_init__(self):
        L = float(self.lipschitz_bound)
        if not math.isfinite(L) or L <= 0:
            raise ValueError(f"lipschitz_bound must be finite and > 0, got {L}")
        self.lipschitz_bound = L


@dataclass
class FistaConfig:
    max_iters: int = 2000
    tol: float = 1e-6
    monitor_every: int = 1

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol >= 0:
            raise ValueError("tol must be >= 0")
        if int(self.monitor_every) < 1:
            raise ValueError("monitor_every must be >= 1")
        self.max_iters = int(self.max_iters)
        self.tol = float(self.tol)
        self.monitor_every = int(self.monitor_every)


@dataclass
class SolveReport:
    """Outcome of one FISTA run.

    ``objective_trace[0]`` is the objective at the starting point; later
    entries are sampled every ``monitor_every`` iterations and always at the
    final iterate. ``objective_iters`` holds the matching iteration numbers.
    """

    iterations: int = 0
    stop_reason: str = "max_iters"
    final_relative_change: float = float("nan")
    objective_trace: list = field(default_factory=list)
    objective_iters: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "final_relative_change": self.final_relative_change,
            "objective_trace": [float(v) for v in self.objective_trace],
            "objective_iters": [int(i) for i in self.objective_iters],
            "wall_time": self.wall_time,
        }


def theta_sequence(n: int) -> np.ndarray:
    """First ``n`` momentum parameters, starting from ``theta_1 = 1``."""
    th = np.empty(n)
    th[0] = 1.0
    for i in range(1, n):
        th[i] = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * th[i - 1] ** 2))
    return th


def _check_finite(arr, what, it):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {what} at iteration {it}")


def fista_solve(problem: FistaProblem, x0, config: FistaConfig | None = None):
    """Run FISTA from ``x0``.

    Returns
    -------
    x : ndarray
        Last iterate (output of the proximal step).
    report : SolveReport
    """
    config = config or FistaConfig()
    t_start = time.perf_counter()
    step = 1.0 / problem.lipschitz_bound
    x_prev = np.array(x0, dtype=np.float64, copy=True)
    _check_finite(x_prev, "initial point", 0)
    y = x_prev
    theta = 1.0
    report = SolveReport()
    track = problem.objective is not None
    if track:
        report.objective_trace.append(float(problem.objective(x_prev)))
        report.objective_iters.append(0)

    eps = np.finfo(np.float64).eps
    x = x_prev
    x_prev_norm = float(np.linalg.norm(x_prev))
    for it in range(1, config.max_iters + 1):
        z = problem.gradient(y) * (-step)
        z += y
        x = problem.prox(z, step)
        if x.shape != x_prev.shape:
            raise ValueError(f"prox changed the iterate shape to {x.shape}")

        theta_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        diff = x - x_prev
        # x_prev is finite, so a non-finite iterate shows up in this norm
        dnorm = float(np.linalg.norm(diff))
        if not math.isfinite(dnorm):
            raise NumericalError(f"non-finite values in the iterate at iteration {it}")
        y = diff
        y *= (theta - 1.0) / theta_next
        y += x
        theta = theta_next

        rel = dnorm / max(x_prev_norm, eps)
        x_prev_norm = float(np.linalg.norm(x))
        report.iterations = it
        report.final_relative_change = rel
        done = rel < config.tol
        if done:
            report.stop_reason = "tolerance"
        if track and (it % config.monitor_every == 0 or done or it == config.max_iters):
            report.objective_trace.append(float(problem.objective(x)))
            report.objective_iters.append(it)
        if done:
            break
        x_prev = x

    report.wall_time = time.perf_counter() - t_start
    return x, report
