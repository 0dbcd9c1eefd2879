import math

import numpy as np
import pytest

from spectrec.errors import NumericalError
from spectrec.fista import FistaConfig, FistaProblem, fista_solve, theta_sequence


def quadratic(rng, n=8, cond=10.0):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    a = q @ np.diag(np.linspace(1.0, cond, n)) @ q.T
    b = rng.normal(size=n)
    return a, b


def test_theta_sequence():
    th = theta_sequence(4)
    assert th[0] == 1.0
    assert abs(th[1] - (1 + math.sqrt(5)) / 2) < 1e-12
    assert np.all(np.diff(th) > 0)


def test_quadratic_reaches_optimum(rng):
    a, b = quadratic(rng)
    xstar = np.linalg.solve(a, b)

    def obj(x):
        return 0.5 * x @ a @ x - b @ x

    prob = FistaProblem(lambda x: a @ x - b, lambda z, s: z,
                        np.linalg.eigvalsh(a).max(), obj)
    x, rep = fista_solve(prob, np.zeros_like(b), FistaConfig(max_iters=500, tol=1e-14))
    assert rep.iterations <= 500
    assert obj(x) - obj(xstar) <= 1e-8


def lasso_cd(a, b, t, sweeps=5000):
    """Coordinate descent for 1/2||Ax - b||^2 + t||x||_1."""
    x = np.zeros(a.shape[1])
    col2 = (a**2).sum(axis=0)
    for _ in range(sweeps):
        for j in range(a.shape[1]):
            r = b - a @ x + a[:, j] * x[j]
            rho = a[:, j] @ r
            x[j] = np.sign(rho) * max(abs(rho) - t, 0.0) / col2[j]
    return x


def test_lasso_matches_coordinate_descent(rng):
    a = rng.normal(size=(20, 6))
    b = rng.normal(size=20)
    t = 2.0
    soft = lambda z, s: np.sign(z) * np.maximum(np.abs(z) - t * s, 0.0)  # noqa: E731
    prob = FistaProblem(lambda x: a.T @ (a @ x - b), soft, np.linalg.norm(a, 2) ** 2)
    x, _ = fista_solve(prob, np.zeros(6), FistaConfig(max_iters=5000, tol=1e-13))
    np.testing.assert_allclose(x, lasso_cd(a, b, t, sweeps=400), atol=1e-7)


def test_iterates_follow_recurrence(rng):
    """Replay the textbook recurrence by hand and compare every step."""
    a, b = quadratic(rng, n=4)
    L = 12.0
    prox = lambda z, s: np.clip(z, -0.3, 0.3)  # noqa: E731
    grad = lambda x: a @ x - b  # noqa: E731
    for n in range(1, 6):
        x_ref = x_prev = y = np.ones(4)
        th = 1.0
        for _ in range(n):
            x_ref = prox(y - grad(y) / L, 1 / L)
            th_next = (1 + math.sqrt(1 + 4 * th * th)) / 2
            y = x_ref + (th - 1) / th_next * (x_ref - x_prev)
            x_prev, th = x_ref, th_next
        x, rep = fista_solve(FistaProblem(grad, prox, L), np.ones(4),
                             FistaConfig(max_iters=n, tol=0.0))
        assert rep.iterations == n and rep.stop_reason == "max_iters"
        np.testing.assert_allclose(x, x_ref, rtol=1e-14, atol=1e-15)


def test_report_trace_and_stop(rng):
    a, b = quadratic(rng, n=3)
    obj = lambda x: 0.5 * x @ a @ x - b @ x  # noqa: E731
    x0 = np.full(3, 2.0)
    prob = FistaProblem(lambda x: a @ x - b, lambda z, s: z, 10.0, obj)
    _, rep = fista_solve(prob, x0, FistaConfig(max_iters=1000, tol=1e-6, monitor_every=7))
    assert rep.stop_reason == "tolerance"
    assert rep.final_relative_change < 1e-6
    assert rep.objective_trace[0] == obj(x0) and rep.objective_iters[0] == 0
    assert rep.objective_iters[-1] == rep.iterations
    assert all(i % 7 == 0 for i in rep.objective_iters[1:-1])
    d = rep.to_dict()
    assert d["iterations"] == rep.iterations and len(d["objective_trace"]) == len(d["objective_iters"])


def test_nonfinite_raises():
    prob = FistaProblem(lambda x: x * np.inf, lambda z, s: z, 1.0)
    with pytest.raises(NumericalError, match="iteration 1"):
        fista_solve(prob, np.ones(2))
    with pytest.raises(NumericalError):
        fista_solve(FistaProblem(lambda x: x, lambda z, s: z, 1.0), np.array([np.nan]))


@pytest.mark.parametrize("L", [0.0, -1.0, np.inf, np.nan])
def test_bad_lipschitz(L):
    with pytest.raises(ValueError):
        FistaProblem(lambda x: x, lambda z, s: z, L)


@pytest.mark.parametrize("kw", [{"max_iters": 0}, {"tol": -1.0}, {"monitor_every": 0}])
def test_bad_config(kw):
    with pytest.raises(ValueError):
        FistaConfig(**kw)
