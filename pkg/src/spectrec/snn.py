"""Smoothed nuclear-norm reconstruction (S2N).

Solves::

    min_X  1/2 ||Y_I - X_I||_F^2 + lam/2 ||X D||_F^2 + mu ||X||_*

with FISTA. The quadratic terms form the smooth part (Lipschitz bound
``1 + 8 lam``), the nuclear norm is handled by singular-value
soft-thresholding. :func:`snn_tune` picks ``(lam, mu)`` by matching the
data-fit residual to a noise-variance estimate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .core import (
    GradientOperator,
    SamplingMask,
    SpectrumImage,
    apply_gradient,
    apply_laplacian,
)
from .errors import DataError, IncompatibleMaskError, NumericalError
from .fista import FistaConfig, FistaProblem, SolveReport, fista_solve

__all__ = [
    "SnnParams",
    "TuningState",
    "nuclear_norm",
    "nuclear_prox",
    "SnnObjective",
    "snn_initial_guess",
    "snn_reconstruct",
    "snn_tune",
    "tuning_grid",
]

logger = logging.getLogger(__name__)

LAPLACIAN_NORM_BOUND = 8.0


@dataclass(frozen=True)
class SnnParams:
    lam: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        for name in ("lam", "mu"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)


def nuclear_norm(matrix) -> float:
    return float(np.linalg.svd(np.asarray(matrix, float), compute_uv=False).sum())


def nuclear_prox(matrix, threshold: float, method: str = "svd") -> np.ndarray:
    """Soft-threshold the singular values of ``matrix`` by ``threshold``.

    Parameters
    ----------
    matrix : array_like, 2-D
    threshold : float
        Non-negative shrinkage applied to every singular value.
    method : {"svd", "gram"}
        ``"svd"`` uses a LAPACK SVD. ``"gram"`` diagonalizes the smaller of
        ``Z Z^T`` / ``Z^T Z`` and applies the equivalent spectral function
        ``max(1 - t / s, 0)``; it is exact in exact arithmetic and several
        times faster for wide matrices.
    """
    z = np.asarray(matrix, dtype=np.float64)
    if z.ndim != 2:
        raise DataError("nuclear_prox expects a 2-D matrix")
    if not np.all(np.isfinite(z)):
        raise NumericalError("nuclear_prox received non-finite input")
    t = float(threshold)
    if t < 0:
        raise ValueError("threshold must be >= 0")
    if t == 0:
        return z.copy()
    if method == "svd":
        u, s, vt = np.linalg.svd(z, full_matrices=False)
        s = np.maximum(s - t, 0.0)
        keep = s > 0
        return (u[:, keep] * s[keep]) @ vt[keep]
    if method == "gram":
        wide = z.shape[0] <= z.shape[1]
        a = z if wide else z.T
        # only eigenpairs with singular value above t survive the shrinkage
        evals, evecs = scipy.linalg.eigh(a @ a.T, subset_by_value=(t * t, np.inf),
                                         check_finite=False)
        if evals.size == 0:
            return np.zeros_like(z)
        s = np.sqrt(evals)
        scale = 1.0 - t / s
        out = (evecs * scale) @ (evecs.T @ a)
        return out if wide else out.T
    raise ValueError(f"unknown method {method!r}")


class SnnObjective:
    """Smooth part of the S2N criterion for fixed data and weights.

    ``value`` and ``gradient`` take ``(bands, n_pixels)`` matrices. The
    ``*_pixel_major`` variants take the transpose, which is the layout the
    solver iterates on.
    """

    def __init__(self, measurements, mask: SamplingMask, height: int, width: int,
                 lam: float):
        self.measurements = np.ascontiguousarray(measurements, dtype=np.float64)
        self.mask = mask
        self.op = GradientOperator(height, width)
        self.lam = float(lam)
        self._y_t = np.ascontiguousarray(self.measurements.T)

    @property
    def lipschitz_bound(self) -> float:
        return 1.0 + LAPLACIAN_NORM_BOUND * self.lam

    def value(self, x) -> float:
        return self.value_pixel_major(np.asarray(x, dtype=np.float64).T)

    def gradient(self, x) -> np.ndarray:
        return self.gradient_pixel_major(np.asarray(x, dtype=np.float64).T).T

    def value_pixel_major(self, xt) -> float:
        r = xt[self.mask.indices] - self._y_t
        val = 0.5 * float(np.vdot(r, r))
        if self.lam:
            g = self.op.sparse_gradient.T @ xt
            val += 0.5 * self.lam * float(np.vdot(g, g))
        return val

    def gradient_pixel_major(self, xt) -> np.ndarray:
        idx = self.mask.indices
        if self.lam:
            grad = self.op.sparse_laplacian @ xt
            grad *= -self.lam
        else:
            grad = np.zeros_like(xt)
        grad[idx] += xt[idx] - self._y_t
        return grad


def _check_inputs(measurements, mask: SamplingMask, shape):
    y = np.ascontiguousarray(measurements, dtype=np.float64)
    if y.ndim != 2:
        raise DataError("measurements must be a (bands, ns) matrix")
    nb, h, w = (int(v) for v in shape)
    if y.shape[0] != nb:
        raise DataError(f"measurements have {y.shape[0]} bands, shape says {nb}")
    if mask.n_pixels != h * w:
        raise IncompatibleMaskError(
            f"mask covers {mask.n_pixels} pixels, image has {h}*{w}"
        )
    if y.shape[1] != mask.ns:
        raise IncompatibleMaskError(
            f"measurements have {y.shape[1]} columns, mask has {mask.ns} indices"
        )
    if not np.all(np.isfinite(y)):
        raise DataError("measurements contain non-finite values")
    return y, nb, h, w


def snn_initial_guess(measurements, mask: SamplingMask) -> np.ndarray:
    """Measured columns copied, unmeasured ones set to the mean measured spectrum."""
    y = np.ascontiguousarray(measurements, dtype=np.float64)
    x0 = np.repeat(y.mean(axis=1, keepdims=True), mask.n_pixels, axis=1)
    x0[:, mask.indices] = y
    return x0


def snn_reconstruct(measurements, mask: SamplingMask, shape, params: SnnParams,
                    config: FistaConfig | None = None, x0=None,
                    svd_method: str = "gram"):
    """Reconstruct the full image from measured columns.

    Parameters
    ----------
    measurements : ndarray of shape (bands, ns)
    mask : SamplingMask
    shape : tuple (bands, height, width)
    params : SnnParams
    config : FistaConfig, optional
    x0 : ndarray of shape (bands, height * width), optional
        Warm start; defaults to :func:`snn_initial_guess`.
    svd_method : {"gram", "svd"}
        Passed to :func:`nuclear_prox`.

    Returns
    -------
    image : SpectrumImage
    report : SolveReport
    """
    y, nb, h, w = _check_inputs(measurements, mask, shape)
    smooth = SnnObjective(y, mask, h, w, params.lam)
    mu = params.mu

    def prox(z, step):
        if mu == 0:
            return z
        return nuclear_prox(z, mu * step, method=svd_method)

    def objective(xt):
        val = smooth.value_pixel_major(xt)
        if mu:
            val += mu * nuclear_norm(xt)
        return val

    # iterate on the transpose: pixel-major rows make the sparse stencil cheap
    problem = FistaProblem(smooth.gradient_pixel_major, prox, smooth.lipschitz_bound,
                           objective)
    start = snn_initial_guess(y, mask) if x0 is None else np.asarray(x0, float)
    if start.shape != (nb, h * w):
        raise DataError(f"x0 must have shape {(nb, h * w)}, got {start.shape}")
    xt, report = fista_solve(problem, np.ascontiguousarray(start.T), config)
    return SpectrumImage(np.ascontiguousarray(xt.T), h, w), report


# -- hyperparameter tuning -------------------------------------------------

GRID_LOW = 1e-6
GRID_HIGH = 1e4
GRID_PER_DECADE = 7
BISECTION_STEPS = 20
INNER_MAX_ITERS = 200


def tuning_grid() -> np.ndarray:
    lo = round(math.log10(GRID_LOW) * GRID_PER_DECADE)
    hi = round(math.log10(GRID_HIGH) * GRID_PER_DECADE)
    return 10.0 ** (np.arange(lo, hi + 1) / GRID_PER_DECADE)


@dataclass
class TuningState:
    """Outcome of :func:`snn_tune`.

    ``traces`` maps each search name (``"lambda"``, ``"mu"``, ``"c"``) to the
    list of ``(value, signed_residual, J)`` evaluations in the order they
    were made. ``warnings`` lists searches that found no sign change and
    fell back to the grid argmin. ``final_image`` and ``final_report`` hold
    the full-precision solve at ``(lambda_star, mu_star)`` that
    ``final_residual`` is measured on; they are not serialized.
    """

    lambda_circ: float = 0.0
    mu_circ: float = 0.0
    c_circ: float = 0.0
    lambda_star: float = 0.0
    mu_star: float = 0.0
    sigma2_hat: float = 0.0
    final_residual: float = float("nan")
    traces: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    n_solves: int = 0
    final_image: SpectrumImage | None = field(default=None, repr=False)
    final_report: SolveReport | None = field(default=None, repr=False)

    @property
    def residual_ratio(self) -> float:
        """Final data-fit residual over the noise-variance estimate."""
        return self.final_residual / self.sigma2_hat

    def to_dict(self) -> dict:
        return {
            "lambda_circ": self.lambda_circ,
            "mu_circ": self.mu_circ,
            "c_circ": self.c_circ,
            "lambda_star": self.lambda_star,
            "mu_star": self.mu_star,
            "sigma2_hat": self.sigma2_hat,
            "final_residual": self.final_residual,
            "residual_ratio": self.residual_ratio,
            "warnings": list(self.warnings),
            "n_solves": self.n_solves,
            "traces": {k: [list(map(float, row)) for row in v]
                       for k, v in self.traces.items()},
        }


class _ResidualProbe:
    """Evaluates the signed residual ``(1/(Ns Nb)) ||Y_I - X_I||^2 - sigma2``.

    Each solve is warm-started from the previous solution.
    """

    def __init__(self, y, mask, shape, sigma2, config, svd_method):
        self.y = y
        self.mask = mask
        self.shape = shape
        self.sigma2 = sigma2
        # objective monitoring costs an SVD per sample; keep only the endpoints
        self.config = replace(config, monitor_every=config.max_iters)
        self.svd_method = svd_method
        self.warm = None
        self.n_solves = 0

    def __call__(self, lam, mu) -> float:
        img, _ = snn_reconstruct(self.y, self.mask, self.shape, SnnParams(lam, mu),
                                 self.config, x0=self.warm,
                                 svd_method=self.svd_method)
        self.warm = img.data
        self.n_solves += 1
        r = img.data[:, self.mask.indices] - self.y
        return float(np.vdot(r, r)) / self.y.size - self.sigma2


def _search_1d(residual_at, grid, trace):
    """Bracket a sign change of ``residual_at`` on ``grid`` then bisect.

    The bracket is located by galloping over grid indices (1, 2, 4, ...
    steps) followed by a binary search down to adjacent grid points. Returns
    ``(value, found_sign_change)``.
    """
    cache = {}

    def at_index(i):
        if i not in cache:
            v = float(grid[i])
            r = residual_at(v)
            cache[i] = r
            trace.append((v, r, r * r))
        return cache[i]

    n = len(grid)
    s0 = np.sign(at_index(0))
    if s0 == 0:
        return float(grid[0]), True

    lo, hi, stride = 0, None, 1
    while True:
        j = min(lo + stride, n - 1)
        if np.sign(at_index(j)) != s0:
            hi = j
            break
        if j == n - 1:
            break
        lo = j
        stride *= 2

    if hi is None:
        # no sign change: fall back to argmin of J over the whole grid
        for i in range(n):
            at_index(i)
        best = min(cache, key=lambda i: (cache[i] ** 2, i))
        return float(grid[best]), False

    while hi - lo > 1:
        mid = (lo + hi) // 2
        if np.sign(at_index(mid)) == s0:
            lo = mid
        else:
            hi = mid

    a, b = math.log(grid[lo]), math.log(grid[hi])
    ra = cache[lo]
    best_v, best_j = float(grid[lo]), ra * ra
    if cache[hi] ** 2 < best_j:
        best_v, best_j = float(grid[hi]), cache[hi] ** 2
    for _ in range(BISECTION_STEPS):
        m = 0.5 * (a + b)
        v = math.exp(m)
        r = residual_at(v)
        trace.append((v, r, r * r))
        if r * r < best_j:
            best_v, best_j = v, r * r
        if r == 0:
            break
        if np.sign(r) == np.sign(ra):
            a, ra = m, r
        else:
            b = m
    return best_v, True


def snn_tune(measurements, mask: SamplingMask, shape, sigma2_hat: float,
             config: FistaConfig | None = None, svd_method: str = "gram",
             inner_max_iters: int = INNER_MAX_ITERS):
    """Choose ``(lam, mu)`` so the data-fit residual matches ``sigma2_hat``.

    Three successive 1-D searches: ``lam`` alone (``mu = 0``), ``mu`` alone
    (``lam = 0``), then a common scale ``c`` applied to both.

    Search evaluations are warm-started solves capped at ``inner_max_iters``
    iterations (the residual lives on measured pixels, which settle much
    faster than the interpolated ones). The selected pair is then solved
    once more with the full ``config``.

    Returns
    -------
    params : SnnParams
        ``(c * lam_circ, c * mu_circ)``.
    state : TuningState
    """
    y, nb, h, w = _check_inputs(measurements, mask, shape)
    sigma2 = float(sigma2_hat)
    if not math.isfinite(sigma2) or sigma2 <= 0:
        raise ValueError("sigma2_hat must be finite and > 0")
    grid = tuning_grid()
    state = TuningState(sigma2_hat=sigma2)
    config = config or FistaConfig()
    inner = replace(config, max_iters=max(1, min(config.max_iters, int(inner_max_iters))))
    probe = _ResidualProbe(y, mask, (nb, h, w), sigma2, inner, svd_method)

    found = {}
    for name in ("lambda", "mu", "c"):
        trace = []
        probe.warm = None
        if name == "lambda":
            fn = lambda v: probe(v, 0.0)  # noqa: E731
        elif name == "mu":
            fn = lambda v: probe(0.0, v)  # noqa: E731
        else:
            lc, mc = found["lambda"], found["mu"]
            fn = lambda v: probe(v * lc, v * mc)  # noqa: E731
        value, ok = _search_1d(fn, grid, trace)
        state.traces[name] = trace
        if not ok:
            state.warnings.append(f"{name}: no sign change over the grid, using argmin of J")
            logger.warning("snn_tune: no sign change in %s search", name)
        found[name] = value

    state.lambda_circ = found["lambda"]
    state.mu_circ = found["mu"]
    state.c_circ = found["c"]
    state.lambda_star = state.c_circ * state.lambda_circ
    state.mu_star = state.c_circ * state.mu_circ
    params = SnnParams(state.lambda_star, state.mu_star)
    img, report = snn_reconstruct(y, mask, (nb, h, w), params, config, x0=probe.warm,
                                  svd_method=svd_method)
    r = img.data[:, mask.indices] - y
    state.final_residual = float(np.vdot(r, r)) / y.size
    state.final_image, state.final_report = img, report
    state.n_solves = probe.n_solves + 1
    return params, state
