"""Smoothed subspace-constrained reconstruction (3S).

The image is written ``X = H S`` with ``H`` the principal directions of the
measured spectra. Only the leading ``R`` coefficient rows are kept. The
problem solved is::

    min_S  1/(2R) ||S D||_F^2 + lam/2 sum_b w_b ||S_b||^2
    s.t.   (1/R) ||H^T y_n - s_n||^2 <= sigma2   for every measured pixel n

Noise variance, ``R`` and the weights ``w_b`` all come from a corrected
eigen-analysis of the uncentered sample covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GradientOperator, SamplingMask, SpectrumImage, apply_gradient, apply_laplacian
from .errors import (
    DataError,
    DegenerateCovarianceError,
    IncompatibleMaskError,
    NoSignalSubspaceError,
    NumericalError,
)
from .fista import FistaConfig, FistaProblem, fista_solve

__all__ = [
    "SubspaceModel",
    "SssParams",
    "stein_correct",
    "isotonic_decreasing",
    "estimate_subspace",
    "project_balls",
    "SssObjective",
    "sss_reconstruct",
    "constraint_excess",
    "stein_denominators",
    "stein_isotonize",
    "split_noise",
    "noise_edge_ratio",
]

MERGE_RTOL = 1e-12


@dataclass(eq=False)
class SubspaceModel:
    """Principal basis with corrected eigenvalues and derived 3S weights.

    Attributes
    ----------
    basis : ndarray (n_bands, n_bands)
        Orthonormal eigenvectors, columns sorted by decreasing eigenvalue.
    raw_eigs : ndarray (n_bands,)
        Sample covariance eigenvalues, descending.
    corrected_eigs : ndarray (n_bands,)
        Stein-corrected then isotonic-pooled eigenvalues, non-increasing.
    sigma2_hat : float
        Noise variance estimate (smallest corrected eigenvalue).
    dim : int
        Signal subspace dimension ``R``.
    weights : ndarray (dim,)
        ``sigma2 / (d_b - sigma2)`` for the retained directions.
    """

    basis: np.ndarray
    raw_eigs: np.ndarray
    corrected_eigs: np.ndarray
    sigma2_hat: float
    dim: int
    weights: np.ndarray

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=np.float64)
        self.raw_eigs = np.asarray(self.raw_eigs, dtype=np.float64)
        self.corrected_eigs = np.asarray(self.corrected_eigs, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.sigma2_hat = float(self.sigma2_hat)
        self.dim = int(self.dim)
        nb = self.basis.shape[0]
        if self.basis.shape != (nb, nb):
            raise DataError("basis must be square")
        if not 1 <= self.dim <= nb:
            raise NoSignalSubspaceError(f"subspace dimension must be in [1, {nb}]")
        if not (math.isfinite(self.sigma2_hat) and self.sigma2_hat > 0):
            raise DataError("sigma2_hat must be finite and > 0")
        if self.weights.shape != (self.dim,):
            raise DataError("need exactly one weight per retained direction")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise DataError("weights must be finite and positive")
        if np.any(np.diff(self.weights) < 0):
            raise DataError("weights must be non-decreasing")
        c = self.corrected_eigs
        if c.shape != (nb,) or np.any(c < 0) or np.any(np.diff(c) > 0):
            raise DataError("corrected eigenvalues must be non-negative and non-increasing")

    @property
    def n_bands(self) -> int:
        return self.basis.shape[0]

    @property
    def signal_basis(self) -> np.ndarray:
        """First ``dim`` columns of the basis."""
        return self.basis[:, : self.dim]

    def full_weights(self) -> np.ndarray:
        """Weights for every direction, ``inf`` beyond ``dim``."""
        w = np.full(self.n_bands, np.inf)
        w[: self.dim] = self.weights
        return w

    @classmethod
    def from_eigs(cls, basis, raw_eigs, corrected_eigs, sigma2_hat=None):
        """Derive noise level, dimension and weights from corrected eigenvalues."""
        d = np.asarray(corrected_eigs, dtype=np.float64)
        s2 = float(d.min()) if sigma2_hat is None else float(sigma2_hat)
        dim = int(np.count_nonzero(d > s2))
        if dim == 0:
            raise NoSignalSubspaceError("no signal subspace detected")
        w = s2 / (d[:dim] - s2)
        return cls(basis, raw_eigs, d, s2, dim, w)


@dataclass(frozen=True)
class SssParams:
    lam: float = 1.0

    def __post_init__(self):
        v = float(self.lam)
        if not math.isfinite(v) or v <= 0:
            raise ValueError(f"lam must be finite and > 0, got {v}")
        object.__setattr__(self, "lam", v)


def _blocks(values, rtol=MERGE_RTOL):
    """Group a non-increasing sequence into runs of (numerically) equal values."""
    starts = [0]
    for i in range(1, len(values)):
        a, b = values[starts[-1]], values[i]
        if abs(a - b) > rtol * max(a, 1.0):
            starts.append(i)
    starts.append(len(values))
    return [(starts[k], starts[k + 1]) for k in range(len(starts) - 1)]


def stein_denominators(raw_eigs, ns: int) -> np.ndarray:
    """Denominators ``alpha_b = 1 + (1/ns) sum_{j != b} (d_b + d_j) / (d_b - d_j)``.

    Eigenvalues equal within a relative ``1e-12`` form one block: pairs
    inside a block are skipped and every other block enters the sum once per
    member.
    """
    d = np.asarray(raw_eigs, dtype=np.float64)
    if d.ndim != 1 or d.size == 0:
        raise DataError("raw_eigs must be a non-empty 1-D sequence")
    if np.any(d < 0) or np.any(np.diff(d) > 0):
        raise DataError("raw_eigs must be non-negative and sorted non-increasing")
    if ns < 1:
        raise DataError("ns must be >= 1")
    blocks = _blocks(d)
    vals = np.array([d[a] for a, _ in blocks])
    counts = np.array([b - a for a, b in blocks], dtype=np.float64)
    alpha = np.empty_like(d)
    for k, (a, b) in enumerate(blocks):
        others = np.arange(len(blocks)) != k
        terms = (vals[k] + vals[others]) / (vals[k] - vals[others])
        alpha[a:b] = 1.0 + float(np.dot(counts[others], terms)) / ns
    return alpha


def stein_correct(raw_eigs, ns: int) -> np.ndarray:
    """Stein-type correction ``d_b / alpha_b`` of sample covariance eigenvalues.

    See :func:`stein_denominators` for ``alpha_b``. The output may be
    non-monotone or negative.
    """
    d = np.asarray(raw_eigs, dtype=np.float64)
    alpha = stein_denominators(d, ns)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = d / alpha
    if not np.all(np.isfinite(out)):
        raise DataError("eigenvalue correction produced non-finite values")
    return out


def isotonic_decreasing(values, weights=None, counts=None):
    """Weighted least-squares non-increasing fit by pool-adjacent-violators.

    Parameters
    ----------
    values : array_like
    weights : array_like, optional
        Positive fitting weights. Defaults to ``counts``.
    counts : array_like of int, optional
        Multiplicity of each value. Defaults to ones.

    Pooled values below zero are clamped to zero afterwards, and adjacent
    blocks that end up equal are merged.

    Returns
    -------
    pooled : ndarray
        One value per block, non-increasing and non-negative.
    block_counts : ndarray of int
        Total multiplicity of each block.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    cnt = (np.ones(v.size, dtype=np.int64) if counts is None
           else np.asarray(counts, dtype=np.int64).ravel())
    wts = cnt.astype(np.float64) if weights is None else np.asarray(weights, np.float64).ravel()
    if wts.shape != v.shape or cnt.shape != v.shape:
        raise DataError("weights and counts must match values")
    if np.any(wts <= 0):
        raise DataError("weights must be positive")
    if v.size == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)

    # stack of [weighted mean, total weight, multiplicity]
    stack = []
    for x, wt, n in zip(v, wts, cnt):
        mean, tw, n = float(x), float(wt), int(n)
        while stack and stack[-1][0] < mean:
            pm, pw, pn = stack.pop()
            tot = pw + tw
            mean = (pm * pw + mean * tw) / tot
            tw, n = tot, pn + n
        stack.append([mean, tw, n])

    pooled, block_counts = [], []
    for mean, _, n in stack:
        val = max(mean, 0.0)
        if pooled and pooled[-1] == val:
            block_counts[-1] += n
        else:
            pooled.append(val)
            block_counts.append(n)
    return np.array(pooled), np.array(block_counts, dtype=np.int64)


def stein_isotonize(raw_eigs, ns: int):
    """Stein's isotonized eigenvalue estimates.

    Entries with a non-positive denominator are first pooled with their
    predecessor (sums of eigenvalues and of denominators), then the ratios
    are made non-increasing by pool-adjacent-violators weighted by the
    denominators. A pooled block therefore takes the value
    ``sum(d) / sum(alpha)`` over its members.

    Returns
    -------
    flat : ndarray (n_bands,)
        Corrected eigenvalue of every direction.
    alpha : ndarray (n_bands,)
        Denominators from :func:`stein_denominators`.
    """
    d = np.asarray(raw_eigs, dtype=np.float64)
    alpha = stein_denominators(d, ns)
    # [sum of eigenvalues, sum of denominators, count]
    groups = [[float(x), float(a), 1] for x, a in zip(d, alpha)]
    while len(groups) > 1:
        bad = [i for i, g in enumerate(groups) if g[1] <= 0]
        if not bad:
            break
        j = max(bad[-1], 1)
        lo, hi = groups[j - 1], groups[j]
        groups[j - 1:j + 1] = [[lo[0] + hi[0], lo[1] + hi[1], lo[2] + hi[2]]]
    if groups[0][1] <= 0:
        raise DegenerateCovarianceError("degenerate covariance: eigenvalue correction failed")
    vals = np.array([g[0] / g[1] for g in groups])
    wts = np.array([g[1] for g in groups])
    cnt = np.array([g[2] for g in groups], dtype=np.int64)
    pooled, block_counts = isotonic_decreasing(vals, weights=wts, counts=cnt)
    return np.repeat(pooled, block_counts), alpha


def noise_edge_ratio(n_bands: int, ns: int) -> float:
    """Upper edge of a pure-noise sample spectrum relative to the noise variance."""
    return (1.0 + math.sqrt(n_bands / ns)) ** 2


def split_noise(raw_eigs, alpha, corrected, ns: int):
    """Noise variance and signal dimension from corrected eigenvalues.

    The noise directions ``b > R`` are treated as a single pooled block with
    value ``sum(d_b) / sum(alpha_b)``; ``R`` counts the corrected eigenvalues
    above ``edge * sigma2`` where ``edge`` is :func:`noise_edge_ratio`. Both
    are iterated to a fixed point starting from ``R = 0``.
    """
    d = np.asarray(raw_eigs, dtype=np.float64)
    a = np.asarray(alpha, dtype=np.float64)
    c = np.asarray(corrected, dtype=np.float64)
    edge = noise_edge_ratio(d.size, ns)
    dim = 0
    sigma2 = float("nan")
    for _ in range(d.size + 1):
        den = float(a[dim:].sum())
        sigma2 = float(d[dim:].sum()) / den if den > 0 else float("nan")
        if not (math.isfinite(sigma2) and sigma2 > 0):
            raise DegenerateCovarianceError(
                "degenerate covariance: no positive noise variance estimate"
            )
        new_dim = int(np.count_nonzero(c > edge * sigma2))
        if new_dim == dim:
            break
        dim = new_dim
    return sigma2, dim


def estimate_subspace(measurements) -> SubspaceModel:
    """PCA of the measured spectra with corrected eigenvalues.

    Parameters
    ----------
    measurements : ndarray of shape (n_bands, ns)
        Measured pixel spectra ``Y_I``, one per column. The covariance is
        uncentered, ``Y_I Y_I^T / ns``.

    Raises
    ------
    DegenerateCovarianceError
        All measurements are zero, or no positive noise level can be found.
    NoSignalSubspaceError
        Every direction is indistinguishable from noise.
    """
    y = np.ascontiguousarray(measurements, dtype=np.float64)
    if y.ndim != 2:
        raise DataError("measurements must be a (bands, ns) matrix")
    nb, ns = y.shape
    if nb < 2 or ns < 2:
        raise DataError("need at least 2 bands and 2 measured pixels")
    if not np.all(np.isfinite(y)):
        raise DataError("measurements contain non-finite values")
    if not np.any(y):
        raise DegenerateCovarianceError("degenerate covariance: all measurements are zero")

    with np.errstate(over="ignore", invalid="ignore"):
        cov = (y @ y.T) / ns
    if not np.all(np.isfinite(cov)):
        raise NumericalError("sample covariance overflowed")
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    basis = evecs[:, order]
    # clipping can break exact ordering by one ulp
    raw = np.minimum.accumulate(np.clip(evals[order], 0.0, None))

    corrected, alpha = stein_isotonize(raw, ns)
    sigma2, dim = split_noise(raw, alpha, corrected, ns)
    if dim == 0:
        raise NoSignalSubspaceError("no signal subspace detected")
    corrected = corrected.copy()
    corrected[dim:] = sigma2
    return SubspaceModel.from_eigs(basis, raw, corrected, sigma2)


def project_balls(points, centers, radius: float) -> np.ndarray:
    """Project each column of ``points`` onto the ball around the matching center."""
    p = np.asarray(points, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    diff = p - c
    # column norms summed row by row, in band order
    dist = np.sqrt(np.add.reduce(diff * diff, axis=0))
    outside = dist > radius
    # interior points are returned untouched rather than rebuilt as c + (p - c)
    out = p.copy()
    out[:, outside] = c[:, outside] + (radius / dist[outside]) * diff[:, outside]
    return out


class SssObjective:
    """Smooth part of the 3S criterion on the ``(R, n_pixels)`` coefficients."""

    def __init__(self, weights, height: int, width: int, lam: float):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.dim = self.weights.size
        self.op = GradientOperator(height, width)
        self.lam = float(lam)

    @property
    def lipschitz_bound(self) -> float:
        return 8.0 + self.lam * float(self.weights.max())

    def value(self, s) -> float:
        g = apply_gradient(s, self.op)
        row_energy = np.einsum("ij,ij->i", s, s)
        return (0.5 / self.dim) * float(np.vdot(g, g)) + 0.5 * self.lam * float(
            np.dot(self.weights, row_energy)
        )

    def gradient(self, s) -> np.ndarray:
        return -apply_laplacian(s, self.op) / self.dim + self.lam * self.weights[:, None] * s


def sss_reconstruct(measurements, mask: SamplingMask, shape, model: SubspaceModel,
                    params: SssParams | None = None, config: FistaConfig | None = None):
    """Reconstruct the full image inside the estimated signal subspace.

    Returns
    -------
    image : SpectrumImage
        ``H_R S``, rank at most ``model.dim``.
    report : SolveReport
        ``report.coefficients`` holds the final ``(R, n_pixels)`` matrix.
    """
    params = params or SssParams()
    y = np.ascontiguousarray(measurements, dtype=np.float64)
    nb, h, w = (int(v) for v in shape)
    if y.ndim != 2 or y.shape[0] != nb:
        raise DataError(f"measurements must have shape ({nb}, ns)")
    if model.n_bands != nb:
        raise DataError(f"subspace model has {model.n_bands} bands, data has {nb}")
    if mask.n_pixels != h * w or y.shape[1] != mask.ns:
        raise IncompatibleMaskError("mask does not match the measurements or image shape")

    hr = model.signal_basis
    centers = hr.T @ y
    radius = math.sqrt(model.dim * model.sigma2_hat)
    idx = mask.indices
    smooth = SssObjective(model.weights, h, w, params.lam)

    def prox(z, step):
        z[:, idx] = project_balls(z[:, idx], centers, radius)
        return z

    s0 = np.repeat(centers.mean(axis=1, keepdims=True), h * w, axis=1)
    s0[:, idx] = centers
    problem = FistaProblem(smooth.gradient, prox, smooth.lipschitz_bound, smooth.value)
    s, report = fista_solve(problem, s0, config)
    report.coefficients = s
    return SpectrumImage(hr @ s, h, w), report


def constraint_excess(model: SubspaceModel, measurements, coefficients, mask) -> np.ndarray:
    """``(1/R)||H^T y_n - s_n||^2 - sigma2`` for every measured pixel."""
    centers = model.signal_basis.T @ np.ascontiguousarray(measurements, dtype=np.float64)
    diff = centers - np.asarray(coefficients)[:, mask.indices]
    return np.einsum("ij,ij->j", diff, diff) / model.dim - model.sigma2_hat
