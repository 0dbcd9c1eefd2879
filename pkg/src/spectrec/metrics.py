"""Reconstruction and unmixing quality metrics.

``nmse`` compares images or abundance matrices, ``asad`` compares
endmember sets up to column order and scale, and ``invert_abundances``
recovers nonnegative abundances from an image with known endmembers.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import SpectrumImage
from .errors import DataError
from .phantom import spectral_angles

__all__ = ["EvalReport", "nmse", "asad", "match_columns", "invert_abundances"]

NNLS_MAX_ITERS = 500
NNLS_TOL = 1e-10


def _matrix(x) -> np.ndarray:
    return x.data if isinstance(x, SpectrumImage) else np.asarray(x, dtype=np.float64)


def nmse(truth, estimate) -> float:
    """``||estimate - truth||_F^2 / ||truth||_F^2``."""
    t = _matrix(truth)
    e = _matrix(estimate)
    if t.shape != e.shape:
        raise DataError(f"shape mismatch: truth {t.shape}, estimate {e.shape}")
    denom = float(np.vdot(t, t))
    if denom == 0:
        raise DataError("nmse undefined for an all-zero reference")
    d = e - t
    return float(np.vdot(d, d)) / denom


def match_columns(m_true, m_est):
    """Greedy one-to-one matching of columns by smallest spectral angle.

    Returns
    -------
    pairs : list of (int, int)
        ``(true_index, est_index)`` sorted by true index.
    angles : ndarray
        Angle of each pair, same order.
    """
    a = np.asarray(m_true, dtype=np.float64)
    b = np.asarray(m_est, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise DataError(f"endmember matrices must share a 2-D shape, got {a.shape}, {b.shape}")
    if np.any(np.linalg.norm(a, axis=0) == 0) or np.any(np.linalg.norm(b, axis=0) == 0):
        raise DataError("spectral angle undefined for a zero column")
    nc = a.shape[1]
    ii, jj = np.meshgrid(np.arange(nc), np.arange(nc), indexing="ij")
    table = spectral_angles(a[:, ii.ravel()], b[:, jj.ravel()]).reshape(nc, nc)
    pairs = []
    free_i, free_j = set(range(nc)), set(range(nc))
    # ties resolve to the lowest (i, j) thanks to the stable sort
    for flat in np.argsort(table, axis=None, kind="stable"):
        i, j = divmod(int(flat), nc)
        if i in free_i and j in free_j:
            pairs.append((i, j))
            free_i.discard(i)
            free_j.discard(j)
    pairs.sort()
    return pairs, np.array([table[i, j] for i, j in pairs])


def asad(m_true, m_est) -> float:
    """Average spectral angle (radians) after greedy column matching."""
    _, angles = match_columns(m_true, m_est)
    return float(angles.mean())


def invert_abundances(image, endmembers, sum_to_one: bool = False,
                      max_iters: int = NNLS_MAX_ITERS, tol: float = NNLS_TOL,
                      return_trace: bool = False):
    """Per-pixel nonnegative least squares ``min_{a >= 0} ||x_p - M a||^2``.

    Projected gradient with step ``1 / ||M^T M||_2``, started from the
    clipped unconstrained least-squares solution. All pixels are updated
    together; iteration stops after ``max_iters`` or once the relative change
    of the abundance matrix falls below ``tol``.

    Parameters
    ----------
    image : SpectrumImage or ndarray of shape (n_bands, n_pixels)
    endmembers : ndarray of shape (n_bands, nc)
        Must have full column rank.
    sum_to_one : bool
        Rescale each output column to sum to one (columns summing to zero
        are left at zero).
    return_trace : bool
        Also return the objective after each iteration.

    Returns
    -------
    abundances : ndarray of shape (nc, n_pixels)
    trace : list of float, only if ``return_trace``
    """
    x = _matrix(image)
    m = np.asarray(endmembers, dtype=np.float64)
    if m.ndim != 2 or x.ndim != 2 or m.shape[0] != x.shape[0]:
        raise DataError(f"endmembers {m.shape} do not match image bands {x.shape}")
    nb, nc = m.shape
    if nc > nb:
        raise DataError(f"more endmembers ({nc}) than bands ({nb})")
    if np.linalg.matrix_rank(m) < nc:
        raise DataError("endmember matrix is rank-deficient")

    gram = m.T @ m
    mtx = m.T @ x
    step = 1.0 / np.linalg.eigvalsh(gram)[-1]
    a = np.clip(np.linalg.lstsq(m, x, rcond=None)[0], 0.0, None)

    def objective(a):
        r = m @ a - x
        return 0.5 * float(np.vdot(r, r))

    trace = [objective(a)] if return_trace else None
    for _ in range(int(max_iters)):
        a_new = np.clip(a - step * (gram @ a - mtx), 0.0, None)
        change = np.linalg.norm(a_new - a)
        scale = np.linalg.norm(a)
        a = a_new
        if return_trace:
            trace.append(objective(a))
        if change <= tol * max(scale, np.finfo(float).tiny):
            break

    if sum_to_one:
        s = a.sum(axis=0, keepdims=True)
        a = np.divide(a, s, out=np.zeros_like(a), where=s > 0)
    return (a, trace) if return_trace else a


@dataclass
class EvalReport:
    nmse_image: float
    asad: Optional[float] = None
    nmse_abundance: Optional[float] = None
    sad_per_component: list = field(default_factory=list)

    def __post_init__(self):
        if not self.nmse_image >= 0:
            raise DataError("nmse_image must be >= 0")
        if self.asad is not None and not 0 <= self.asad <= np.pi:
            raise DataError("asad must lie in [0, pi]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def evaluate(cls, truth, estimate, endmembers=None, abundances=None,
                 estimated_endmembers=None) -> "EvalReport":
        """Image NMSE plus, when factors are given, abundance NMSE and aSAD.

        Abundances are inverted from ``estimate`` with the true endmembers.
        aSAD compares ``estimated_endmembers`` to the truth when provided,
        otherwise the least-squares endmembers implied by ``estimate`` and
        the true abundances.
        """
        rep = cls(nmse(truth, estimate))
        if endmembers is None or abundances is None:
            return rep
        m = np.asarray(endmembers, dtype=np.float64)
        a = np.asarray(abundances, dtype=np.float64)
        a_hat = invert_abundances(estimate, m)
        rep.nmse_abundance = nmse(a, a_hat)
        if estimated_endmembers is None:
            x = _matrix(estimate)
            estimated_endmembers = np.linalg.lstsq(a.T, x.T, rcond=None)[0].T
        _, angles = match_columns(m, estimated_endmembers)
        rep.asad = float(angles.mean())
        rep.sad_per_component = [float(v) for v in angles]
        return rep
