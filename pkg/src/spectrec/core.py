"""Spectrum-image data model, sampling masks and spatial difference operators.

A spectrum-image is stored as an ``(n_bands, n_pixels)`` matrix. Pixel ``p``
sits at spatial position ``(p // width, p % width)``.

The gradient operator ``D`` maps an ``(k, n_pixels)`` stack of images to the
``(k, 2 * n_pixels)`` stack of forward differences, horizontal block first.
Differences across the image border are zero (replicate boundary), so the
induced Laplacian ``-D D^T`` is the 5-point stencil with Neumann boundaries
and its spectral norm stays below 8.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DataError, IncompatibleMaskError

__all__ = [
    "SpectrumImage",
    "SamplingMask",
    "GradientOperator",
    "restrict",
    "scatter",
    "apply_gradient",
    "apply_gradient_adjoint",
    "apply_laplacian",
    "make_random_mask",
]


@dataclass(eq=False)
class SpectrumImage:
    """Multiband image with one spectrum per pixel.

    Parameters
    ----------
    data : ndarray of shape (bands, height * width)
        Band intensities, one column per pixel in row-major order.
    height, width : int
        Spatial dimensions.
    meta : dict
        Free-form in-memory metadata (e.g. the noise variance used by a
        simulator). Not serialized to ``.sib`` files.
    check_finite : bool
        Reject NaN/inf entries (default). Readers disable this to load and
        warn about damaged files.
    """

    data: np.ndarray
    height: int
    width: int
    meta: dict = field(default_factory=dict)
    check_finite: InitVar[bool] = True

    def __post_init__(self, check_finite):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DataError(f"image data must be 2-D, got ndim={data.ndim}")
        self.height = int(self.height)
        self.width = int(self.width)
        if self.height < 1 or self.width < 1 or data.shape[0] < 1:
            raise DataError("bands, height and width must all be >= 1")
        if data.shape[1] != self.height * self.width:
            raise DataError(
                f"data has {data.shape[1]} columns, expected "
                f"{self.height}*{self.width}={self.height * self.width}"
            )
        if check_finite and not np.all(np.isfinite(data)):
            raise DataError("image data contains non-finite values")
        self.data = data

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.bands, self.height, self.width)

    @classmethod
    def from_cube(cls, cube, **kwargs) -> "SpectrumImage":
        """Build from a ``(bands, height, width)`` array."""
        cube = np.asarray(cube, dtype=np.float64)
        if cube.ndim != 3:
            raise DataError("cube must have shape (bands, height, width)")
        b, h, w = cube.shape
        return cls(cube.reshape(b, h * w), h, w, **kwargs)

    def to_cube(self) -> np.ndarray:
        return self.data.reshape(self.bands, self.height, self.width)

    def pixel_coords(self, p: int) -> tuple[int, int]:
        return divmod(int(p), self.width)


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Ordered set of acquired pixel positions.

    ``indices`` must be strictly increasing and lie in ``[0, n_pixels)``.
    """

    indices: np.ndarray
    n_pixels: int

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 1:
            raise DataError("mask indices must be a 1-D sequence")
        if idx.size and not np.issubdtype(idx.dtype, np.integer):
            if not np.all(np.equal(np.mod(idx, 1), 0)):
                raise DataError("mask indices must be integers")
        idx = idx.astype(np.int64)
        n = int(self.n_pixels)
        if n < 1:
            raise DataError("mask n_pixels must be >= 1")
        if idx.size < 1:
            raise DataError("mask must contain at least one index")
        if idx.min() < 0 or idx.max() >= n:
            raise DataError(f"mask index out of range [0, {n})")
        d = np.diff(idx)
        if np.any(d == 0):
            raise DataError("mask contains duplicate indices")
        if np.any(d < 0):
            raise DataError("mask indices must be sorted in increasing order")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "n_pixels", n)

    @property
    def ns(self) -> int:
        return int(self.indices.size)

    @property
    def ratio(self) -> float:
        return self.ns / self.n_pixels

    def __eq__(self, other):
        if not isinstance(other, SamplingMask):
            return NotImplemented
        return self.n_pixels == other.n_pixels and np.array_equal(
            self.indices, other.indices
        )

    def __hash__(self):
        return hash((self.n_pixels, self.indices.tobytes()))

    @classmethod
    def full(cls, n_pixels: int) -> "SamplingMask":
        return cls(np.arange(n_pixels), n_pixels)

    def boolean(self) -> np.ndarray:
        out = np.zeros(self.n_pixels, dtype=bool)
        out[self.indices] = True
        return out


@dataclass(frozen=True)
class GradientOperator:
    """Matrix-free spatial forward-difference operator with replicate boundary."""

    height: int
    width: int
    boundary: str = "replicate"

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise DataError("height and width must be >= 1")
        if self.boundary != "replicate":
            raise ValueError("only the replicate boundary is supported")

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    def dense(self) -> np.ndarray:
        """Explicit ``(n_pixels, 2 * n_pixels)`` matrix, for small test cases only."""
        eye = np.eye(self.n_pixels)
        return apply_gradient(eye, self)

    @cached_property
    def sparse_gradient(self) -> sp.csr_matrix:
        """``D`` as a sparse ``(n_pixels, 2 * n_pixels)`` matrix.

        Solvers use it on pixel-major data: ``(X D)^T = D^T X^T``.
        """
        h, w, n = self.height, self.width, self.n_pixels
        p = np.arange(n)
        hx = p[p % w < w - 1]
        vy = p[p < n - w]
        rows = np.concatenate([hx + 1, hx, vy + w, vy])
        cols = np.concatenate([hx, hx, n + vy, n + vy])
        vals = np.concatenate([np.ones(hx.size), -np.ones(hx.size),
                               np.ones(vy.size), -np.ones(vy.size)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, 2 * n))

    @cached_property
    def sparse_laplacian(self) -> sp.csr_matrix:
        """Symmetric ``Delta = -D D^T`` as a sparse ``(n_pixels, n_pixels)`` matrix."""
        d = self.sparse_gradient
        return (-(d @ d.T)).tocsr()


def _as_rows(rows, n_pixels: int, name: str = "rows") -> np.ndarray:
    arr = np.asarray(rows, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n_pixels:
        raise DataError(
            f"{name} must have {n_pixels} columns, got shape {np.shape(rows)}"
        )
    return arr


def restrict(image, mask: SamplingMask) -> np.ndarray:
    """Gather the measured columns ``X_I`` of an image, in mask order."""
    data = image.data if isinstance(image, SpectrumImage) else np.asarray(image)
    if data.ndim != 2 or data.shape[1] != mask.n_pixels:
        raise IncompatibleMaskError(
            f"mask is defined on {mask.n_pixels} pixels but the image has "
            f"{data.shape[-1]}"
        )
    return np.ascontiguousarray(data[:, mask.indices])


def scatter(columns, mask: SamplingMask) -> np.ndarray:
    """Place measured columns into a zero ``(k, n_pixels)`` matrix.

    This is the adjoint of :func:`restrict`.
    """
    cols = np.asarray(columns, dtype=np.float64)
    if cols.ndim != 2 or cols.shape[1] != mask.ns:
        raise IncompatibleMaskError(
            f"expected {mask.ns} measured columns, got shape {cols.shape}"
        )
    out = np.zeros((cols.shape[0], mask.n_pixels))
    out[:, mask.indices] = cols
    return out


def apply_gradient(rows, op: GradientOperator) -> np.ndarray:
    """Forward differences ``X D`` of each row, shape ``(k, 2 * n_pixels)``.

    Columns ``[0, n_pixels)`` hold horizontal differences
    ``x[y, x+1] - x[y, x]`` and columns ``[n_pixels, 2 n_pixels)`` vertical
    ones. The last column/row of each block is zero.
    """
    arr = _as_rows(rows, op.n_pixels)
    k = arr.shape[0]
    h, w = op.height, op.width
    img = arr.reshape(k, h, w)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :, :-1] = img[:, :, 1:] - img[:, :, :-1]
    gy[:, :-1, :] = img[:, 1:, :] - img[:, :-1, :]
    return np.concatenate([gx.reshape(k, -1), gy.reshape(k, -1)], axis=1)


def apply_gradient_adjoint(grads, op: GradientOperator) -> np.ndarray:
    """Apply ``D^T`` to ``(k, 2 * n_pixels)`` gradient fields (negative divergence)."""
    n = op.n_pixels
    arr = _as_rows(grads, 2 * n, name="gradient field")
    k = arr.shape[0]
    h, w = op.height, op.width
    gx = arr[:, :n].reshape(k, h, w)
    gy = arr[:, n:].reshape(k, h, w)
    out = np.zeros((k, h, w))
    out[:, :, :-1] -= gx[:, :, :-1]
    out[:, :, 1:] += gx[:, :, :-1]
    out[:, :-1, :] -= gy[:, :-1, :]
    out[:, 1:, :] += gy[:, :-1, :]
    return out.reshape(k, n)


def apply_laplacian(rows, op: GradientOperator) -> np.ndarray:
    """``X Delta`` with ``Delta = -D D^T`` (5-point stencil, Neumann boundary)."""
    arr = _as_rows(rows, op.n_pixels)
    k = arr.shape[0]
    h, w = op.height, op.width
    img = arr.reshape(k, h, w)
    out = np.empty_like(img)
    # horizontal then vertical neighbour differences, accumulated in place
    d = np.subtract(img[:, :, 1:], img[:, :, :-1])
    out[:, :, :-1] = d
    out[:, :, -1] = 0.0
    out[:, :, 1:] -= d
    d = np.subtract(img[:, 1:, :], img[:, :-1, :])
    out[:, :-1, :] += d
    out[:, 1:, :] -= d
    return out.reshape(k, -1)


def make_random_mask(n_pixels: int, ns: int, seed: int | None = None) -> SamplingMask:
    """Draw ``ns`` distinct pixel positions uniformly without replacement."""
    n_pixels = int(n_pixels)
    ns = int(ns)
    if not 1 <= ns <= n_pixels:
        raise DataError(f"ns must lie in [1, {n_pixels}], got {ns}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n_pixels, size=ns, replace=False))
    return SamplingMask(idx, n_pixels)
