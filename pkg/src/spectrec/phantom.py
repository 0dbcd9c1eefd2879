"""Synthetic spectrum-images under the linear mixing model ``X = M A``.

Endmembers imitate EELS morphology: a decaying power-law background with
component-specific edges and peaks. Abundance maps are smooth Gaussian
blobs over a constant background component, normalized to sum to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SpectrumImage
from .errors import DataError

__all__ = [
    "Phantom",
    "make_abundance_maps",
    "make_endmembers",
    "add_noise",
    "make_phantom",
    "spectral_angles",
]

MIN_PAIRWISE_SAD = 0.05
MAX_REJECTIONS = 100


def spectral_angles(a, b) -> np.ndarray:
    """Angle in radians between matching columns of ``a`` and ``b``."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    if np.any(na == 0) or np.any(nb == 0):
        raise DataError("spectral angle undefined for a zero column")
    cos = np.einsum("ij,ij->j", a, b) / (na * nb)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def blob_field(height, width, center, sigma, amplitude) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    d2 = (yy - center[0]) ** 2 + (xx - center[1]) ** 2
    return amplitude * np.exp(-d2 / (2.0 * sigma**2))


def make_abundance_maps(height: int, width: int, nc: int, seed=None,
                        blobs_per_component: int = 2) -> np.ndarray:
    """Smooth sum-to-one abundance maps of shape ``(nc, height * width)``.

    Component 0 is a constant background; each other component is a sum of
    ``blobs_per_component`` Gaussian blobs with amplitude in ``[3, 8]``
    relative to the background, so a blob center is dominated by its own
    component.
    """
    n_pixels = height * width
    if nc < 2:
        raise DataError("need at least 2 components")
    if nc > n_pixels:
        raise DataError(f"nc={nc} exceeds the number of pixels {n_pixels}")
    rng = np.random.default_rng(seed)
    size = min(height, width)
    raw = np.ones((nc, height, width))
    for k in range(1, nc):
        raw[k] = 0.0
        for _ in range(blobs_per_component):
            center = (rng.uniform(0, height - 1), rng.uniform(0, width - 1))
            sigma = rng.uniform(0.08, 0.2) * size
            raw[k] += blob_field(height, width, center, max(sigma, 0.5),
                                 rng.uniform(3.0, 8.0))
    raw = raw.reshape(nc, n_pixels)
    return raw / raw.sum(axis=0, keepdims=True)


def _one_endmember(axis, rng, features):
    offset = rng.uniform(0.05, 0.15)
    power = rng.uniform(1.0, 2.5)
    curve = (axis + offset) ** (-power)
    curve /= curve.max()
    for kind, pos in features:
        if kind == "edge":
            width = rng.uniform(0.003, 0.01)
            decay = rng.uniform(0.15, 0.5)
            height = rng.uniform(0.15, 0.5)
            t = axis - pos
            step = 0.5 * (1.0 + np.tanh(t / width))
            curve = curve + height * step * np.exp(-np.clip(t, 0, None) / decay)
        else:
            width = rng.uniform(0.004, 0.02)
            curve = curve + rng.uniform(0.2, 0.8) * np.exp(-0.5 * ((axis - pos) / width) ** 2)
    return curve


def make_endmembers(nb: int, nc: int, seed=None, edges: int = 1, peaks: int = 1) -> np.ndarray:
    """Non-negative EELS-like spectra, shape ``(nb, nc)``.

    Every component gets ``edges`` edge onsets and ``peaks`` Gaussian peaks
    at channel positions no other component uses. Draws are rejected until
    all pairwise spectral angles are at least 0.05 rad.
    """
    if nb <= nc:
        raise DataError("need more bands than components")
    rng = np.random.default_rng(seed)
    axis = np.linspace(0.0, 1.0, nb)
    n_feat = nc * (edges + peaks)
    for _ in range(MAX_REJECTIONS):
        slots = np.linspace(0.1, 0.9, n_feat + 2)[1:-1]
        slots = rng.permutation(slots)
        m = np.empty((nb, nc))
        for k in range(nc):
            mine = slots[k * (edges + peaks):(k + 1) * (edges + peaks)]
            feats = [("edge", p) for p in mine[:edges]] + [("peak", p) for p in mine[edges:]]
            m[:, k] = _one_endmember(axis, rng, feats)
        ii, jj = np.triu_indices(nc, 1)
        if ii.size == 0 or spectral_angles(m[:, ii], m[:, jj]).min() >= MIN_PAIRWISE_SAD:
            return m
    raise DataError(
        f"could not draw {nc} endmembers with pairwise SAD >= {MIN_PAIRWISE_SAD} "
        f"after {MAX_REJECTIONS} attempts"
    )


def add_noise(truth: SpectrumImage, snr_db: float, seed=None) -> SpectrumImage:
    """Add i.i.d. Gaussian noise with variance ``mean(X^2) / 10^(snr_db/10)``.

    ``snr_db = inf`` returns an unchanged copy. The variance used is stored
    in ``meta["sigma2"]`` of the result.
    """
    snr_db = float(snr_db)
    if math.isnan(snr_db):
        raise DataError("snr_db must not be NaN")
    data = truth.data
    if math.isinf(snr_db) and snr_db > 0:
        sigma2 = 0.0
        noisy = data.copy()
    else:
        sigma2 = float(np.mean(data**2)) / 10.0 ** (snr_db / 10.0)
        rng = np.random.default_rng(seed)
        noisy = data + rng.normal(scale=math.sqrt(sigma2), size=data.shape)
    meta = {"sigma2": sigma2, "snr_db": snr_db, "noise_seed": seed}
    return SpectrumImage(noisy, truth.height, truth.width, meta=meta)


@dataclass(eq=False)
class Phantom:
    """Ground truth ``X = M A`` plus one noisy realization."""

    endmembers: np.ndarray
    abundances: np.ndarray
    truth: SpectrumImage
    noisy: SpectrumImage
    snr_db: float
    sigma2: float
    seeds: dict = field(default_factory=dict)

    @property
    def nc(self) -> int:
        return self.endmembers.shape[1]

    def sidecar(self) -> dict:
        return {
            "nc": self.nc,
            "snr_db": self.snr_db,
            "sigma2": self.sigma2,
            "seeds": dict(self.seeds),
        }


def make_phantom(height: int, width: int, bands: int, nc: int, snr_db: float,
                 seed: int = 0) -> Phantom:
    """Build endmembers, abundances, the clean image and a noisy copy.

    The three random draws use seeds ``seed``, ``seed + 1`` and
    ``seed + 2`` respectively.
    """
    seeds = {"endmembers": seed, "abundances": seed + 1, "noise": seed + 2}
    m = make_endmembers(bands, nc, seeds["endmembers"])
    a = make_abundance_maps(height, width, nc, seeds["abundances"])
    truth = SpectrumImage(m @ a, height, width)
    noisy = add_noise(truth, snr_db, seeds["noise"])
    return Phantom(m, a, truth, noisy, float(snr_db), noisy.meta["sigma2"], seeds)
