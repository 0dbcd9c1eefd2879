"""scikit-learn style wrappers around the functional API.

Reconstructors follow the imputer convention: the input is an
``(n_pixels, n_bands)`` array in row-major pixel order where unmeasured
pixels are rows of NaN. ``transform`` returns the completed array.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import SamplingMask
from .errors import DataError
from .fista import FistaConfig
from .snn import SnnParams, snn_reconstruct, snn_tune
from .sss import SssParams, estimate_subspace, sss_reconstruct

__all__ = ["SubspaceEstimator", "S2NReconstructor", "SSSReconstructor", "split_measured"]


def split_measured(X, image_shape):
    """Separate measured rows from NaN rows.

    Returns
    -------
    measurements : ndarray of shape (n_bands, ns)
    mask : SamplingMask
    """
    X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan")
    h, w = (int(v) for v in image_shape)
    if X.shape[0] != h * w:
        raise DataError(f"expected {h * w} rows for image_shape {(h, w)}, got {X.shape[0]}")
    nan = np.isnan(X)
    missing = nan.all(axis=1)
    if np.any(nan.any(axis=1) & ~missing):
        raise DataError("rows must be either fully measured or fully NaN")
    idx = np.flatnonzero(~missing)
    if idx.size == 0:
        raise DataError("no measured pixels")
    return X[idx].T.copy(), SamplingMask(idx, h * w)


class SubspaceEstimator(TransformerMixin, BaseEstimator):
    """Signal subspace of a set of spectra with corrected eigenvalues.

    Parameters
    ----------
    None. The dimension and noise level are estimated from the data.

    Attributes
    ----------
    components_ : ndarray of shape (n_components_, n_features)
        Orthonormal signal directions, strongest first.
    n_components_ : int
    noise_variance_ : float
    weights_ : ndarray of shape (n_components_,)
    raw_eigenvalues_, corrected_eigenvalues_ : ndarray of shape (n_features,)
    model_ : SubspaceModel
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2, ensure_min_features=2)
        model = estimate_subspace(X.T)
        self.model_ = model
        self.components_ = model.signal_basis.T.copy()
        self.n_components_ = model.dim
        self.noise_variance_ = model.sigma2_hat
        self.weights_ = model.weights.copy()
        self.raw_eigenvalues_ = model.raw_eigs.copy()
        self.corrected_eigenvalues_ = model.corrected_eigs.copy()
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X @ self.components_.T

    def inverse_transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        return X @ self.components_


class _Reconstructor(TransformerMixin, BaseEstimator):

    def _config(self):
        return FistaConfig(max_iters=self.max_iters, tol=self.tol)

    def _check_shape(self):
        if self.image_shape is None or len(self.image_shape) != 2:
            raise DataError("image_shape=(height, width) is required")
        return tuple(int(v) for v in self.image_shape)

    def fit_transform(self, X, y=None):
        return self.fit(X).reconstruction_.copy()


class S2NReconstructor(_Reconstructor):
    """Smoothed nuclear-norm completion.

    Parameters
    ----------
    image_shape : tuple (height, width)
    lam, mu : float or None
        Regularization weights. When both are None they are tuned during
        ``fit`` against the noise level of a :class:`SubspaceEstimator`;
        when only one is None it is taken as 0.
    max_iters, tol : FISTA stopping rule.
    svd_method : {"gram", "svd"}

    Attributes
    ----------
    params_ : SnnParams
    tuning_ : TuningState or None
    reconstruction_ : ndarray of shape (n_pixels, n_bands)
    report_ : SolveReport
    """

    def __init__(self, image_shape=None, lam=None, mu=None, max_iters=2000, tol=1e-6,
                 svd_method="gram"):
        self.image_shape = image_shape
        self.lam = lam
        self.mu = mu
        self.max_iters = max_iters
        self.tol = tol
        self.svd_method = svd_method

    def fit(self, X, y=None):
        h, w = self._check_shape()
        ym, mask = split_measured(X, (h, w))
        shape = (ym.shape[0], h, w)
        config = self._config()
        self.tuning_ = None
        if self.lam is None and self.mu is None:
            sigma2 = estimate_subspace(ym).sigma2_hat
            self.params_, self.tuning_ = snn_tune(ym, mask, shape, sigma2, config,
                                                  self.svd_method)
        else:
            self.params_ = SnnParams(self.lam or 0.0, self.mu or 0.0)
        img, self.report_ = snn_reconstruct(ym, mask, shape, self.params_, config,
                                            svd_method=self.svd_method)
        self.reconstruction_ = img.data.T.copy()
        self.n_features_in_ = ym.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        h, w = self._check_shape()
        ym, mask = split_measured(X, (h, w))
        img, _ = snn_reconstruct(ym, mask, (ym.shape[0], h, w), self.params_,
                                 self._config(), svd_method=self.svd_method)
        return img.data.T.copy()


class SSSReconstructor(_Reconstructor):
    """Subspace-constrained smooth completion.

    Parameters
    ----------
    image_shape : tuple (height, width)
    lam : float
        Weight of the spectral energy term, default 1.
    max_iters, tol : FISTA stopping rule.

    Attributes
    ----------
    subspace_ : SubspaceModel
    reconstruction_ : ndarray of shape (n_pixels, n_bands)
    coefficients_ : ndarray of shape (n_components, n_pixels)
    report_ : SolveReport
    """

    def __init__(self, image_shape=None, lam=1.0, max_iters=2000, tol=1e-6):
        self.image_shape = image_shape
        self.lam = lam
        self.max_iters = max_iters
        self.tol = tol

    def fit(self, X, y=None):
        h, w = self._check_shape()
        ym, mask = split_measured(X, (h, w))
        self.subspace_ = estimate_subspace(ym)
        img, self.report_ = sss_reconstruct(ym, mask, (ym.shape[0], h, w), self.subspace_,
                                            SssParams(self.lam), self._config())
        self.coefficients_ = self.report_.coefficients
        self.reconstruction_ = img.data.T.copy()
        self.n_features_in_ = ym.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "subspace_")
        h, w = self._check_shape()
        ym, mask = split_measured(X, (h, w))
        img, _ = sss_reconstruct(ym, mask, (ym.shape[0], h, w), self.subspace_,
                                 SssParams(self.lam), self._config())
        return img.data.T.copy()
