"""Reconstruction of partially sampled spectrum-images.

Two reconstructors are provided: smoothed nuclear-norm completion (S2N,
:mod:`spectrec.snn`) and subspace-constrained completion (3S,
:mod:`spectrec.sss`). Both run on the FISTA solver in :mod:`spectrec.fista`.
"""

from .core import (
    GradientOperator,
    SamplingMask,
    SpectrumImage,
    apply_gradient,
    apply_gradient_adjoint,
    apply_laplacian,
    make_random_mask,
    restrict,
    scatter,
)
from .errors import (
    DataError,
    DegenerateCovarianceError,
    FormatError,
    IncompatibleMaskError,
    NoSignalSubspaceError,
    NumericalError,
    SpectrecError,
)
from .estimators import S2NReconstructor, SSSReconstructor, SubspaceEstimator
from .fista import FistaConfig, FistaProblem, SolveReport, fista_solve
from .metrics import EvalReport, asad, invert_abundances, nmse
from .phantom import Phantom, make_phantom
from .snn import SnnParams, TuningState, nuclear_prox, snn_reconstruct, snn_tune
from .sss import (
    SssParams,
    SubspaceModel,
    estimate_subspace,
    isotonic_decreasing,
    project_balls,
    sss_reconstruct,
    stein_correct,
)

__version__ = "0.1.0"

__all__ = [
    "SpectrumImage", "SamplingMask", "GradientOperator", "restrict", "scatter",
    "apply_gradient", "apply_gradient_adjoint", "apply_laplacian", "make_random_mask",
    "SpectrecError", "DataError", "IncompatibleMaskError", "FormatError",
    "DegenerateCovarianceError", "NoSignalSubspaceError", "NumericalError",
    "FistaConfig", "FistaProblem", "SolveReport", "fista_solve",
    "SnnParams", "TuningState", "nuclear_prox", "snn_reconstruct", "snn_tune",
    "SssParams", "SubspaceModel", "estimate_subspace", "stein_correct",
    "isotonic_decreasing", "project_balls", "sss_reconstruct",
    "Phantom", "make_phantom",
    "EvalReport", "nmse", "asad", "invert_abundances",
    "S2NReconstructor", "SSSReconstructor", "SubspaceEstimator",
]
