"""Sparse proximate factors for large panels, with extreme-value guarantees."""

from .errors import BoundUnattainableError, ConvergenceError, InputError, NumericalError
from .factor_core import FactorFit, pca_fit
from .metrics import generalized_correlation
from .panel_io import Panel, load_csv, load_fred_md
from .proximate import (
    SparseWeights,
    choose_m_data_driven,
    choose_m_theory,
    hard_threshold_weights,
    proximate_factors,
    proximate_loadings,
)

__version__ = "0.1.0"

__all__ = [
    "BoundUnattainableError", "ConvergenceError", "InputError", "NumericalError",
    "FactorFit", "pca_fit", "generalized_correlation", "Panel", "load_csv", "load_fred_md",
    "SparseWeights", "choose_m_data_driven", "choose_m_theory", "hard_threshold_weights",
    "proximate_factors", "proximate_loadings",
]
