"""Residual-based early stopping for spectral regularisation in the sequence model."""
from .analytics import (
    BiasVariance,
    OracleReport,
    balanced_oracle,
    bias_variance,
    expected_residual_sq,
    min_error,
    mise,
    oracle_proxy,
    oracle_report,
    t_circ,
)
from .filters import Regulariser, filter_vector, g, landweber_discrete_index, make_regulariser
from .model import NoiseSpec, Observation, Signal, SpectralSequence, make_signal, make_spectrum, observe
from .numerics import ConvergenceError
from .stopping import estimate, kappa_default, kappa_perturbed, residual_sq, stop_discrete, stop_tau

__version__ = "0.1.0"
