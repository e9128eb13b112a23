"""Double-sparsity kernel learning: joint variable selection and data extraction."""

from .exceptions import (
    ConvergenceError, DataError, DimensionError, DoskError, LabelError, ModelFormatError, SolverError,
)
from .kernel import KernelSpec, Linearization, eval_weighted_kernel, gram_matrix, kernel_gradient, linearize
from .loss import LossSpec, loss_derivative, loss_value
from .model import (
    CvGrid, CvResult, DOSKClassifier, DOSKRegressor, DoskModel, cross_validate, fit_model, load_model, predict,
    save_model, selected_points, selected_variables,
)
from .simdata import Dataset, SelectionRates, mcr, mpe, selection_rates, standardize
from .solver import FitTrace, Hyperparams, IterateState, SolverConfig, fit_dosk, objective

__version__ = "0.1.0"
