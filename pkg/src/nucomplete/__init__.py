"""Matrix completion under non-uniform sampling with weighted trace-norm penalties."""
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DimensionError,
    DomainError,
    InfeasibleError,
    InsufficientDataError,
    NucompleteError,
    SolverFailure,
)
from .estimators import (
    EstimatorSpec,
    fit_ipw_uniform,
    fit_margin,
    fit_nu_recommend,
    fit_uniform,
    run_estimator,
)
from .sampling import ObservationSet, SamplingEstimate, estimate_pmlsvt, estimate_rank1
from .solver import FitResult, SolverConfig, fit_path
from .weights import WeightConstructionConfig, construct_weights

__version__ = "0.1.0"
