"""Two-stage Bayesian propensity score analysis.

Stage one estimates a posterior over study designs induced by a logistic
propensity model and one of five implementations (quantile
stratification, nearest-neighbour matching, random in-caliper matching,
inverse probability weighting, doubly robust weighting); stage two
estimates the treatment effect conditional on each design and pools the
results with multiple-imputation-style combining rules, splitting total
uncertainty into between- and within-design components.
"""

__version__ = "0.1.0"

from ._backend import backend_name
from .analysis import (
    ConditionalEstimate,
    asymptotic_conditional,
    dr_estimate,
    dr_predictions,
    dr_variance,
    fixed_weight_variance,
    hajek_estimate,
    hc0_variance,
    strat_conditional,
    strat_ols,
)
from .combine import CombinedInference, combine
from .data import Dataset, DesignFrame, DGPConfig, generate, load_csv, write_csv
from .design import (
    Design,
    ImplementationSpec,
    caliper_match,
    draw_designs,
    ipw_weights,
    nn_match,
    stratify,
)
from .errors import (
    AnalysisError,
    BpsaError,
    ChainError,
    DataError,
    DesignError,
    SeparationError,
)
from .montecarlo import (
    Cell,
    RunConfig,
    SimulationReport,
    full_grid,
    ps_model_spec,
    run_bpsa,
    run_psa,
    run_simulation,
)
from .ps_model import AlphaDraw, PSDraw, PSModelSpec, fit_mle, predict_ps, sample_posterior

__all__ = [
    "AlphaDraw",
    "AnalysisError",
    "BpsaError",
    "Cell",
    "ChainError",
    "CombinedInference",
    "ConditionalEstimate",
    "DGPConfig",
    "DataError",
    "Dataset",
    "Design",
    "DesignError",
    "DesignFrame",
    "ImplementationSpec",
    "PSDraw",
    "PSModelSpec",
    "RunConfig",
    "SeparationError",
    "SimulationReport",
    "asymptotic_conditional",
    "backend_name",
    "caliper_match",
    "combine",
    "dr_estimate",
    "dr_predictions",
    "dr_variance",
    "draw_designs",
    "fit_mle",
    "fixed_weight_variance",
    "full_grid",
    "generate",
    "hajek_estimate",
    "hc0_variance",
    "ipw_weights",
    "load_csv",
    "nn_match",
    "predict_ps",
    "ps_model_spec",
    "run_bpsa",
    "run_psa",
    "run_simulation",
    "sample_posterior",
    "strat_conditional",
    "strat_ols",
    "stratify",
    "write_csv",
]
