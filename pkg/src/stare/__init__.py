"""Structurally aware robust selection of the number of mixture components.

Fit candidate mixtures with EM, estimate how far each fitted component is
from the data assigned to it, and choose the component count whose
per-component divergences stay within a misspecification tolerance rho at
the smallest penalized cost.  The tolerance can be swept exactly (the loss
is piecewise linear in rho) or calibrated from labeled data.
"""

__version__ = "0.1.0"

from .data import Dataset, read_csv, write_csv
from .divergence import (DivergenceEstimate, KernelConfig, KnnConfig,
                         digamma, estimator_from_tag, kl_gaussian_closed_form,
                         kl_knn, kl_knn_independent, kl_plugin_discrete,
                         knn_radii, median_heuristic_bandwidth, mmd_estimate,
                         mmd_vstat)
from .em import (EmConfig, FittedModel, bic, fit_em, responsibilities,
                 sample_assignments)
from .errors import (ConfigError, DataError, DegenerateFitError, EstimatorError,
                     InsufficientSamplesError, NumericalError, StareError)
from .evaluation import (CalibrationResult, calibrate_rho, choose_k_for_rho,
                         f_measure)
from .families import (GAUSSIAN_1D, GAUSSIAN_MV, POISSON, Family,
                       GaussianComponent, MixtureParams, MvGaussianComponent,
                       PoissonComponent, component_log_density, get_family,
                       mixture_log_density, sample_mixture)
from .generate import (GeneratorSpec, SCENARIO_PRESETS, sample_generator,
                       sample_mv_skew_normal, sample_skew_normal,
                       scenario_spec, skew_normal_logpdf,
                       squared_exponential_correlation)
from .selection import (CandidateFit, ComponentDivergence,
                        ComponentDivergenceProfile, LossCurve, SelectionResult,
                        StableRegion, argmin_partition, component_divergences,
                        default_rho_max, fit_candidates, loss_curve,
                        penalized_loss, select_k, stable_region_select,
                        structurally_aware_loss)

__all__ = [
    "__version__",
    # data
    "Dataset", "read_csv", "write_csv",
    # families / model core
    "Family", "GaussianComponent", "MvGaussianComponent", "PoissonComponent",
    "MixtureParams", "GAUSSIAN_1D", "GAUSSIAN_MV", "POISSON", "get_family",
    "component_log_density", "mixture_log_density", "sample_mixture",
    # generators
    "GeneratorSpec", "SCENARIO_PRESETS", "scenario_spec", "sample_generator",
    "sample_skew_normal", "sample_mv_skew_normal", "skew_normal_logpdf",
    "squared_exponential_correlation",
    # inference
    "EmConfig", "FittedModel", "fit_em", "responsibilities",
    "sample_assignments", "bic",
    # divergence
    "DivergenceEstimate", "KnnConfig", "KernelConfig", "digamma", "knn_radii",
    "kl_plugin_discrete", "kl_knn", "kl_knn_independent",
    "kl_gaussian_closed_form", "mmd_vstat", "mmd_estimate",
    "median_heuristic_bandwidth", "estimator_from_tag",
    # selection
    "ComponentDivergence", "ComponentDivergenceProfile", "LossCurve",
    "CandidateFit", "SelectionResult", "StableRegion", "component_divergences",
    "structurally_aware_loss", "penalized_loss", "loss_curve", "fit_candidates",
    "select_k", "argmin_partition", "stable_region_select", "default_rho_max",
    # evaluation
    "f_measure", "calibrate_rho", "choose_k_for_rho", "CalibrationResult",
    # errors
    "StareError", "ConfigError", "DataError", "NumericalError",
    "DegenerateFitError", "InsufficientSamplesError", "EstimatorError",
]
