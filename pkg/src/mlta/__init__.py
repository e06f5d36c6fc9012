"""Mixture of latent trait analyzers with concomitant variables for binary
bipartite networks."""

from .bootstrap import (BootstrapResult, BootstrapSpec, align_labels,
                        bootstrap_se, resample)
from .data import (CovariateDesign, Dataset, DichotomizationRule,
                   IncidenceMatrix, RawSurveyTable, complete_cases,
                   dichotomize, encode_covariates, tie_density)
from .errors import ConfigError, DataError, FitFailed, MLTAError, NumericalError
from .model import (CONSTRAINED, UNCONSTRAINED, MLTAModel, ModelConfig, bic,
                    connection_prob, gating_probs, param_count)
from .posthoc import (adjusted_rand_index, group_probs_by_covariate, map_assign,
                      predicted_skill_probs)
from .selection import SelectionGrid, SelectionTable, grid_search, select_best
from .synth import (QuadratureSpec, SimTruth, demo_model, exact_responsibilities,
                    gh_loglik, lc_loglik, recovery_model, simulate)
from .variational import (FitOptions, FitResult, VariationalState, elbo, fit,
                          variational_state)

__version__ = "0.1.0"
