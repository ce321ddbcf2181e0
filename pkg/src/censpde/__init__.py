"""Scalable Bayesian spatial regression for left-censored point data.

A Matern Gaussian process is approximated by a Gaussian Markov random field
on a triangulated mesh (SPDE finite elements); censored responses are data-
augmented inside an adaptive Metropolis-within-Gibbs sampler; prediction
surfaces come with full posterior uncertainty.
"""

__version__ = "0.1.0"

from .data import CensoredDataset, ColumnMapping, read_dataset, write_dataset
from .errors import (AssemblyError, CenspdeError, ConfigError, DataError,
                     DegenerateInputError, MeshError, NumericalError,
                     OutsideMeshError)
from .fem import FemMatrices, assemble_fem, projection_matrix
from .mcmc import (CensoredGibbsSampler, ChainState, McmcConfig,
                   PosteriorSamples, Priors, gelman_rubin, run_chain,
                   run_chains, truncated_normal_below)
from .mesh import (Mesh, MeshOptions, PointLocation, build_mesh,
                   default_options, locate, read_mesh, write_mesh)
from .predict import PredictionGrid, PredictionSurface, predict
from .simulate import (ScenarioResult, SimConfig, apply_censoring,
                       run_replicate, run_scenario, run_study,
                       simulate_matern_field, summarize)
from .spde import (MaternParams, PrecisionBuilder, SpdePrecision,
                   approx_covariance, build_precision, matern_correlation,
                   matern_nu1)
from .variogram import (EmpiricalVariogram, InitEstimates,
                        empirical_semivariogram, fit_matern_variogram,
                        initial_estimates, ols_residuals)

__all__ = [
    "AssemblyError", "CensoredDataset", "CensoredGibbsSampler", "CenspdeError",
    "ChainState", "ColumnMapping", "ConfigError", "DataError",
    "DegenerateInputError", "EmpiricalVariogram", "FemMatrices",
    "InitEstimates", "MaternParams", "McmcConfig", "Mesh", "MeshError",
    "MeshOptions", "NumericalError", "OutsideMeshError", "PointLocation",
    "PosteriorSamples", "PrecisionBuilder", "PredictionGrid",
    "PredictionSurface", "Priors", "ScenarioResult", "SimConfig",
    "SpdePrecision", "apply_censoring", "approx_covariance", "assemble_fem",
    "build_mesh", "build_precision", "default_options",
    "empirical_semivariogram", "fit_matern_variogram", "gelman_rubin",
    "initial_estimates", "locate", "matern_correlation", "matern_nu1",
    "ols_residuals", "predict", "projection_matrix", "read_dataset",
    "read_mesh", "run_chain", "run_chains", "run_replicate", "run_scenario",
    "run_study", "simulate_matern_field", "summarize",
    "truncated_normal_below", "write_dataset", "write_mesh",
]
