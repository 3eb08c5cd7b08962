"""Posterior predictives and feature kernels for finite deep linear
Bayesian neural networks.

The posterior of an overparameterized deep linear network is represented
as a data-reweighted scale mixture of Gaussian-process predictors over
the output channels. This package computes exact (Monte Carlo) and
asymptotic predictive statistics and first-layer feature kernels in that
representation, and validates them against independent weight-space
oracles.
"""

from .asymptotics import (RegimeRatios, care_li_sompolinsky, kernel_aitchison,
                          kernel_large_p, kernel_li_sompolinsky, kernel_wide)
from .datasets import generate_dataset
from .estimator import LinearBNNRegressor
from .exceptions import (ChainDiagnosticError, DegenerateWeightsError,
                         EstimatorDiagnosticError, QuadratureError)
from .feature_kernel import (REGIMES, KernelEstimate, kernel_correction,
                             kernel_correction_scalar, mean_kernel,
                             zt_mean_kernel)
from .linalg import kron, psd_sqrt, similarity_sqrt
from .model import Dataset, GramSet, NetworkShape, build_gram_set
from .posterior import (GPComponents, PredictiveMoments, gp_components,
                        gp_components_scalar, log_mgf, predictive_moments)
from .scale_prior import (ScaleSample, log_scale_density_d2, sample_scale,
                          sample_scale_many, sample_wishart,
                          sample_wishart_many)
from .zero_temp import (MgigParams, ScaleMoments, mgig_log_density,
                        mgig_params_from_data, sample_gig, sample_mgig_mcmc,
                        zt_covariance, zt_mean, zt_predictive_moments,
                        zt_scale_moments)

__version__ = "0.1.0"

__all__ = [
    "ChainDiagnosticError", "Dataset", "DegenerateWeightsError",
    "EstimatorDiagnosticError", "GPComponents", "GramSet", "KernelEstimate",
    "LinearBNNRegressor", "MgigParams", "NetworkShape", "PredictiveMoments",
    "QuadratureError", "REGIMES", "RegimeRatios", "ScaleMoments",
    "ScaleSample", "build_gram_set", "care_li_sompolinsky",
    "generate_dataset", "gp_components", "gp_components_scalar",
    "kernel_aitchison", "kernel_correction", "kernel_correction_scalar",
    "kernel_large_p", "kernel_li_sompolinsky", "kernel_wide", "kron",
    "log_mgf", "log_scale_density_d2", "mean_kernel", "mgig_log_density",
    "mgig_params_from_data", "predictive_moments", "psd_sqrt", "sample_gig",
    "sample_mgig_mcmc", "sample_scale", "sample_scale_many", "sample_wishart",
    "sample_wishart_many", "similarity_sqrt", "zt_covariance", "zt_mean",
    "zt_mean_kernel", "zt_predictive_moments", "zt_scale_moments",
]
