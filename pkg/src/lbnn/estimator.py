"""Scikit-learn-style front end over the posterior machinery.

The regressor wraps the finite- and zero-temperature predictive paths
behind the usual ``fit``/``predict`` API (with ``get_params`` /
``set_params`` from ``BaseEstimator``), so the model composes with
pipelines and model-selection utilities. All heavy lifting stays in the
functional core modules.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .feature_kernel import KernelEstimate, mean_kernel, zt_mean_kernel
from .model import Dataset, NetworkShape
from .posterior import predictive_moments
from .zero_temp import zt_predictive_moments, zt_scale_moments


class LinearBNNRegressor(RegressorMixin, BaseEstimator):
    """Bayesian deep linear network regression via scale mixtures.

    Parameters
    ----------
    hidden_widths : tuple of int
        Widths of the hidden layers (empty tuple for a single-layer
        network). All hidden widths must be at least the output
        dimension.
    beta : float
        Inverse likelihood variance; ``math.inf`` requests the
        zero-temperature (exact interpolation) posterior, which is
        available for depths 1 and 2.
    n_samples : int
        Monte Carlo scale samples per prediction or kernel call.
    seed : int
        Master seed; all randomness is derived from it deterministically.
    ess_floor : float
        Minimum effective sample size of the importance weights before
        the estimator refuses to answer.
    workers : int
        Worker threads for the sampling loops (does not change results).
    """

    def __init__(self, hidden_widths=(16,), beta=1.0, n_samples=2000,
                 seed=0, ess_floor=10.0, workers=1):
        self.hidden_widths = hidden_widths
        self.beta = beta
        self.n_samples = n_samples
        self.seed = seed
        self.ess_floor = ess_floor
        self.workers = workers

    def fit(self, X, y):
        """Store the training set and validate it against the architecture."""
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._y_was_1d = y.ndim == 1
        y2 = y.reshape(-1, 1) if self._y_was_1d else y
        self.X_ = np.asarray(X, dtype=float)
        self.Y_ = np.asarray(y2, dtype=float)
        self.n_features_in_ = X.shape[1]
        self.network_shape_ = self._shape(self.n_features_in_, self.Y_.shape[1])
        # Trip dimension/conditioning errors at fit time, not predict time.
        Dataset(self.X_, self.Y_, self.X_[:1])
        return self

    def _shape(self, n0: int, nd: int) -> NetworkShape:
        widths = (int(n0), *(int(w) for w in self.hidden_widths), int(nd))
        return NetworkShape(widths, beta=float(self.beta))

    def predict(self, X, return_cov: bool = False):
        """Posterior predictive mean, optionally with its covariance.

        The covariance is over the flattened (row-major) outputs when the
        targets are multi-output.
        """
        check_is_fitted(self, "X_")
        X = check_array(X)
        ds = Dataset(self.X_, self.Y_, X)
        shape = self.network_shape_
        if math.isinf(shape.beta):
            moments = zt_predictive_moments(ds, shape, self.n_samples, self.seed)
        else:
            moments = predictive_moments(
                ds, shape, self.n_samples, self.seed,
                workers=self.workers, ess_floor=self.ess_floor,
            )
        mean = moments.mean[:, 0] if self._y_was_1d else moments.mean
        if return_cov:
            return mean, moments.cov
        return mean

    def feature_kernel(self) -> KernelEstimate:
        """Posterior-mean first-layer feature kernel on the training set."""
        check_is_fitted(self, "X_")
        ds = Dataset(self.X_, self.Y_, self.X_[:1])
        shape = self.network_shape_
        if math.isinf(shape.beta):
            moments = zt_scale_moments(ds, shape, self.n_samples, self.seed)
            return zt_mean_kernel(ds, shape, moments)
        return mean_kernel(ds, shape, self.n_samples, self.seed,
                           workers=self.workers, ess_floor=self.ess_floor)
