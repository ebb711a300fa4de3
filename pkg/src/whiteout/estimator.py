"""Thin scikit-learn-style wrapper around the whitening filter."""

import numpy as np
from sklearn.base import BaseEstimator

from . import filtering, whitening as wh
from .covmodel import CovarianceMatrix


class WhiteningKnockoffSelector(BaseEstimator):
    """
    Variable selector with FDR control for a Gaussian estimate.

    Parameters
    ----------
    alpha : float
        Target false discovery rate.
    strategy : str
        "lasso" (default) or "oracle" (requires `beta` at fit time).
    sigma2 : float or None
        Known noise level; when None, supply (sigma_hat_sq, n) to fit.
    delta : array-like or None
        Whitening diagonal; None selects the scalar lambda_max construction.
    random_state : int or None
        Seed for the whitening noise.
    """

    def __init__(self, alpha=0.2, strategy="lasso", sigma2=1.0, delta=None,
                 random_state=None):
        self.alpha = alpha
        self.strategy = strategy
        self.sigma2 = sigma2
        self.delta = delta
        self.random_state = random_state

    def fit(self, beta_hat, sigma, beta=None, sigma_hat_sq=None, n=None):
        """
        Run the filter on the estimate `beta_hat` with covariance `sigma`
        (array or CovarianceMatrix).
        """
        beta_hat = np.asarray(beta_hat, dtype=float)
        if not isinstance(sigma, CovarianceMatrix):
            sigma = CovarianceMatrix(sigma)
        if self.delta is None:
            # the lasso pseudo-design needs A = Sigma^{-1} - Delta^{-1}
            # invertible, which the exact scalar construction is not
            inflate = 1e-6 if self.strategy == "lasso" else 0.0
            delta = wh.make_equi_delta(sigma, inflate=inflate)
        else:
            delta = wh.WhiteningMatrix(self.delta)
        rng = np.random.default_rng(self.random_state)
        result = filtering.run_whitening_filter(
            beta_hat, sigma, delta, self.alpha, rng,
            sigma2=self.sigma2 if sigma_hat_sq is None else None,
            sigma_hat_sq=sigma_hat_sq, n=n,
            strategy=self.strategy, beta=beta)
        self.result_ = result
        self.rejections_ = result.rejections
        self.directions_ = result.directions
        self.n_features_in_ = beta_hat.shape[0]
        return self

    def get_support(self, indices=False):
        if indices:
            return self.rejections_
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.rejections_] = True
        return mask
