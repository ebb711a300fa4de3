"""
Whitening of a correlated Gaussian estimate.

Given beta_hat ~ N(beta, sigma2 * Sigma) and a diagonal Delta >= Sigma, add
user noise omega ~ N(0, sigma2 * (Delta - Sigma)) to obtain the whitened
estimate beta_tilde = beta_hat + omega with diagonal covariance
sigma2 * Delta, together with the complement statistic
xi = Sigma^{-1} beta_hat - Delta^{-1} beta_tilde, which is independent of
beta_tilde and carries the information lost by whitening.

When sigma2 is unknown, `carve_noise` spends part of an independent chi^2
variance estimate to generate omega and returns the leftover estimate.
"""

from dataclasses import dataclass

import numpy as np

from .covmodel import CovarianceMatrix, PSD_RTOL, eigendecompose

RANK_RTOL = 1e-10  # eigenvalues of Delta - Sigma below this (relative) are rank-zeroed


class WhiteningMatrix:
    """Diagonal matrix Delta; must dominate Sigma in the PSD order."""

    def __init__(self, diag):
        diag = np.asarray(diag, dtype=float).ravel()
        if diag.size == 0 or np.any(diag <= 0) or not np.all(np.isfinite(diag)):
            raise ValueError("Delta diagonal must be positive and finite")
        self.diag = diag
        self.dim = diag.shape[0]
        # filled by validate_delta
        self.rank = None
        self.factor = None

    def __repr__(self):
        return "WhiteningMatrix(dim=%d, rank=%s)" % (self.dim, self.rank)


@dataclass
class WhitenedSplit:
    beta_tilde: np.ndarray
    xi: np.ndarray
    omega: np.ndarray
    a_matrix: np.ndarray  # Sigma^{-1} - Delta^{-1}, PSD


@dataclass
class CarvedNoise:
    omega: np.ndarray
    sigma_tilde_sq: float  # leftover variance estimate; None when n = d + r
    rank_r: int
    v: float


@dataclass
class LogOddsProfile:
    eta: np.ndarray
    mu: np.ndarray


def validate_delta(sigma, delta, rank_rtol=RANK_RTOL):
    """
    Check Delta >= Sigma (PSD order) and cache the rank r and a rank-r factor
    M with M M' = Delta - Sigma on the returned WhiteningMatrix.
    """
    if not isinstance(delta, WhiteningMatrix):
        delta = WhiteningMatrix(delta)
    if delta.dim != sigma.dim:
        raise ValueError("dimension mismatch between Sigma and Delta")
    gap = np.diag(delta.diag) - sigma.entries
    dec = eigendecompose(gap)
    w = dec.eigenvalues
    lam1_sigma = sigma.eigen().eigenvalues[0]
    if w[-1] < -PSD_RTOL * max(lam1_sigma, 1e-300):
        raise ValueError("Delta does not dominate Sigma (min eig(Delta-Sigma) = %g)" % w[-1])
    thresh = rank_rtol * max(w[0], 0.0)
    keep = w > thresh
    r = int(keep.sum())
    delta.rank = r
    delta.factor = dec.eigenvectors[:, keep] * np.sqrt(w[keep])
    return delta


def make_equi_delta(sigma, inflate=0.0):
    """
    The smallest scalar multiple of the identity dominating Sigma, built on
    the correlation scale: Delta_jj = lambda_max(corr(Sigma)) * Sigma_jj.

    With the exact scalar, A = Sigma^{-1} - Delta^{-1} is singular along the
    leading eigenvector; strategies that need A invertible (the pseudo-design
    lasso) should pass a small relative ``inflate`` such as 1e-6.
    """
    sd = np.sqrt(np.diag(sigma.entries))
    corr = sigma.entries / np.outer(sd, sd)
    lam1 = eigendecompose(corr).eigenvalues[0]
    return WhiteningMatrix((1.0 + inflate) * lam1 * sd ** 2)


def whiten_known_sigma(beta_hat, sigma, delta, sigma2, rng):
    """Whitened split with known noise level sigma2."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if delta.factor is None:
        delta = validate_delta(sigma, delta)
    beta_hat = np.asarray(beta_hat, dtype=float)
    omega = np.sqrt(sigma2) * (delta.factor @ rng.standard_normal(delta.rank))
    return _assemble_split(beta_hat, omega, sigma, delta)


def _assemble_split(beta_hat, omega, sigma, delta):
    beta_tilde = beta_hat + omega
    xi = np.linalg.solve(sigma.entries, beta_hat) - beta_tilde / delta.diag
    a_matrix = np.linalg.inv(sigma.entries) - np.diag(1.0 / delta.diag)
    return WhitenedSplit(beta_tilde=beta_tilde, xi=xi, omega=omega, a_matrix=a_matrix)


def carve_noise(sigma_hat_sq, n, d, sigma, delta, rng):
    """
    Generate omega ~ N(0, sigma2*(Delta-Sigma)) from an independent variance
    estimate sigma_hat_sq with (n-d) sigma_hat_sq ~ sigma2 * chi2_{n-d},
    leaving sigma_tilde_sq with (n-d-r) degrees of freedom when n > d + r.
    """
    if sigma_hat_sq <= 0:
        raise ValueError("sigma_hat_sq must be positive")
    if delta.factor is None:
        delta = validate_delta(sigma, delta)
    r = delta.rank
    if r == 0:
        return CarvedNoise(omega=np.zeros(d), sigma_tilde_sq=float(sigma_hat_sq),
                           rank_r=0, v=0.0)
    if n < d + r:
        raise ValueError("insufficient degrees of freedom: need n >= d + r = %d" % (d + r))
    omega_prime = rng.standard_normal(r)
    v = 1.0 if n == d + r else float(rng.beta(r / 2.0, (n - d - r) / 2.0))
    scale = np.sqrt((n - d) * v * sigma_hat_sq / (omega_prime @ omega_prime))
    omega = scale * (delta.factor @ omega_prime)
    sigma_tilde_sq = None
    if n > d + r:
        sigma_tilde_sq = float((n - d) * (1.0 - v) * sigma_hat_sq / (n - d - r))
    return CarvedNoise(omega=omega, sigma_tilde_sq=sigma_tilde_sq, rank_r=r, v=v)


def whiten_carved(beta_hat, sigma, delta, sigma_hat_sq, n, rng):
    """Whitened split via variance carving; returns (split, CarvedNoise)."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    d = beta_hat.shape[0]
    carved = carve_noise(sigma_hat_sq, n, d, sigma, delta, rng)
    return _assemble_split(beta_hat, carved.omega, sigma, delta), carved


def log_odds(beta, beta_tilde, delta, sigma2):
    """
    Conditional log-odds eta_j = 2|beta_tilde_j||beta_j| / (sigma2 Delta_jj)
    that sgn(beta_tilde_j) agrees with sgn(beta_j), and its distribution
    parameter mu_j = 2 beta_j^2 / (sigma2 Delta_jj).
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    beta = np.asarray(beta, dtype=float)
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    eta = 2.0 * np.abs(beta_tilde) * np.abs(beta) / (sigma2 * delta.diag)
    mu = 2.0 * beta ** 2 / (sigma2 * delta.diag)
    return LogOddsProfile(eta=eta, mu=mu)
