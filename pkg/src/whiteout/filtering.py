"""
The three-stage whitening knockoff filter.

Stage 1 whitens beta_hat into (beta_tilde, xi).  Stage 2 chooses a testing
order and a direction psi_j in {-1, +1} per hypothesis, looking only at xi
and |beta_tilde| (plus the true beta in oracle mode).  Stage 3 converts the
signs of beta_tilde into binary p-values and runs Selective SeqStep.

Ordering strategies: the oracle (descending conditional log-odds), the lasso
lambda-signed-max on a pseudo-design, or a user-supplied W+ statistic that is
antisymmetric under sign flips of beta_tilde.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.linear_model import lasso_path

from . import whitening as wh
from .seqstep import BinaryPValueSeq, run_seqstep

A_RANK_RTOL = 1e-10


@dataclass
class OrderingDecision:
    order: np.ndarray  # position -> hypothesis index
    psi: np.ndarray    # direction guess per hypothesis, entries +-1

    def __post_init__(self):
        self.order = np.asarray(self.order, dtype=int)
        self.psi = np.asarray(self.psi, dtype=float)
        d = self.order.shape[0]
        if np.unique(self.order).size != d or self.psi.shape[0] != d:
            raise ValueError("order must be a permutation with matching psi")
        if not np.all(np.abs(self.psi) == 1.0):
            raise ValueError("psi entries must be +-1")


@dataclass
class WStatistics:
    w: np.ndarray
    w_star: np.ndarray
    w_plus: np.ndarray = None
    w_minus: np.ndarray = None


@dataclass
class PseudoDesign:
    x_star: np.ndarray
    x_knock_star: np.ndarray
    y_star: np.ndarray


@dataclass
class FilterResult:
    rejections: np.ndarray
    directions: np.ndarray  # psi restricted to the rejected hypotheses
    seqstep: object
    ordering: OrderingDecision
    eta: object = None          # LogOddsProfile, oracle runs only
    w_stats: WStatistics = None
    pvalues: object = None      # BinaryPValueSeq actually tested
    diagnostics: dict = field(default_factory=dict)


def oracle_ordering(beta, split, delta, sigma2):
    """
    Infeasible benchmark: psi_j = sgn(beta_j) (+1 at nulls) and hypotheses
    sorted by descending log-odds, ties broken by ascending index.
    """
    beta = np.asarray(beta, dtype=float)
    profile = wh.log_odds(beta, split.beta_tilde, delta, sigma2)
    psi = np.where(beta != 0, np.sign(beta), 1.0)
    order = np.argsort(-profile.eta, kind="stable")
    return OrderingDecision(order=order, psi=psi), profile


def build_pseudo_design(split, sigma, delta):
    """
    Pseudo-design with Gram X*'X* = X~*'X~* = Sigma^{-1} and
    X*'X~* = Sigma^{-1} - 2 Delta^{-1}, and pseudo-response
    y* = (A^{-1/2} xi; Delta^{-1/2} beta_tilde) ~ N(X* beta, sigma2 I_{2d}).
    """
    A = split.a_matrix
    w, V = np.linalg.eigh(A)
    if w.min() <= A_RANK_RTOL * w.max():
        raise np.linalg.LinAlgError(
            "A = Sigma^{-1} - Delta^{-1} is singular; inflate Delta slightly")
    a_half = (V * np.sqrt(w)) @ V.T
    a_neg_half = (V / np.sqrt(w)) @ V.T
    d_half_inv = 1.0 / np.sqrt(delta.diag)
    x_star = np.vstack([a_half, np.diag(d_half_inv)])
    x_knock_star = np.vstack([a_half, -np.diag(d_half_inv)])
    y_star = np.concatenate([a_neg_half @ split.xi, d_half_inv * split.beta_tilde])
    return PseudoDesign(x_star=x_star, x_knock_star=x_knock_star, y_star=y_star)


def build_noise_pseudo_design(beta_hat, sigma, omega_star, delta=None):
    """
    Package-friendly variant for full-rank carving noise
    omega* ~ N(0, sigma2 I_d): X* = (Sigma^{-1/2}; 0),
    y* = (Sigma^{-1/2} beta_hat; omega*).  When a whitening matrix is given,
    the knockoff block is filled via the classical construction with
    D = 2 Delta^{-1}; otherwise it is left None for an external knockoff
    package to generate.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    omega_star = np.asarray(omega_star, dtype=float)
    d = beta_hat.shape[0]
    if omega_star.shape[0] != d:
        raise ValueError("needs full-rank noise (r = d); got r < d")
    dec = sigma.eigen()
    w = dec.eigenvalues
    if w.min() <= A_RANK_RTOL * w.max():
        raise np.linalg.LinAlgError("Sigma is singular")
    U = dec.eigenvectors
    prec_half = (U / np.sqrt(w)) @ U.T
    x_star = np.vstack([prec_half, np.zeros((d, d))])
    x_knock_star = None
    if delta is not None:
        from .standard_knockoffs import construct_knockoff_matrix
        x_knock_star = construct_knockoff_matrix(x_star, 2.0 / delta.diag).x_tilde
    y_star = np.concatenate([prec_half @ beta_hat, omega_star])
    return PseudoDesign(x_star=x_star, x_knock_star=x_knock_star, y_star=y_star)


def default_lasso_grid(design, response, n_points=50, floor=1e-3):
    lam_max = np.abs(design.T @ response).max() / design.shape[0]
    if lam_max == 0:
        return None
    return np.geomspace(lam_max, floor * lam_max, n_points)


def lasso_entry_path(design, response, grid=None):
    """
    Per-column lasso entry level: the largest penalty on a descending
    geometric grid at which the coefficient is nonzero (0 if never active).
    Coordinate descent with warm starts along the path.
    """
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if grid is None:
        grid = default_lasso_grid(design, response)
        if grid is None:  # response identically zero
            return np.zeros(design.shape[1])
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2 or np.any(np.diff(grid) >= 0) or np.any(grid <= 0):
        raise ValueError("grid must be positive and strictly descending")
    _, coefs, _ = lasso_path(design, response, alphas=grid,
                             max_iter=10_000, tol=1e-7)
    active = coefs != 0  # (d, n_alphas), alphas descending
    entry = np.zeros(design.shape[1])
    any_active = active.any(axis=1)
    entry[any_active] = grid[active.argmax(axis=1)[any_active]]
    return entry


def lasso_signed_max_ordering(pd, beta_tilde):
    """
    Lambda-signed-max: fit the lasso path on [X* X~*], take entry levels
    (Z, Z_tilde) and set W_j = max(Z_j, Z~_j) sgn(Z_j - Z~_j).  Order by
    descending |W| (ties by index, zeros last); psi_j = sgn(W_j) sgn(beta_tilde_j).
    """
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    d = beta_tilde.shape[0]
    full = np.hstack([pd.x_star, pd.x_knock_star])
    entry = lasso_entry_path(full, pd.y_star)
    z, z_tilde = entry[:d], entry[d:]
    w = np.maximum(z, z_tilde) * np.sign(z - z_tilde)
    return _w_based_decision(w, beta_tilde, w_plus=z, w_minus=z_tilde)


def wplus_ordering(w_plus_fn, split):
    """
    Ordering from a user W+ statistic: W-_j is W+ evaluated with the sign of
    beta_tilde_j flipped, W_j = max(W+_j, W-_j) sgn(W+_j - W-_j).
    """
    beta_tilde = split.beta_tilde
    d = beta_tilde.shape[0]
    w_plus = np.asarray(w_plus_fn(split.xi, beta_tilde), dtype=float)
    w_minus = np.empty(d)
    for j in range(d):
        flipped = beta_tilde.copy()
        flipped[j] = -flipped[j]
        w_minus[j] = np.asarray(w_plus_fn(split.xi, flipped), dtype=float)[j]
    w = np.maximum(w_plus, w_minus) * np.sign(w_plus - w_minus)
    return _w_based_decision(w, beta_tilde, w_plus=w_plus, w_minus=w_minus)


def _w_based_decision(w, beta_tilde, w_plus=None, w_minus=None):
    psi = np.sign(w) * np.sign(beta_tilde)
    psi[psi == 0] = 1.0
    order = np.argsort(-np.abs(w), kind="stable")
    stats = WStatistics(w=w, w_star=w * np.sign(beta_tilde),
                        w_plus=w_plus, w_minus=w_minus)
    return stats, OrderingDecision(order=order, psi=psi)


def binary_pvalues(ordering, beta_tilde, truth=None):
    """p_j = 1/2 where sgn(beta_tilde_j) = psi_j, else 1 (exact zeros -> 1)."""
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    order = ordering.order
    agree = np.sign(beta_tilde[order]) == ordering.psi[order]
    p_tilde = np.where(agree, 0.5, 1.0)
    flags = None if truth is None else np.asarray(truth, dtype=bool)[order]
    return BinaryPValueSeq(indices=order, p_tilde=p_tilde, truth=flags)


def run_whitening_filter(beta_hat, sigma, delta, alpha, rng, sigma2=None,
                         sigma_hat_sq=None, n=None, strategy="lasso",
                         beta=None, w_plus=None):
    """
    Full pipeline.  Noise mode is either known sigma2 or carving from
    (sigma_hat_sq, n).  strategy: "oracle" (requires beta), "lasso", or
    "user-wplus" (requires w_plus callable).
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    delta = wh.validate_delta(sigma, delta)
    if sigma2 is not None:
        split = wh.whiten_known_sigma(beta_hat, sigma, delta, sigma2, rng)
        s2 = sigma2
    elif sigma_hat_sq is not None and n is not None:
        split, carved = wh.whiten_carved(beta_hat, sigma, delta,
                                         sigma_hat_sq, n, rng)
        s2 = carved.sigma_tilde_sq if carved.sigma_tilde_sq is not None else sigma_hat_sq
    else:
        raise ValueError("provide sigma2, or sigma_hat_sq with n")

    eta = None
    w_stats = None
    if strategy == "oracle":
        if beta is None:
            raise ValueError("oracle strategy requires the true beta")
        ordering, eta = oracle_ordering(beta, split, delta, s2)
    elif strategy == "lasso":
        pd = build_pseudo_design(split, sigma, delta)
        w_stats, ordering = lasso_signed_max_ordering(pd, split.beta_tilde)
    elif strategy == "user-wplus":
        if w_plus is None:
            raise ValueError("user-wplus strategy requires a w_plus callable")
        w_stats, ordering = wplus_ordering(w_plus, split)
    else:
        raise ValueError("unknown strategy %r" % strategy)

    seq = binary_pvalues(ordering, split.beta_tilde)
    res = run_seqstep(seq, alpha)
    diagnostics = {
        "delta_min": float(delta.diag.min()),
        "delta_max": float(delta.diag.max()),
        "rank_r": int(delta.rank),
    }
    return FilterResult(rejections=res.rejections,
                        directions=ordering.psi[res.rejections],
                        seqstep=res, ordering=ordering, eta=eta,
                        w_stats=w_stats, pvalues=seq, diagnostics=diagnostics)
