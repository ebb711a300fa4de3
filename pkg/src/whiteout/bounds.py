"""
Finite-sample power ceilings for whitening/knockoff procedures.

The diagonal of any valid whitening matrix is bounded below, order statistic
by order statistic, by b_k(Sigma) computed from the eigenstructure of Sigma.
Feeding these bounds into the explicit constants (C1, C2, C3 and the starred
combinations) yields an upper bound C1* k + C2* on the expected number of
rejections that holds for every ordering strategy.  Natural logarithms
throughout.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

DEFAULT_TOP_L = 50


@dataclass
class DeltaLowerBounds:
    b: np.ndarray  # non-decreasing, non-negative

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if np.any(self.b < 0) or np.any(np.diff(self.b) < -1e-12 * max(self.b.max(), 1)):
            raise ValueError("b must be non-negative and non-decreasing")


@dataclass
class BoundConstants:
    alpha: float
    delta: float
    p: float
    q_delta: float
    lambda_star: float
    c_h: float
    c1: float
    c2: float
    c3: float = None
    c1_star: dict = None  # keyed by mode "k" / "1"
    c2_star: dict = None


@dataclass
class BoundReport:
    k: int
    ceiling: float
    mode: str
    inputs: dict


def bound_constants(alpha, delta):
    """Closed forms for C1 and C2 (and the auxiliary p, q_delta, lambda*, c_h)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0 < delta < 1 - alpha:
        raise ValueError("delta must lie in (0, 1 - alpha)")
    p = alpha / (1 + alpha)
    q = (alpha + delta) / (1 + alpha + delta)
    lam = p + (q - p) / 4.0
    c_h = -(lam * math.log(q / lam) + (1 - lam) * math.log((1 - q) / (1 - lam)))
    c1 = (max(1.0, 4 * alpha * (1 + alpha + delta) / delta) + 1.0) / (1 + alpha)
    big = (math.e / (4 * math.sqrt(math.pi))
           * math.sqrt(1 + alpha) * q / math.sqrt(p * (1 - p))
           * c_h ** -1.5
           * min(2 * (q - p) / (p * (1 - q)), 1.0))
    c2 = (big + 2.0) / (1 + alpha)
    return BoundConstants(alpha=alpha, delta=delta, p=p, q_delta=q,
                          lambda_star=lam, c_h=c_h, c1=c1, c2=c2)


def c3_constant(alpha):
    """
    C3(alpha) = integral_0^inf [Phi(-(2+t) sqrt(c) / sqrt(2+2t)) + 1
    - Phi(t sqrt(c) / sqrt(2+2t))] dt with c = -log(alpha)/2, by adaptive
    quadrature with the tail truncated where the integrand is < 1e-12.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    c = -0.5 * math.log(alpha)
    sc = math.sqrt(c)

    def integrand(t):
        s = np.sqrt(2.0 + 2.0 * t)
        return stats.norm.cdf(-(2.0 + t) * sc / s) + stats.norm.sf(t * sc / s)

    upper = 10.0
    while integrand(upper) > 1e-12:
        upper *= 2.0
    val, _ = integrate.quad(integrand, 0.0, upper, epsabs=1e-6, limit=200)
    return val


def starred_constants(alpha, delta=None):
    """
    Constants of the rejection-ceiling theorem.  Default delta is
    sqrt(alpha) - alpha; mode "k" pairs ((2 + C3) C1, C2), mode "1" pairs
    ((1 + C3) C1, C1 + C2).
    """
    if delta is None:
        delta = math.sqrt(alpha) - alpha
    bc = bound_constants(alpha, delta)
    bc.c3 = c3_constant(alpha)
    bc.c1_star = {"k": (2 + bc.c3) * bc.c1, "1": (1 + bc.c3) * bc.c1}
    bc.c2_star = {"k": bc.c2, "1": bc.c1 + bc.c2}
    return bc


def delta_order_lower_bounds(decomp, top_l=None):
    """
    b_k(Sigma) = max over (leading top_l) eigenvectors of lambda_l times the
    sum of the k smallest squared entries of u_l.  Every l gives a valid
    lower bound for the k-th smallest diagonal entry of a whitening matrix,
    so restricting l only loosens the result.
    """
    lam = decomp.eigenvalues
    d = lam.shape[0]
    L = min(d, DEFAULT_TOP_L) if top_l is None else min(int(top_l), d)
    u2 = np.sort(decomp.eigenvectors[:, :L] ** 2, axis=0)
    cums = np.cumsum(u2, axis=0) * np.clip(lam[:L], 0.0, None)
    return DeltaLowerBounds(b=cums.max(axis=1))


def _condition_lhs(beta_ordered_sq, sigma2, b_vals, mode):
    numer = 2.0 * (beta_ordered_sq if mode == "k" else
                   np.full_like(beta_ordered_sq, beta_ordered_sq[0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = np.where(numer == 0, 0.0,
                       np.where(b_vals > 0, numer / (sigma2 * np.maximum(b_vals, 1e-300)),
                                np.inf))
    return lhs


def theorem_main_bound(beta_ordered_sq, sigma2, b, alpha, mode="k", delta=None):
    """
    Rejection ceiling C1* k + C2* at the smallest k with
    2 beta^2_(k) / (sigma2 b_k) < -log(alpha)/2 (mode "1" uses beta^2_(1)).
    k = d + 1 with an infinite ceiling when no k qualifies.
    """
    beta_ordered_sq = np.asarray(beta_ordered_sq, dtype=float)
    if np.any(np.diff(beta_ordered_sq) > 0):
        raise ValueError("beta_ordered_sq must be sorted descending")
    d = beta_ordered_sq.shape[0]
    lhs = _condition_lhs(beta_ordered_sq, sigma2, b.b, mode)
    crit = -0.5 * math.log(alpha)
    hit = np.nonzero(lhs < crit)[0]
    bc = starred_constants(alpha, delta)
    if hit.size == 0:
        return BoundReport(k=d + 1, ceiling=np.inf, mode="fixed-support-l" + mode,
                           inputs={"alpha": alpha, "sigma2": sigma2})
    k = int(hit[0] + 1)
    return BoundReport(k=k, ceiling=bc.c1_star[mode] * k + bc.c2_star[mode],
                       mode="fixed-support-l" + mode,
                       inputs={"alpha": alpha, "sigma2": sigma2})


def theorem_random_bound(beta_ordered_sq, sigma2, b, alpha, pi1, mode="k", delta=None):
    """
    Random-support variant: the condition at k reads off b at the stretched
    index floor(k / pi1), capped at d.  Same constants as the main theorem.
    """
    if not 0 < pi1 <= 1:
        raise ValueError("pi1 must lie in (0, 1]")
    beta_ordered_sq = np.asarray(beta_ordered_sq, dtype=float)
    if np.any(np.diff(beta_ordered_sq) > 0):
        raise ValueError("beta_ordered_sq must be sorted descending")
    d = beta_ordered_sq.shape[0]
    idx = np.minimum(np.floor(np.arange(1, d + 1) / pi1).astype(int), d) - 1
    lhs = _condition_lhs(beta_ordered_sq, sigma2, b.b[idx], mode)
    crit = -0.5 * math.log(alpha)
    hit = np.nonzero(lhs < crit)[0]
    bc = starred_constants(alpha, delta)
    if hit.size == 0:
        return BoundReport(k=d + 1, ceiling=np.inf, mode="random-support",
                           inputs={"alpha": alpha, "sigma2": sigma2, "pi1": pi1})
    k = int(hit[0] + 1)
    return BoundReport(k=k, ceiling=bc.c1_star[mode] * k + bc.c2_star[mode],
                       mode="random-support",
                       inputs={"alpha": alpha, "sigma2": sigma2, "pi1": pi1})


def mcc_closed_form(d, rho):
    """Back-of-envelope ceiling 13 log(d)/rho + 42 for the shared-control case."""
    if d < 2 or not 0 < rho < 1:
        raise ValueError("need d >= 2 and rho in (0, 1)")
    return 13.0 * math.log(d) / rho + 42.0


def snr_threshold(delta_jj, alpha):
    """Signals with |beta_j / sigma| below sqrt(-Delta_jj log(alpha) / 2) are lost."""
    if delta_jj <= 0:
        raise ValueError("Delta_jj must be positive")
    return math.sqrt(-delta_jj * math.log(alpha) / 2.0)


def delta_diagnostic(delta, alpha, thresholds=(6.0, 11.7)):
    """
    Per-variable SNR thresholds for a whitening matrix plus counts of
    Delta_jj values below each reference level.
    """
    snr = np.sqrt(-delta.diag * math.log(alpha) / 2.0)
    counts = {float(t): int(np.count_nonzero(delta.diag < t)) for t in thresholds}
    return {"snr_thresholds": snr, "counts_below": counts,
            "delta_min": float(delta.diag.min()), "delta_max": float(delta.diag.max())}
