"""
Selective SeqStep on ordered binary p-values, the knockoff+ threshold on
W statistics, and the rejection-count identity linking the two.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class BinaryPValueSeq:
    """Hypotheses in testing order with p-values restricted to {1/2, 1}."""

    indices: np.ndarray
    p_tilde: np.ndarray
    truth: np.ndarray = None  # optional non-null flags, for scoring only

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)
        self.p_tilde = np.asarray(self.p_tilde, dtype=float)
        if self.indices.shape != self.p_tilde.shape:
            raise ValueError("indices and p_tilde must have matching length")
        if not np.all((self.p_tilde == 0.5) | (self.p_tilde == 1.0)):
            raise ValueError("p_tilde values must lie in {1/2, 1}")
        if np.unique(self.indices).size != self.indices.size:
            raise ValueError("indices must be distinct")


@dataclass
class SeqStepResult:
    k_hat: int
    fdp_hat_path: np.ndarray
    rejections: np.ndarray  # sorted hypothesis indices
    rejection_count: int


def fdp_hat_path(seq):
    """
    Running estimate (1 + #{j<=k : p=1}) / #{j<=k : p=1/2}; +inf where the
    denominator is zero.
    """
    ones = np.cumsum(seq.p_tilde == 1.0)
    halves = np.cumsum(seq.p_tilde == 0.5)
    with np.errstate(divide="ignore"):
        path = np.where(halves > 0, (1.0 + ones) / np.maximum(halves, 1), np.inf)
    return path


def run_seqstep(seq, alpha):
    """Stop at k_hat = max{k : FDP-hat_k <= alpha}; reject the p=1/2 prefix."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    path = fdp_hat_path(seq)
    ok = np.nonzero(path <= alpha)[0]
    k_hat = int(ok[-1] + 1) if ok.size else 0
    mask = seq.p_tilde[:k_hat] == 0.5
    rejections = np.sort(seq.indices[:k_hat][mask])
    return SeqStepResult(k_hat=k_hat, fdp_hat_path=path,
                         rejections=rejections, rejection_count=int(mask.sum()))


def rejection_count_identity(k_hat, d, alpha):
    """
    Closed form R = ceil((1 + k_hat) / (1 + alpha)), valid in the interior
    0 < k_hat < d.  Returns (count, applicable); at the boundaries the count
    is 0 by convention (k_hat = 0) or must be taken from the sequence itself
    (k_hat = d) and the flag is False.
    """
    if not 0 <= k_hat <= d:
        raise ValueError("k_hat out of range")
    if k_hat == 0:
        return 0, False
    count = math.ceil((1 + k_hat) / (1 + alpha))
    return count, k_hat < d


def knockoff_plus_threshold(W, alpha):
    """
    Adaptive knockoff+ threshold: smallest candidate t (positive |W_j|) with
    (1 + #{W_j <= -t}) / #{W_j >= t} <= alpha.  Returns (t_hat, rejections);
    t_hat = +inf and an empty set when no candidate qualifies.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    W = np.asarray(W, dtype=float)
    for t in np.unique(np.abs(W[W != 0])):
        denom = np.count_nonzero(W >= t)
        if denom == 0:
            continue
        if (1 + np.count_nonzero(W <= -t)) / denom <= alpha:
            return float(t), np.nonzero(W >= t)[0]
    return np.inf, np.array([], dtype=int)
