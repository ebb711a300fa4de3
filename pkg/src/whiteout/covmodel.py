"""
Covariance-matrix data types, eigenstructure helpers, and the covariance
families used by the simulation scenarios (equicorrelated, shared-control,
factor models, design Grams).

All randomness flows through explicit numpy Generators.  Scenario-level
reproducibility uses splittable substreams derived from one 64-bit seed; see
`substream`.
"""

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

SYM_RTOL = 1e-10
PSD_RTOL = 1e-8


class CovarianceMatrix:
    """
    A symmetric positive semidefinite d x d matrix with a cached
    eigendecomposition.

    Parameters
    ----------
    entries : array-like
        The d x d matrix of variances/covariances.
    """

    def __init__(self, entries):
        entries = np.atleast_2d(np.asarray(entries, dtype=float))
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError("covariance matrix must be square")
        if not np.all(np.isfinite(entries)):
            raise ValueError("covariance matrix has non-finite entries")
        scale = np.abs(entries).max()
        if scale > 0 and np.abs(entries - entries.T).max() > SYM_RTOL * scale:
            raise ValueError("covariance matrix is not symmetric")
        entries = 0.5 * (entries + entries.T)
        self.entries = entries
        self.dim = entries.shape[0]
        self._eigen = None
        # PSD check via the (cached) symmetric eigendecomposition
        w = self.eigen().eigenvalues
        if w[0] > 0 and w[-1] < -PSD_RTOL * w[0]:
            raise ValueError("covariance matrix is not positive semidefinite")

    def eigen(self):
        if self._eigen is None:
            self._eigen = eigendecompose(self)
        return self._eigen

    def __repr__(self):
        return "CovarianceMatrix(dim=%d)" % self.dim


@dataclass
class EigenDecomposition:
    """Eigenvalues sorted descending; eigenvectors as matching columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def eigendecompose(sigma):
    """
    Symmetric eigendecomposition with deterministic conventions:
    eigenvalues descending, each eigenvector's largest-magnitude entry made
    positive.
    """
    mat = sigma.entries if isinstance(sigma, CovarianceMatrix) else np.asarray(sigma, float)
    w, u = np.linalg.eigh(mat)
    w = w[::-1].copy()
    u = u[:, ::-1].copy()
    # fix signs for determinism
    j = np.abs(u).argmax(axis=0)
    flip = u[j, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1.0
    return EigenDecomposition(eigenvalues=w, eigenvectors=u)


def make_equicorrelated(d, rho):
    """Unit-diagonal matrix with constant off-diagonal correlation rho."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if d > 1 and not (-1.0 / (d - 1) < rho < 1.0):
        raise ValueError("rho out of range (-1/(d-1), 1)")
    out = np.full((d, d), float(rho))
    np.fill_diagonal(out, 1.0)
    return CovarianceMatrix(out)


def make_mcc(d, m, m0):
    """
    Correlation matrix of estimates that share a control group of size m0,
    each treatment arm of size m: equicorrelated with rho = m / (m0 + m).
    """
    if min(d, m, m0) < 1:
        raise ValueError("d, m, m0 must be >= 1")
    return make_equicorrelated(d, m / (m0 + m))


def make_factor(d, k, lam, invert=False, rng=None):
    """
    Low-rank-plus-identity covariance K = I + lam * sum_l u_l u_l', with the
    u_l drawn uniformly on the unit sphere, rescaled to unit diagonal.

    With ``invert`` the construction is applied to the precision matrix and
    the result inverted before normalization.
    """
    if k < 1 or lam <= 0:
        raise ValueError("need k >= 1 and lam > 0")
    rng = np.random.default_rng(rng)
    out = np.eye(d)
    for _ in range(k):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        out += lam * np.outer(u, u)
    if invert:
        out = np.linalg.inv(out)
    scale = 1.0 / np.sqrt(np.diag(out))
    out = out * np.outer(scale, scale)
    return CovarianceMatrix(out)


def make_design_gram(n, d, K, rng=None):
    """
    Draw an n x d design with i.i.d. N(0, K) rows, normalize its columns to
    unit Euclidean norm, and return (X, Sigma) with Sigma = (X'X)^{-1}.
    """
    if n < 2 * d:
        raise ValueError("need n >= 2d rows for knockoff constructions")
    rng = np.random.default_rng(rng)
    dec = K.eigen()
    root = dec.eigenvectors * np.sqrt(np.clip(dec.eigenvalues, 0.0, None))
    for attempt in range(2):
        X = rng.standard_normal((n, d)) @ root.T
        X = X / np.linalg.norm(X, axis=0)
        gram = X.T @ X
        if np.linalg.matrix_rank(gram) == d:
            return X, CovarianceMatrix(np.linalg.inv(gram))
    raise np.linalg.LinAlgError("design draw is rank deficient")


def leading_eigvec_cdf(decomp, c):
    """Fraction of entries of the leading eigenvector with |u_j| <= c/sqrt(d)."""
    if c < 0:
        raise ValueError("c must be >= 0")
    u1 = decomp.eigenvectors[:, 0]
    d = u1.shape[0]
    # small relative fuzz so the exactly-flat eigenvector counts at c = 1
    return float(np.mean(np.abs(u1) <= (c / np.sqrt(d)) * (1 + 1e-9)))


def substream(seed, replicate, tag):
    """
    Deterministic child generator for (seed, replicate, tag).  Streams with
    different (replicate, tag) are independent; the mapping does not depend
    on how many replicates run or in which order.
    """
    tag_id = zlib.crc32(str(tag).encode())
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate), tag_id))
    return np.random.default_rng(ss)


_FAMILIES = (
    "equicorrelated",
    "mcc",
    "factor",
    "inverse-factor",
    "design-gram",
    "design-gram-inv",
    "identity",
    "user-file",
)


@dataclass
class ScenarioSpec:
    """
    Covariance family plus coefficient layout for a power study.

    ``support`` is either "uniform-random" or an explicit list of indices.
    For the design families, ``rho`` is the equicorrelation of the row
    covariance K ("design-gram") or of its inverse ("design-gram-inv").
    """

    family: str
    d: int
    rho: float = 0.0
    m: int = 1
    m0: int = 1
    k: int = 1
    lam: float = 1.0
    n: int = 0
    d1: int = 0
    beta0: float = 0.0
    sigma2: float = 1.0
    seed: int = 0
    support: object = "uniform-random"
    sigma_path: str = ""

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError("unknown covariance family %r" % self.family)
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not 0 <= self.d1 <= self.d:
            raise ValueError("d1 must lie in [0, d]")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")

    @classmethod
    def from_json(cls, path_or_str):
        text = path_or_str
        if not text.lstrip().startswith("{"):
            with open(path_or_str) as fh:
                text = fh.read()
        raw = json.loads(text)
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        return cls(**raw)

    def build_sigma(self, rng):
        """
        Materialize (X or None, Sigma).  Draw order: factor directions first,
        then design rows; the coefficient support is drawn later per
        replicate.
        """
        if self.family == "identity":
            return None, CovarianceMatrix(np.eye(self.d))
        if self.family == "equicorrelated":
            return None, make_equicorrelated(self.d, self.rho)
        if self.family == "mcc":
            return None, make_mcc(self.d, self.m, self.m0)
        if self.family == "factor":
            return None, make_factor(self.d, self.k, self.lam, invert=False, rng=rng)
        if self.family == "inverse-factor":
            return None, make_factor(self.d, self.k, self.lam, invert=True, rng=rng)
        if self.family == "user-file":
            mat = np.loadtxt(self.sigma_path, delimiter=",")
            return None, CovarianceMatrix(mat)
        K = make_equicorrelated(self.d, self.rho)
        if self.family == "design-gram-inv":
            K = CovarianceMatrix(np.linalg.inv(K.entries))
        return make_design_gram(self.n, self.d, K, rng=rng)

    def draw_beta(self, rng):
        beta = np.zeros(self.d)
        if self.d1 == 0:
            return beta
        if isinstance(self.support, str):
            if self.support != "uniform-random":
                raise ValueError("support must be 'uniform-random' or index list")
            idx = rng.choice(self.d, size=self.d1, replace=False)
        else:
            idx = np.asarray(self.support, dtype=int)
            if idx.shape[0] != self.d1:
                raise ValueError("fixed support size disagrees with d1")
        beta[idx] = self.beta0
        return beta
