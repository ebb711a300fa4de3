"""
Classical design-matrix knockoffs: construction of the knockoff matrix
X_tilde with matched Gram structure, the coupling that maps (X, X_tilde, y)
onto the whitening quantities (omega, beta_tilde, xi) with Delta = 2 D^{-1},
and the W/W* mappings between the two formulations.
"""

from dataclasses import dataclass

import numpy as np

from .filtering import OrderingDecision

PSD_TOL = 1e-8


@dataclass
class KnockoffPair:
    x: np.ndarray
    x_tilde: np.ndarray
    d_matrix: np.ndarray  # diagonal of D


def construct_knockoff_matrix(X, D, rng=None):
    """
    Build X_tilde = X (I - G^{-1} D) + U_tilde C with G = X'X,
    C'C = 2D - D G^{-1} D and U_tilde an orthonormal basis orthogonal to
    col(X), so that X_tilde'X_tilde = G and X'X_tilde = G - D.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < 2 * d:
        raise ValueError("need n >= 2d")
    D = np.asarray(D, dtype=float).ravel()
    if D.shape[0] != d:
        raise ValueError("D must have d diagonal entries")
    G = X.T @ X
    if np.linalg.matrix_rank(G) < d:
        raise ValueError("X is rank deficient")
    if np.any(D < 0):
        raise ValueError("D must be nonneg diagonal")
    wD = np.linalg.eigvalsh(2 * G - np.diag(D))
    scale = max(np.abs(wD).max(), 1.0)
    if wD.min() < -PSD_TOL * scale:
        raise ValueError("D exceeds 2 X'X")

    S = 2 * np.diag(D) - (D[:, None] * np.linalg.solve(G, np.diag(D)))
    S = 0.5 * (S + S.T)
    C = _psd_sqrt_factor(S)

    # orthonormal complement of col(X), first d columns, deterministic
    Q = np.linalg.qr(X, mode="complete")[0]
    U_tilde = Q[:, d:2 * d]

    X_tilde = X - X @ np.linalg.solve(G, np.diag(D)) + U_tilde @ C
    return KnockoffPair(x=X, x_tilde=X_tilde, d_matrix=D)


def _psd_sqrt_factor(S):
    """Upper factor C with C'C = S; Cholesky with jitter, eigen fallback."""
    tr = np.trace(S)
    for jitter in (0.0, 1e-12 * tr, 1e-10 * tr):
        try:
            return np.linalg.cholesky(S + jitter * np.eye(S.shape[0])).T
        except np.linalg.LinAlgError:
            continue
    w, V = np.linalg.eigh(S)
    if w.min() < -PSD_TOL * max(w.max(), 1.0):
        raise np.linalg.LinAlgError("2D - D G^{-1} D is not PSD")
    return (V * np.sqrt(np.clip(w, 0.0, None))).T


def couple_omega(pair, y):
    """
    Map (X, X_tilde, y) to the whitening formulation with Delta = 2 D^{-1}:
    returns (omega, beta_tilde, xi, beta_hat) where
    beta_tilde = D^{-1}(X - X_tilde)'y and xi = (X + X_tilde)'y / 2.
    """
    D = pair.d_matrix
    if np.any(D <= 0):
        raise ValueError("coupling requires D_jj > 0 (a zero entry means "
                         "Delta_jj would be infinite)")
    y = np.asarray(y, dtype=float)
    G = pair.x.T @ pair.x
    beta_hat = np.linalg.solve(G, pair.x.T @ y)
    beta_tilde = (pair.x - pair.x_tilde).T @ y / D
    xi = 0.5 * (pair.x + pair.x_tilde).T @ y
    return beta_tilde - beta_hat, beta_tilde, xi, beta_hat


def wstar(W, pair, y):
    """W*_j = sgn((X_j - X_tilde_j)'y) W_j, a function of the unordered pairs."""
    s = np.sign((pair.x - pair.x_tilde).T @ np.asarray(y, dtype=float))
    return s * np.asarray(W, dtype=float)


def whitening_to_W(ordering, beta_tilde):
    """
    The equivalence construction: W_[j] = (d + 1 - j) psi_[j] sgn(beta_tilde_[j])
    along the testing order, so knockoff+ on W reproduces Selective SeqStep.
    """
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    d = beta_tilde.shape[0]
    W = np.zeros(d)
    for pos, idx in enumerate(ordering.order):
        W[idx] = (d - pos) * ordering.psi[idx] * np.sign(beta_tilde[idx])
    return W


def W_to_whitening(W, w_star):
    """
    Invert the equivalence: order by descending |W| and read the directions
    psi_j = sgn(W*_j).  Requires positive, tie-free |W|.
    """
    W = np.asarray(W, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    absW = np.abs(W)
    if np.any(absW == 0) or np.unique(absW).size != absW.size:
        raise ValueError("|W| must be positive with no ties")
    psi = np.sign(w_star)
    if np.any(psi == 0):
        raise ValueError("W* has a zero entry; directions undefined")
    order = np.argsort(-absW, kind="stable")
    return OrderingDecision(order=order, psi=psi.astype(float))
