"""
Monte Carlo engines: the T3 oracle-bound simulation on b_k(Sigma), the
bounding random walk, rejection histograms, full scenario power studies,
and the BH/Bonferroni baselines.

Replicate r of method m draws from substream(seed, r, m); data common to all
methods in a replicate comes from substream(seed, r, "data") so that method
comparisons share random numbers.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import filtering, whitening as wh
from .bounds import delta_order_lower_bounds
from .covmodel import ScenarioSpec, substream


@dataclass
class RandomWalkSpec:
    p: float
    q: float
    horizon: int
    head_zeros: int

    def __post_init__(self):
        if not 0 < self.p < self.q < 1:
            raise ValueError("need 0 < p < q < 1")


@dataclass
class MonteCarloConfig:
    scenario: ScenarioSpec
    replicates: int
    alphas: list
    methods: list
    seed: int = 0

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        known = {"oracle-knockoff*", "lasso-knockoff", "t3-knockoff*",
                 "bh", "bonferroni"}
        bad = set(self.methods) - known
        if bad:
            raise ValueError("unknown methods: %s" % sorted(bad))


@dataclass
class PowerSummary:
    table: dict = field(default_factory=dict)  # (method, alpha) -> metrics dict
    replicate_rows: list = field(default_factory=list)


@dataclass
class T3Result:
    tpr: float
    tpr_mcse: float
    mean_rejections: float
    rejections_mcse: float
    rejection_counts: np.ndarray


def _seqstep_counts(p_tilde, alpha):
    """(k_hat, #false-signs in prefix) for an ordered {1/2, 1} sequence."""
    ones = np.cumsum(p_tilde == 1.0)
    m = np.arange(1, p_tilde.shape[0] + 1)
    ok = np.nonzero(1.0 + ones <= alpha * (m - ones))[0]
    if ok.size == 0:
        return 0, 0
    k_hat = int(ok[-1] + 1)
    return k_hat, int(ones[k_hat - 1])


def _draw_eta(mu, rng):
    """eta ~ |N(mu, 2 mu)| with eta = +inf where mu = +inf."""
    with np.errstate(invalid="ignore"):
        eta = np.abs(mu + np.sqrt(2.0 * mu) * rng.standard_normal(mu.shape[0]))
    eta[np.isinf(mu)] = np.inf
    return eta


def _draw_p_tilde(eta, rng):
    """p = 1/2 with probability 1 / (1 + exp(-eta))."""
    succ = rng.random(eta.shape[0]) < 1.0 / (1.0 + np.exp(-eta))
    return np.where(succ, 0.5, 1.0)


def t3_knockoff_star(b, beta_ordered_sq, sigma2, d1, alpha, M, rng):
    """
    Oracle-bound simulation: assign the squared-coefficient order statistics
    to positions uniformly at random, take mu_j = 2 beta^2_j / (sigma2 b_j)
    (mu = +inf where b_j = 0, an unconstrained coordinate), draw
    eta ~ |N(mu, 2 mu)|, order by descending eta and run Selective SeqStep.
    Scores the true-positive proportion against the d1 non-null positions.
    """
    if d1 < 1:
        raise ValueError("d1 must be >= 1")
    beta_sq = np.asarray(beta_ordered_sq, dtype=float)
    d = beta_sq.shape[0]
    tpp = np.empty(M)
    rej = np.empty(M, dtype=int)
    for m in range(M):
        perm = rng.permutation(d)
        bs = beta_sq[perm]
        nonnull = bs > 0
        with np.errstate(divide="ignore"):
            mu = np.where(b.b > 0, 2.0 * bs / (sigma2 * np.maximum(b.b, 1e-300)), np.inf)
        mu[bs == 0] = np.where(b.b[bs == 0] > 0, 0.0, np.inf)
        eta = _draw_eta(mu, rng)
        p_tilde = _draw_p_tilde(eta, rng)
        order = np.argsort(-eta, kind="stable")
        k_hat, ones = _seqstep_counts(p_tilde[order], alpha)
        prefix = order[:k_hat]
        hits = np.count_nonzero((p_tilde[prefix] == 0.5) & nonnull[prefix])
        tpp[m] = hits / d1
        rej[m] = k_hat - ones
    return T3Result(tpr=float(tpp.mean()),
                    tpr_mcse=float(tpp.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0,
                    mean_rejections=float(rej.mean()),
                    rejections_mcse=float(rej.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0,
                    rejection_counts=rej)


def simulate_eta_walk_bound(k, d, alpha, delta, M, rng):
    """
    Mean rejection count of the bounding walk: the first k-1 p-values forced
    to 1/2 and the remaining d-k+1 i.i.d. with log-odds -log(alpha + delta)
    of being 1/2.  Tightens the closed-form ceiling for specific (k, d).
    """
    if not 1 <= k <= d:
        raise ValueError("need 1 <= k <= d")
    q = (alpha + delta) / (1.0 + alpha + delta)  # P(p_tilde = 1)
    tail = d - k + 1
    total = np.empty(M)
    m_idx = np.arange(k, d + 1, dtype=float)
    for i in range(M):
        ones = np.cumsum(rng.random(tail) < q)
        ok = np.nonzero(1.0 + ones <= alpha * (m_idx - ones))[0]
        if ok.size:
            j = ok[-1]
            total[i] = (k + j) - ones[j]
        else:
            # best stopping point, if any, lies inside the deterministic head
            total[i] = k - 1 if alpha * (k - 1) >= 1 else 0
    return float(total.mean())


def simulate_knockoff_star_rejections(mu, alpha, M, rng):
    """Histogram (bincount) of rejection counts under the oracle ordering."""
    mu = np.asarray(mu, dtype=float)
    counts = np.empty(M, dtype=int)
    for m in range(M):
        eta = _draw_eta(mu, rng)
        p_tilde = _draw_p_tilde(eta, rng)
        order = np.argsort(-eta, kind="stable")
        k_hat, ones = _seqstep_counts(p_tilde[order], alpha)
        counts[m] = k_hat - ones
    return np.bincount(counts), counts


def bh_procedure(pvals, alpha):
    """Step-up rule: reject the i* smallest p-values, i* = max{i: p_(i) <= i alpha/d}."""
    p = np.asarray(pvals, dtype=float)
    d = p.shape[0]
    order = np.argsort(p, kind="stable")
    ok = np.nonzero(p[order] <= alpha * np.arange(1, d + 1) / d)[0]
    if ok.size == 0:
        return np.array([], dtype=int)
    return np.sort(order[:ok[-1] + 1])


def bonferroni(pvals, alpha):
    p = np.asarray(pvals, dtype=float)
    return np.nonzero(p <= alpha / p.shape[0])[0]


def ols_t_pvalues(beta_hat, sigma, sigma_hat_sq, dof):
    """
    Two-sided p-values of t_j = beta_hat_j / sqrt(sigma_hat_sq Sigma_jj);
    Student-t with the given degrees of freedom, or exact Gaussian when
    dof is infinite.
    """
    t = np.abs(np.asarray(beta_hat, float)) / np.sqrt(sigma_hat_sq * np.diag(sigma.entries))
    if np.isinf(dof):
        return 2.0 * stats.norm.sf(t)
    if dof < 1:
        raise ValueError("dof must be >= 1 or inf")
    return 2.0 * stats.t.sf(t, df=dof)


def fdr_tpr_score(rejections, support):
    """(FDP, TPP); TPP is None when the support is empty."""
    rej = set(int(i) for i in rejections)
    sup = set(int(i) for i in support)
    v = len(rej - sup)
    fdp = v / max(len(rej), 1)
    tpp = None if not sup else len(rej & sup) / len(sup)
    return fdp, tpp


def run_scenario(config, threads=1):
    """
    Power study over config.replicates instances of config.scenario.  The
    covariance (and design, for the design families) is materialized once;
    each replicate draws its own support, data, and whitening noise.
    """
    spec = config.scenario
    rng0 = substream(config.seed, 0, "covariance")
    X, sigma = spec.build_sigma(rng0)
    delta = wh.validate_delta(sigma, wh.make_equi_delta(sigma))
    # the lasso pseudo-design needs A = Sigma^{-1} - Delta^{-1} invertible
    delta_lasso = None
    if "lasso-knockoff" in config.methods:
        delta_lasso = wh.validate_delta(sigma, wh.make_equi_delta(sigma, inflate=1e-6))
    b = delta_order_lower_bounds(sigma.eigen()) if "t3-knockoff*" in config.methods else None
    sigma_root = None
    if X is None:
        dec = sigma.eigen()
        sigma_root = dec.eigenvectors * np.sqrt(np.clip(dec.eigenvalues, 0, None))

    rows = []

    def one_replicate(r):
        out = []
        data_rng = substream(config.seed, r, "data")
        beta = spec.draw_beta(data_rng)
        support = np.nonzero(beta)[0]
        if X is None:
            beta_hat = beta + math.sqrt(spec.sigma2) * (
                sigma_root @ data_rng.standard_normal(spec.d))
        else:
            y = X @ beta + math.sqrt(spec.sigma2) * data_rng.standard_normal(spec.n)
            beta_hat = np.linalg.solve(X.T @ X, X.T @ y)
        pvals = None
        if "bh" in config.methods or "bonferroni" in config.methods:
            pvals = ols_t_pvalues(beta_hat, sigma, spec.sigma2, np.inf)
        for alpha in config.alphas:
            for method in config.methods:
                mrng = substream(config.seed, r, method + "@" + repr(float(alpha)))
                if method == "oracle-knockoff*":
                    res = filtering.run_whitening_filter(
                        beta_hat, sigma, delta, alpha, mrng,
                        sigma2=spec.sigma2, strategy="oracle", beta=beta)
                    rej = res.rejections
                elif method == "lasso-knockoff":
                    res = filtering.run_whitening_filter(
                        beta_hat, sigma, delta_lasso, alpha, mrng,
                        sigma2=spec.sigma2, strategy="lasso")
                    rej = res.rejections
                elif method == "t3-knockoff*":
                    beta_sq = np.sort(beta ** 2)[::-1]
                    t3 = t3_knockoff_star(b, beta_sq, spec.sigma2,
                                          max(len(support), 1), alpha, 1, mrng)
                    out.append((r, method, alpha, t3.mean_rejections, None,
                                None, t3.tpr))
                    continue
                elif method == "bh":
                    rej = bh_procedure(pvals, alpha)
                else:
                    rej = bonferroni(pvals, alpha)
                fdp, tpp = fdr_tpr_score(rej, support)
                out.append((r, method, alpha, len(rej),
                            len(set(rej) - set(support)), fdp, tpp))
        return out

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as ex:
            for chunk in ex.map(one_replicate, range(config.replicates)):
                rows.extend(chunk)
    else:
        for r in range(config.replicates):
            rows.extend(one_replicate(r))
    rows.sort(key=lambda t: (t[0], t[1], t[2]))

    summary = PowerSummary(replicate_rows=rows)
    for method in config.methods:
        for alpha in config.alphas:
            sel = [t for t in rows if t[1] == method and t[2] == alpha]
            M = len(sel)
            fdps = np.array([t[5] for t in sel if t[5] is not None], dtype=float)
            tpps = np.array([t[6] for t in sel if t[6] is not None], dtype=float)
            rcounts = np.array([t[3] for t in sel], dtype=float)
            entry = {"mean_rejections": float(rcounts.mean())}
            if fdps.size:
                entry["fdr"] = float(fdps.mean())
                entry["fdr_mcse"] = float(fdps.std(ddof=1) / math.sqrt(fdps.size)) if fdps.size > 1 else 0.0
            if tpps.size:
                entry["tpr"] = float(tpps.mean())
                entry["tpr_mcse"] = float(tpps.std(ddof=1) / math.sqrt(tpps.size)) if tpps.size > 1 else 0.0
            summary.table[(method, float(alpha))] = entry
    return summary
