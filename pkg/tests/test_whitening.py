import numpy as np
import pytest
from scipy import stats

from whiteout.covmodel import CovarianceMatrix, make_equicorrelated
from whiteout.whitening import (WhiteningMatrix, carve_noise, log_odds,
                                make_equi_delta, validate_delta,
                                whiten_carved, whiten_known_sigma)


def random_cov(d, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, d))
    return CovarianceMatrix(A @ A.T + 0.5 * np.eye(d))


class TestValidateDelta:
    def test_identity_gap_full_rank(self):
        delta = validate_delta(CovarianceMatrix(np.eye(4)), WhiteningMatrix(np.full(4, 2.0)))
        assert delta.rank == 4
        np.testing.assert_allclose(delta.factor @ delta.factor.T, np.eye(4), atol=1e-10)

    def test_rejects_dominated_delta(self):
        sigma = make_equicorrelated(4, 0.5)  # lambda_1 = 2.5
        with pytest.raises(ValueError):
            validate_delta(sigma, WhiteningMatrix(np.ones(4)))

    def test_rank_drops_at_equality(self):
        sigma = make_equicorrelated(4, 0.5)
        delta = validate_delta(sigma, WhiteningMatrix(np.full(4, 2.5)))
        assert delta.rank == 3  # gap annihilates the leading eigenvector
        gap = np.diag(delta.diag) - sigma.entries
        np.testing.assert_allclose(delta.factor @ delta.factor.T, gap, atol=1e-8)

    def test_zero_gap(self):
        delta = validate_delta(CovarianceMatrix(np.eye(3)), WhiteningMatrix(np.ones(3)))
        assert delta.rank == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            validate_delta(CovarianceMatrix(np.eye(3)), WhiteningMatrix(np.ones(4)))


class TestMakeEquiDelta:
    def test_identity(self):
        delta = make_equi_delta(CovarianceMatrix(np.eye(5)))
        np.testing.assert_allclose(delta.diag, 1.0, atol=1e-12)

    def test_equicorrelated(self):
        delta = make_equi_delta(make_equicorrelated(10, 0.2))
        np.testing.assert_allclose(delta.diag, 1 + 0.2 * 9, atol=1e-10)

    def test_inverse_equicorrelated_precision(self):
        # Sigma^{-1} equicorrelated with rho = 0.5: the minimal scalar
        # whitening has Delta_jj = 1 / (1 - rho) = 2 on Sigma's own scale
        sigma = CovarianceMatrix(np.linalg.inv(make_equicorrelated(4, 0.5).entries))
        delta = make_equi_delta(sigma)
        np.testing.assert_allclose(delta.diag, 2.0, atol=1e-10)

    def test_dominates_and_is_tight(self):
        sigma = random_cov(6, 11)
        delta = validate_delta(sigma, make_equi_delta(sigma))
        gap = np.diag(delta.diag) - sigma.entries
        w = np.linalg.eigvalsh(gap)
        assert w.min() > -1e-8 * abs(w).max()
        # shrinking uniformly by 1% breaks dominance
        with pytest.raises(ValueError):
            validate_delta(sigma, WhiteningMatrix(0.99 * delta.diag))

    def test_inflate(self):
        sigma = make_equicorrelated(5, 0.3)
        d0 = make_equi_delta(sigma).diag
        d1 = make_equi_delta(sigma, inflate=1e-6).diag
        np.testing.assert_allclose(d1, d0 * (1 + 1e-6), rtol=1e-12)


class TestWhitenKnownSigma:
    def test_zero_gap_passthrough(self):
        sigma = CovarianceMatrix(np.eye(4))
        delta = validate_delta(sigma, WhiteningMatrix(np.ones(4)))
        beta_hat = np.array([1.0, -2.0, 0.0, 3.0])
        split = whiten_known_sigma(beta_hat, sigma, delta, 1.0, np.random.default_rng(0))
        np.testing.assert_array_equal(split.omega, 0.0)
        np.testing.assert_array_equal(split.beta_tilde, beta_hat)
        np.testing.assert_allclose(split.xi, 0.0, atol=1e-12)
        np.testing.assert_allclose(split.a_matrix, 0.0, atol=1e-12)

    def test_reconstruction_identity(self):
        sigma = random_cov(7, 21)
        delta = validate_delta(sigma, make_equi_delta(sigma))
        rng = np.random.default_rng(1)
        beta_hat = rng.standard_normal(7)
        split = whiten_known_sigma(beta_hat, sigma, delta, 2.0, rng)
        recon = sigma.entries @ (split.xi + split.beta_tilde / delta.diag)
        np.testing.assert_allclose(recon, beta_hat, atol=1e-10)

    def test_a_matrix_psd(self):
        sigma = random_cov(5, 31)
        delta = validate_delta(sigma, make_equi_delta(sigma))
        split = whiten_known_sigma(np.zeros(5), sigma, delta, 1.0,
                                   np.random.default_rng(2))
        w = np.linalg.eigvalsh(split.a_matrix)
        assert w.min() > -1e-8 * max(abs(w).max(), 1)

    def test_moments_small(self):
        # desk-scale version of the distributional acceptance check
        sigma = make_equicorrelated(3, 0.4)
        delta = validate_delta(sigma, make_equi_delta(sigma))
        rng = np.random.default_rng(3)
        beta = np.array([1.0, 0.0, -0.5])
        sigma2 = 1.5
        root = np.linalg.cholesky(sigma.entries)
        M = 40_000
        bt = np.empty((M, 3))
        xi = np.empty((M, 3))
        for m in range(M):
            beta_hat = beta + np.sqrt(sigma2) * (root @ rng.standard_normal(3))
            s = whiten_known_sigma(beta_hat, sigma, delta, sigma2, rng)
            bt[m] = s.beta_tilde
            xi[m] = s.xi
        tol = 6 * np.sqrt(sigma2 * delta.diag.max() / M)
        np.testing.assert_allclose(bt.mean(axis=0), beta, atol=tol)
        cov_bt = np.cov(bt.T)
        np.testing.assert_allclose(cov_bt, sigma2 * np.diag(delta.diag), atol=0.1)
        # independence of the complement statistic
        cross = (bt - bt.mean(0)).T @ (xi - xi.mean(0)) / (M - 1)
        assert np.abs(cross).max() < 0.1

    def test_invalid_sigma2(self):
        sigma = CovarianceMatrix(np.eye(2))
        delta = validate_delta(sigma, WhiteningMatrix(np.full(2, 2.0)))
        with pytest.raises(ValueError):
            whiten_known_sigma(np.zeros(2), sigma, delta, 0.0, np.random.default_rng(0))


class TestCarveNoise:
    def setup_method(self):
        self.sigma = make_equicorrelated(4, 0.3)
        self.delta = validate_delta(self.sigma, make_equi_delta(self.sigma))

    def test_boundary_dof_consumes_everything(self):
        r = self.delta.rank
        carved = carve_noise(1.0, 4 + r, 4, self.sigma, self.delta,
                             np.random.default_rng(0))
        assert carved.v == 1.0 and carved.sigma_tilde_sq is None

    def test_zero_rank_passthrough(self):
        sigma = CovarianceMatrix(np.eye(4))
        delta = validate_delta(sigma, WhiteningMatrix(np.ones(4)))
        carved = carve_noise(2.5, 100, 4, sigma, delta, np.random.default_rng(0))
        np.testing.assert_array_equal(carved.omega, 0.0)
        assert carved.sigma_tilde_sq == 2.5 and carved.rank_r == 0

    def test_insufficient_dof(self):
        with pytest.raises(ValueError):
            carve_noise(1.0, 4 + self.delta.rank - 1, 4, self.sigma, self.delta,
                        np.random.default_rng(0))

    def test_moments_small(self):
        # omega ~ N(0, sigma2 (Delta - Sigma)) and sigma_tilde_sq unbiased,
        # marginally over sigma_hat_sq ~ sigma2 chi2_{n-d} / (n-d)
        rng = np.random.default_rng(7)
        sigma2, n, d = 2.0, 40, 4
        M = 30_000
        om = np.empty((M, d))
        s2 = np.empty(M)
        for m in range(M):
            shat = sigma2 * rng.chisquare(n - d) / (n - d)
            carved = carve_noise(shat, n, d, self.sigma, self.delta, rng)
            om[m] = carved.omega
            s2[m] = carved.sigma_tilde_sq
        gap = np.diag(self.delta.diag) - self.sigma.entries
        np.testing.assert_allclose(om.mean(axis=0), 0.0, atol=0.05)
        np.testing.assert_allclose(np.cov(om.T), sigma2 * gap, atol=0.12)
        assert abs(s2.mean() - sigma2) < 0.05
        # leftover dof: var of (n-d-r) s2/sigma2 ~ chi2 is 2(n-d-r)
        ndr = n - d - self.delta.rank
        assert abs(np.var(s2 / sigma2 * ndr, ddof=1) - 2 * ndr) < 0.12 * 2 * ndr

    def test_whiten_carved_reconstruction(self):
        rng = np.random.default_rng(9)
        beta_hat = rng.standard_normal(4)
        split, carved = whiten_carved(beta_hat, self.sigma, self.delta, 1.3, 30, rng)
        recon = self.sigma.entries @ (split.xi + split.beta_tilde / self.delta.diag)
        np.testing.assert_allclose(recon, beta_hat, atol=1e-10)
        assert carved.rank_r == self.delta.rank


class TestLogOdds:
    def test_worked_example(self):
        delta = WhiteningMatrix([4.0])
        prof = log_odds(np.array([1.0]), np.array([2.0]), delta, 1.0)
        assert prof.eta[0] == pytest.approx(1.0)
        assert prof.mu[0] == pytest.approx(0.5)

    def test_null_coordinates_zero(self):
        delta = WhiteningMatrix(np.ones(3))
        prof = log_odds(np.zeros(3), np.array([5.0, -1.0, 0.2]), delta, 1.0)
        np.testing.assert_array_equal(prof.eta, 0.0)
        np.testing.assert_array_equal(prof.mu, 0.0)

    def test_scale_invariances(self):
        delta = WhiteningMatrix([2.0, 3.0])
        a = log_odds(np.array([1.0, -2.0]), np.array([0.5, 1.0]), delta, 1.0)
        b = log_odds(np.array([2.0, -4.0]), np.array([1.0, 2.0]), delta, 4.0)
        np.testing.assert_allclose(a.eta, b.eta)
        np.testing.assert_allclose(a.mu, b.mu)

    def test_eta_distribution_small(self):
        # eta ~ |N(mu, 2 mu)|: whitened-pipeline draws vs direct folded draws
        sigma = CovarianceMatrix(np.eye(2))
        delta = validate_delta(sigma, WhiteningMatrix(np.full(2, 2.0)))
        beta = np.array([1.5, 0.8])
        rng = np.random.default_rng(13)
        M = 40_000
        etas = np.empty((M, 2))
        for m in range(M):
            beta_hat = beta + rng.standard_normal(2)
            split = whiten_known_sigma(beta_hat, sigma, delta, 1.0, rng)
            etas[m] = log_odds(beta, split.beta_tilde, delta, 1.0).eta
        mu = 2 * beta ** 2 / (1.0 * delta.diag)
        ref = np.abs(mu + np.sqrt(2 * mu) * np.random.default_rng(99).standard_normal((M, 2)))
        for j in range(2):
            mcse = np.sqrt(etas[:, j].var() / M + ref[:, j].var() / M)
            assert abs(etas[:, j].mean() - ref[:, j].mean()) < 5 * mcse

    def test_sign_agreement_probability(self):
        # P(sgn(beta_tilde) = sgn(beta)) = sigmoid(eta), checked at a point
        # by conditioning on a narrow eta bin
        rng = np.random.default_rng(17)
        mu = 1.2
        bt = np.sqrt(mu / 2) + rng.standard_normal(200_000)
        eta = 2 * np.abs(bt) * np.sqrt(mu / 2)  # beta = sqrt(mu/2), sigma2 Delta = 1
        sel = (eta > 0.9) & (eta < 1.1)
        agree = (bt > 0)[sel]
        assert abs(agree.mean() - 1 / (1 + np.exp(-1.0))) < 0.02
