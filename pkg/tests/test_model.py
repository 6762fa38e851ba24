"""Priors, covariance algebra, and likelihood oracles."""

import math

import numpy as np
import pytest
from scipy import stats

from medpath.data import MediationDataset
from medpath.model import (
    FactorCovariance,
    Hyperparameters,
    ParameterState,
    expit,
    fa_correlation,
    logit,
    mediator_loglik,
    mrf_inclusion_prob,
    mrf_log_mass_unnormalized,
    outcome_loglik,
    spike_slab_log_prior_delta,
    spike_slab_log_prior_tau,
    ssb_log_prior,
)

LOG_2PI = math.log(2.0 * math.pi)


def random_state_and_data(rng, n, q, p, lam_scale=0.6):
    state = ParameterState.zeros(q, p)
    state.beta0 = rng.normal(size=q)
    state.B = rng.normal(size=(p, q))
    state.gamma = rng.random(q) < 0.5
    state.tau = np.where(state.gamma, rng.normal(size=q), 0.0)
    state.lam = lam_scale * rng.normal(size=q)
    state.sigma_sq_Sigma = float(rng.uniform(0.3, 2.0))
    state.alpha0 = float(rng.normal())
    state.alpha = rng.normal(size=p)
    state.alpha_p1 = float(rng.normal())
    state.omega = state.gamma & (rng.random(q) < 0.5)
    state.delta = np.where(state.omega, rng.normal(size=q), 0.0)
    state.sigma_sq = float(rng.uniform(0.3, 2.0))
    data = MediationDataset(
        X=rng.normal(size=(n, p)), A=rng.normal(size=n),
        M=rng.normal(size=(n, q)), Y=rng.normal(size=n),
    )
    return state, data


class TestFactorCovariance:
    def test_woodbury_inverse_identity(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            q = int(rng.integers(2, 51))
            cov = FactorCovariance(lam=rng.normal(scale=1.5, size=q),
                                   sigma_sq_Sigma=float(rng.uniform(0.2, 3.0)))
            product = cov.dense() @ cov.dense_inverse()
            assert np.max(np.abs(product - np.eye(q))) < 1e-8

    def test_log_det_matches_dense(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            q = int(rng.integers(2, 30))
            cov = FactorCovariance(lam=rng.normal(size=q),
                                   sigma_sq_Sigma=float(rng.uniform(0.2, 3.0)))
            sign, logdet = np.linalg.slogdet(cov.dense())
            assert sign == 1.0
            assert abs(cov.log_det - logdet) < 1e-9 * max(1.0, abs(logdet))

    def test_inv_apply_matches_dense(self):
        rng = np.random.default_rng(9)
        cov = FactorCovariance(lam=rng.normal(size=12), sigma_sq_Sigma=0.7)
        v = rng.normal(size=12)
        np.testing.assert_allclose(cov.inv_apply(v), cov.dense_inverse() @ v,
                                   rtol=1e-10, atol=1e-12)

    def test_requires_positive_scale(self):
        with pytest.raises(ValueError):
            FactorCovariance(lam=np.zeros(3), sigma_sq_Sigma=0.0)


class TestFaCorrelation:
    def test_zero_loadings(self):
        cov = FactorCovariance(lam=np.zeros(4), sigma_sq_Sigma=1.0)
        for r in range(4):
            for j in range(4):
                if r != j:
                    assert fa_correlation(cov, r, j) == 0.0

    def test_scenario_loading_value(self):
        # lam = 0.35 everywhere: 0.1225/1.1225, the "correlation of 0.1"
        cov = FactorCovariance(lam=np.full(5, 0.35), sigma_sq_Sigma=0.5)
        expected = 0.35 ** 2 / (0.35 ** 2 + 1.0)
        got = fa_correlation(cov, 0, 3)
        assert abs(got - expected) < 1e-15
        assert abs(got - 0.10913) < 5e-6
        # independent of the scale parameter
        cov2 = FactorCovariance(lam=np.full(5, 0.35), sigma_sq_Sigma=7.3)
        assert fa_correlation(cov2, 0, 3) == got

    def test_mixed_signs(self):
        cov = FactorCovariance(lam=np.array([1.0, -1.0]), sigma_sq_Sigma=1.0)
        assert abs(fa_correlation(cov, 0, 1) + 0.5) < 1e-15

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(11)
        cov = FactorCovariance(lam=rng.normal(scale=2.0, size=10), sigma_sq_Sigma=1.0)
        for _ in range(50):
            r, j = rng.choice(10, size=2, replace=False)
            c = fa_correlation(cov, int(r), int(j))
            assert c == fa_correlation(cov, int(j), int(r))
            assert -1.0 <= c <= 1.0

    def test_rejects_diagonal(self):
        cov = FactorCovariance(lam=np.zeros(3), sigma_sq_Sigma=1.0)
        with pytest.raises(ValueError):
            fa_correlation(cov, 2, 2)


class TestMrfPrior:
    def test_eta_zero_gives_baseline(self):
        hp = Hyperparameters(eta=0.0).with_gamma_probability(0.1)
        cov = FactorCovariance(lam=np.full(6, 1.2), sigma_sq_Sigma=1.0)
        gamma = np.array([True, True, False, True, False, True])
        assert abs(mrf_inclusion_prob(gamma, cov, 2, hp) - 0.1) < 1e-12

    def test_logistic_zero(self):
        hp = Hyperparameters(theta_gamma=0.0, eta=0.0)
        cov = FactorCovariance(lam=np.zeros(3), sigma_sq_Sigma=1.0)
        assert mrf_inclusion_prob(np.zeros(3, bool), cov, 0, hp) == 0.5

    def test_five_active_neighbors(self):
        # theta=-2.2, eta=1.04, neighbors each |c| = 0.1225/1.1225
        hp = Hyperparameters(theta_gamma=-2.2, eta=1.04)
        cov = FactorCovariance(lam=np.full(6, 0.35), sigma_sq_Sigma=0.5)
        gamma = np.array([False, True, True, True, True, True])
        c = 0.35 ** 2 / (0.35 ** 2 + 1.0)
        expected = 1.0 / (1.0 + math.exp(-(-2.2 + 1.04 * 5 * c)))
        got = mrf_inclusion_prob(gamma, cov, 0, hp)
        assert abs(got - expected) < 1e-12
        assert abs(got - 0.1635) < 1e-3

    def test_monotone_in_coupling_and_bounded(self):
        rng = np.random.default_rng(13)
        cov = FactorCovariance(lam=rng.uniform(0.1, 2.0, size=8), sigma_sq_Sigma=1.0)
        gamma = rng.random(8) < 0.6
        gamma[3] = False
        hp_lo = Hyperparameters(eta=0.2)
        hp_hi = Hyperparameters(eta=1.5)
        p_lo = mrf_inclusion_prob(gamma, cov, 3, hp_lo)
        p_hi = mrf_inclusion_prob(gamma, cov, 3, hp_hi)
        if gamma.sum() > 0:
            assert p_hi >= p_lo
        assert 0.0 < p_lo < 1.0 and 0.0 < p_hi < 1.0

    def test_joint_mass_factorizes_at_eta_zero(self):
        hp = Hyperparameters(eta=0.0).with_gamma_probability(0.23)
        cov = FactorCovariance(lam=np.full(4, 0.9), sigma_sq_Sigma=1.0)
        configs = [np.array(bits, dtype=bool)
                   for bits in np.ndindex(2, 2, 2, 2)]
        masses = np.array([math.exp(mrf_log_mass_unnormalized(g, cov, hp))
                           for g in configs])
        masses /= masses.sum()
        p = 0.23
        for g, mass in zip(configs, masses):
            bern = np.prod(np.where(g, p, 1 - p))
            assert abs(mass - bern) < 1e-12

    def test_joint_mass_consistent_with_conditional(self):
        # p(gamma_j=1 | rest) from the joint equals the stated logistic form
        rng = np.random.default_rng(17)
        hp = Hyperparameters(eta=0.8).with_gamma_probability(0.2)
        cov = FactorCovariance(lam=rng.uniform(0.2, 1.5, size=5), sigma_sq_Sigma=1.0)
        for _ in range(20):
            gamma = rng.random(5) < 0.5
            j = int(rng.integers(5))
            g1 = gamma.copy(); g1[j] = True
            g0 = gamma.copy(); g0[j] = False
            m1 = mrf_log_mass_unnormalized(g1, cov, hp)
            m0 = mrf_log_mass_unnormalized(g0, cov, hp)
            cond = expit(m1 - m0)
            assert abs(cond - mrf_inclusion_prob(gamma, cov, j, hp)) < 1e-12


class TestSsbPrior:
    def test_point_mass_when_gamma_off(self):
        hp = Hyperparameters(theta_omega=0.1)
        assert ssb_log_prior(True, False, hp) == -math.inf
        assert ssb_log_prior(False, False, hp) == 0.0

    def test_bernoulli_when_gamma_on(self):
        hp = Hyperparameters(theta_omega=0.1)
        assert abs(ssb_log_prior(True, True, hp) - math.log(0.1)) < 1e-15
        assert abs(ssb_log_prior(False, True, hp) - math.log(0.9)) < 1e-15


class TestSpikeSlabPriors:
    def test_spike_rejects_nonzero(self):
        hp = Hyperparameters()
        cov = FactorCovariance(lam=np.zeros(3), sigma_sq_Sigma=1.0)
        assert spike_slab_log_prior_tau(0.5, False, cov, hp, 0) == -math.inf
        assert spike_slab_log_prior_tau(0.0, False, cov, hp, 0) == 0.0

    def test_slab_density_at_mode(self):
        hp = Hyperparameters(v_sq=9.0)
        cov = FactorCovariance(lam=np.zeros(2), sigma_sq_Sigma=1.0)
        expected = -0.5 * math.log(2.0 * math.pi * 9.0)
        assert abs(spike_slab_log_prior_tau(0.0, True, cov, hp, 1) - expected) < 1e-12

    def test_slab_variance_uses_marginal(self):
        # v=9, sigma_sq_Sigma=0.5, lam=0.35 -> variance 9*0.5*1.1225
        hp = Hyperparameters(v_sq=9.0)
        cov = FactorCovariance(lam=np.full(4, 0.35), sigma_sq_Sigma=0.5)
        var = 9.0 * 0.5 * (0.35 ** 2 + 1.0)
        assert abs(var - 5.05125) < 1e-12
        x = 0.7
        expected = stats.norm.logpdf(x, scale=math.sqrt(var))
        assert abs(spike_slab_log_prior_tau(x, True, cov, hp, 2) - expected) < 1e-10

    def test_delta_slab(self):
        hp = Hyperparameters(psi_sq=4.0)
        sigma_sq = 0.5
        expected = stats.norm.logpdf(0.3, scale=math.sqrt(4.0 * 0.5))
        assert abs(spike_slab_log_prior_delta(0.3, True, sigma_sq, hp, 0) - expected) < 1e-10
        assert spike_slab_log_prior_delta(0.3, False, sigma_sq, hp, 0) == -math.inf


class TestMediatorLoglik:
    def test_standard_bivariate_at_mode(self):
        state = ParameterState.zeros(2, 0)
        data = MediationDataset(X=np.empty((1, 0)), A=np.zeros(1),
                                M=np.zeros((1, 2)), Y=np.zeros(1))
        assert abs(mediator_loglik(data, state) - (-LOG_2PI)) < 1e-12

    def test_matches_dense_cholesky(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            n = int(rng.integers(1, 8))
            q = int(rng.integers(1, 51))
            p = int(rng.integers(0, 4))
            state, data = random_state_and_data(rng, n, q, p)
            cov = FactorCovariance.from_state(state)
            mean = state.beta0 + np.outer(data.A, state.tau) + data.X @ state.B
            dense = stats.multivariate_normal(mean=np.zeros(q), cov=cov.dense())
            expected = float(np.sum(dense.logpdf(data.M - mean)))
            got = mediator_loglik(data, state)
            assert abs(got - expected) <= 1e-8 * max(1.0, abs(expected))

    def test_scale_doubling_identity(self):
        # zero residual: doubling the scale changes loglik by -(nq/2) log 2
        rng = np.random.default_rng(29)
        n, q = 6, 4
        state = ParameterState.zeros(q, 0)
        state.lam = rng.normal(size=q)
        mean = np.tile(state.beta0, (n, 1))
        data = MediationDataset(X=np.empty((n, 0)), A=np.zeros(n), M=mean,
                                Y=np.zeros(n))
        base = mediator_loglik(data, state)
        state.sigma_sq_Sigma = 2.0
        assert abs(mediator_loglik(data, state) - (base - n * q / 2 * math.log(2))) < 1e-10

    def test_rejects_bad_scale(self):
        state = ParameterState.zeros(2, 0)
        data = MediationDataset(X=np.empty((1, 0)), A=np.zeros(1),
                                M=np.zeros((1, 2)), Y=np.zeros(1))
        state.sigma_sq_Sigma = -1.0
        with pytest.raises(ValueError):
            mediator_loglik(data, state)


class TestOutcomeLoglik:
    def test_zero_residual(self):
        state = ParameterState.zeros(2, 0)
        data = MediationDataset(X=np.empty((1, 0)), A=np.zeros(1),
                                M=np.zeros((1, 2)), Y=np.zeros(1))
        assert abs(outcome_loglik(data, state) - (-0.5 * LOG_2PI)) < 1e-12

    def test_matches_normal_sum_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            n = int(rng.integers(2, 30))
            q = int(rng.integers(1, 6))
            p = int(rng.integers(0, 4))
            state, data = random_state_and_data(rng, n, q, p)
            mean = (state.alpha0 + data.M @ state.delta + data.X @ state.alpha
                    + state.alpha_p1 * data.A)
            expected = float(np.sum(stats.norm.logpdf(
                data.Y, loc=mean, scale=math.sqrt(state.sigma_sq))))
            assert abs(outcome_loglik(data, state) - expected) < 1e-10 * max(1.0, abs(expected))

    def test_translation_invariance(self):
        rng = np.random.default_rng(37)
        state, data = random_state_and_data(rng, 12, 3, 2)
        base = outcome_loglik(data, state)
        shifted = MediationDataset(X=data.X, A=data.A, M=data.M, Y=data.Y + 5.5)
        state.alpha0 += 5.5
        assert abs(outcome_loglik(shifted, state) - base) < 1e-10


class TestParameterState:
    def test_invariant_checks(self):
        state = ParameterState.zeros(3, 1)
        state.tau[0] = 1.0
        with pytest.raises(ValueError):
            state.validate()
        state.tau[0] = 0.0
        state.omega[1] = True
        with pytest.raises(ValueError):
            state.validate()
        state.gamma[1] = True
        state.validate()

    def test_logit_expit_roundtrip(self):
        for p in (0.01, 0.1, 0.5, 0.93):
            assert abs(expit(logit(p)) - p) < 1e-12
        with pytest.raises(ValueError):
            logit(1.0)


class TestHyperparameters:
    def test_defaults_match_reference_settings(self):
        hp = Hyperparameters()
        assert abs(hp.prior_inclusion_gamma - 0.1) < 1e-12
        assert hp.theta_omega == 0.1
        assert hp.v_sq == 9.0 and hp.psi_sq == 9.0
        assert hp.h0 == hp.c0 == hp.s0 == hp.t0 == hp.k0 == 100.0
        assert hp.nu0 == hp.nu1 == 6.0
        assert abs(hp.sigma0_sq - 1 / 3) < 1e-15
        assert hp.h_lambda == 100.0 and hp.mu_lambda == 0.0
        assert hp.eta == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            Hyperparameters(theta_omega=1.5).validate()
        with pytest.raises(ValueError):
            Hyperparameters(eta=-0.1).validate()
        with pytest.raises(ValueError):
            Hyperparameters(v_sq=-1.0).validate()
