"""Chain execution: thinning arithmetic, determinism, support invariants,
cut feedback, RNG isolation across chains, and adaptation freezing."""

import numpy as np
import pytest

from medpath.data import MediationDataset
from medpath.model import Hyperparameters
from medpath.sampler import (
    ChainConfig,
    InitSpec,
    ModelVariant,
    MultiChainError,
    run_chain,
    run_chains,
)
from medpath.scenarios import generate_scenario, scenario_i_small, scenario_ii_small


@pytest.fixture(scope="module")
def tiny_data():
    spec = scenario_ii_small(n=80, q=12, seed=9)
    data, _ = generate_scenario(spec)
    return data


HP = Hyperparameters(eta=0.0)


class TestCounting:
    def test_kept_draw_count(self, tiny_data):
        cfg = ChainConfig(n_iter=10, burn_in=5, thin=1, seed=1)
        draws = run_chain(cfg, tiny_data, HP)
        assert draws.n_kept == 5

    def test_thinning_convention(self, tiny_data):
        # keep t with t > burn_in and (t - burn_in) % thin == 0
        cfg = ChainConfig(n_iter=20, burn_in=5, thin=4, seed=1)
        assert cfg.n_kept == 3
        draws = run_chain(cfg, tiny_data, HP)
        assert draws.n_kept == 3

    def test_invalid_configs(self):
        with pytest.raises(ValueError):
            ChainConfig(n_iter=5, burn_in=5, thin=1, seed=0).validate()
        with pytest.raises(ValueError):
            ChainConfig(n_iter=5, burn_in=1, thin=0, seed=0).validate()


class TestDeterminism:
    def test_same_seed_bit_identical(self, tiny_data):
        cfg = ChainConfig(n_iter=60, burn_in=20, thin=2, seed=7)
        a = run_chain(cfg, tiny_data, HP)
        b = run_chain(cfg, tiny_data, HP)
        for name in ("gamma", "tau", "omega", "delta", "lam", "beta0", "B",
                     "alpha0", "alpha", "alpha_p1", "sigma_sq_Sigma", "sigma_sq"):
            assert np.array_equal(getattr(a, name), getattr(b, name)), name

    def test_different_seeds_differ(self, tiny_data):
        a = run_chain(ChainConfig(n_iter=40, burn_in=10, seed=1), tiny_data, HP)
        b = run_chain(ChainConfig(n_iter=40, burn_in=10, seed=2), tiny_data, HP)
        assert not np.array_equal(a.tau, b.tau)


class TestSupportInvariants:
    def test_every_kept_draw_satisfies_support(self, tiny_data):
        cfg = ChainConfig(n_iter=120, burn_in=40, thin=1, seed=3)
        draws = run_chain(cfg, tiny_data, HP)
        assert np.all(draws.tau[~draws.gamma] == 0.0)
        assert not np.any(draws.omega & ~draws.gamma)
        assert np.all(draws.delta[~draws.omega] == 0.0)

    def test_variances_positive(self, tiny_data):
        draws = run_chain(ChainConfig(n_iter=60, burn_in=20, seed=4), tiny_data, HP)
        assert np.all(draws.sigma_sq_Sigma > 0)
        assert np.all(draws.sigma_sq > 0)


class TestCutFeedback:
    def test_y_perturbation_leaves_mediator_path_unchanged(self):
        spec = scenario_i_small(n=100, q=12, seed=21)
        data, _ = generate_scenario(spec)
        perturbed = MediationDataset(X=data.X, A=data.A, M=data.M,
                                     Y=data.Y + 3.7 * np.sin(np.arange(data.n)))
        hp = Hyperparameters(eta=0.4)
        cfg = ChainConfig(n_iter=80, burn_in=20, thin=1, seed=5)
        a = run_chain(cfg, data, hp)
        b = run_chain(cfg, perturbed, hp)
        # the whole mediator-model path is measurable wrt (M, A, X) only
        for name in ("gamma", "tau", "lam", "beta0", "B", "sigma_sq_Sigma"):
            assert np.array_equal(getattr(a, name), getattr(b, name)), name
        # while the outcome side must actually see the change
        assert not np.array_equal(a.alpha0, b.alpha0)


class TestVariants:
    def test_eta_requires_mrf_variant(self, tiny_data):
        hp = Hyperparameters(eta=0.3)
        for variant in (ModelVariant.MVN_IB_SSB, ModelVariant.NORMAL_IB_SSB):
            cfg = ChainConfig(n_iter=10, burn_in=2, seed=1, model_variant=variant)
            with pytest.raises(ValueError, match="eta must be 0"):
                run_chain(cfg, tiny_data, hp)

    def test_normal_ib_pins_lambda(self, tiny_data):
        cfg = ChainConfig(n_iter=30, burn_in=10, seed=2,
                          model_variant=ModelVariant.NORMAL_IB_SSB,
                          init=InitSpec(lambda_init=0.5))
        draws = run_chain(cfg, tiny_data, HP)
        assert np.all(draws.lam == 0.0)
        assert np.all(np.isnan(draws.accept_rate_lambda))

    def test_mvn_ib_moves_lambda(self, tiny_data):
        cfg = ChainConfig(n_iter=30, burn_in=10, seed=2,
                          model_variant=ModelVariant.MVN_IB_SSB)
        draws = run_chain(cfg, tiny_data, HP)
        assert np.any(draws.lam != 0.0)


class TestAdaptation:
    def test_scales_frozen_after_burn_in(self, tiny_data):
        cfg = ChainConfig(n_iter=200, burn_in=100, thin=1, seed=6)
        draws = run_chain(cfg, tiny_data, HP)
        assert np.array_equal(draws.proposal_scales_at_freeze,
                              draws.proposal_scales_final)

    def test_acceptance_telemetry_reasonable(self):
        spec = scenario_i_small(n=200, q=15, seed=31)
        data, _ = generate_scenario(spec)
        cfg = ChainConfig(n_iter=1500, burn_in=750, thin=3, seed=8)
        draws = run_chain(cfg, data, Hyperparameters(eta=0.5))
        mean_rate = float(np.nanmean(draws.accept_rate_lambda))
        assert 0.2 < mean_rate < 0.7


class TestRunChains:
    def test_singleton_equals_run_chain(self, tiny_data):
        cfg = ChainConfig(n_iter=40, burn_in=10, seed=11)
        single = run_chain(cfg, tiny_data, HP)
        multi = run_chains([cfg], tiny_data, HP)
        assert len(multi) == 1
        assert np.array_equal(single.tau, multi[0].tau)

    def test_three_chains_pairwise_distinct(self, tiny_data):
        cfgs = [ChainConfig(n_iter=40, burn_in=10, seed=s) for s in (1, 2, 3)]
        out = run_chains(cfgs, tiny_data, HP)
        assert len(out) == 3
        assert not np.array_equal(out[0].tau, out[1].tau)
        assert not np.array_equal(out[1].tau, out[2].tau)

    def test_parallel_matches_serial(self, tiny_data):
        cfgs = [ChainConfig(n_iter=30, burn_in=10, seed=s) for s in (5, 6)]
        serial = run_chains(cfgs, tiny_data, HP, workers=1)
        parallel = run_chains(cfgs, tiny_data, HP, workers=2)
        for a, b in zip(serial, parallel):
            assert np.array_equal(a.tau, b.tau)
            assert np.array_equal(a.sigma_sq, b.sigma_sq)

    def test_duplicate_seeds_rejected(self, tiny_data):
        cfgs = [ChainConfig(n_iter=10, burn_in=2, seed=1)] * 2
        with pytest.raises(ValueError, match="distinct"):
            run_chains(cfgs, tiny_data, HP)

    def test_failures_reported_per_chain(self, tiny_data):
        good = ChainConfig(n_iter=10, burn_in=2, seed=1)
        bad = ChainConfig(n_iter=10, burn_in=2, seed=2,
                          model_variant=ModelVariant.MVN_IB_SSB)
        hp = Hyperparameters(eta=0.5)   # invalid for the IB chain only
        good_mrf = ChainConfig(n_iter=10, burn_in=2, seed=1,
                               model_variant=ModelVariant.MVN_MRF_SSB)
        with pytest.raises(MultiChainError) as exc:
            run_chains([good_mrf, bad], tiny_data, hp)
        assert 1 in exc.value.errors
        assert 0 in exc.value.results   # surviving chain is attached


class TestInitSpec:
    def test_random_policies_respect_support(self, tiny_data):
        init = InitSpec(gamma_policy="random", gamma_prob=0.5,
                        omega_policy="random", omega_prob=0.5,
                        tau_init=0.3, delta_init=0.2)
        cfg = ChainConfig(n_iter=10, burn_in=2, seed=13, init=init)
        draws = run_chain(cfg, tiny_data, HP)    # would raise on violation
        assert draws.n_kept == 8

    def test_bad_policy_rejected(self):
        with pytest.raises(ValueError):
            InitSpec(gamma_policy="everything").validate()
