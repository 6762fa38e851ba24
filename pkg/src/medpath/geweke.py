"""Joint-distribution (Geweke) correctness harness for the MCMC kernel.

Two simulators over the pair (parameters, data) with the design (A, X) held
fixed: the marginal-conditional simulator draws parameters from the prior
and data from the model, i.i.d.; the successive-conditional simulator
alternates kernel moves with fresh data draws. When every move preserves
the joint prior-times-model law, the two simulators agree on every scalar
functional up to Monte Carlo error.

Cut feedback needs one structural accommodation. The (gamma, tau) update
deliberately ignores the outcome model, so it is NOT the full conditional
given (omega, delta, Y) -- as written, the naive pair chain provably drifts
in the outcome-side coordinates (exact enumeration on a binary toy shows
E[omega] settling below its prior-model value). The update IS, however, the
exact conditional with (omega, delta, Y) integrated out: the dropped factor
pi(omega | gamma) p(delta | omega) p(Y | ...) integrates to one for either
value of gamma_j. A collapsed draw is valid Gibbs when the collapsed
variables are regenerated from their joint conditional -- prior then
likelihood -- before anything reads them again. The successive-conditional
simulator therefore runs the production blocks in the production order and
regenerates (omega, delta, Y) between the two sweep halves, which exercises
every production block against exact invariance. On real data no such
regeneration exists (Y is observed); there the cut posterior is the
documented target, not the full-model posterior.

The gamma prior is the autologistic MRF; for eta > 0 the marginal-
conditional simulator samples it exactly by enumerating all 2^q
configurations (small q only).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .data import MediationDataset
from .model import FactorCovariance, Hyperparameters, ParameterState, expit
from .sampler import (
    AdaptSpec,
    AdaptState,
    ModelVariant,
    sweep_first_half,
    sweep_second_half,
)


def harness_hyperparameters(eta: float = 0.0) -> Hyperparameters:
    """Moderate prior scales: proper and deliberately non-diffuse so the
    test has power to detect kernel bugs. nu0/nu1 are large enough that the
    monitored second moments (tau^2, lambda^2, variance squares) have finite
    sampling variance, otherwise their z-scores have no valid CLT."""
    hp = Hyperparameters(
        theta_omega=0.3, eta=eta, v_sq=2.0, psi_sq=2.0,
        h0=2.0, c0=2.0, s0=2.0, t0=2.0, k0=2.0,
        nu0=16.0, nu1=16.0, sigma0_sq=0.5, sigma1_sq=0.5,
        mu_lambda=0.0, h_lambda=0.5,
    )
    return hp.with_gamma_probability(0.3)


def sample_gamma_prior(q: int, cov: FactorCovariance, hp: Hyperparameters,
                       rng: np.random.Generator) -> np.ndarray:
    """Exact draw from the MRF prior. Independent Bernoullis when eta = 0;
    otherwise enumeration of the autologistic joint (q <= 20)."""
    if hp.eta == 0.0:
        return rng.random(q) < expit(hp.theta_gamma)
    if q > 20:
        raise ValueError("exact MRF sampling by enumeration needs q <= 20")
    u = cov.corr_weights()
    configs = np.array(np.meshgrid(*[[0.0, 1.0]] * q, indexing="ij")).reshape(q, -1).T
    ug = configs * u
    totals = ug.sum(axis=1)
    pair_sums = 0.5 * (totals ** 2 - (ug ** 2).sum(axis=1))
    log_w = hp.theta_gamma * configs.sum(axis=1) + hp.eta * pair_sums
    w = np.exp(log_w - log_w.max())
    w /= w.sum()
    pick = rng.choice(configs.shape[0], p=w)
    return configs[pick].astype(bool)


def refresh_outcome_selection(state: ParameterState, hp: Hyperparameters,
                              rng: np.random.Generator) -> None:
    """(omega, delta) from their prior given the realized gamma and the
    current sigma_sq: the first part of the collapsed-variable refresh."""
    q = state.q
    state.omega = state.gamma & (rng.random(q) < hp.theta_omega)
    delta_sd = np.sqrt(hp.psi_sq_vector(q) * state.sigma_sq)
    state.delta = np.where(state.omega, delta_sd * rng.standard_normal(q), 0.0)


def sample_prior_state(q: int, p: int, hp: Hyperparameters,
                       variant: ModelVariant, rng: np.random.Generator) -> ParameterState:
    """One draw from the joint prior in its generative order."""
    state = ParameterState.zeros(q, p)
    state.sigma_sq_Sigma = float(hp.nu0 * hp.sigma0_sq / 2.0 / rng.gamma(hp.nu0 / 2.0))
    if variant.has_lambda:
        state.lam = hp.mu_lambda + math.sqrt(hp.h_lambda * state.sigma_sq_Sigma) \
            * rng.standard_normal(q)
    cov = FactorCovariance.from_state(state)
    state.gamma = sample_gamma_prior(q, cov, hp, rng)
    slab_sd = np.sqrt(hp.v_sq_vector(q) * cov.marginal_variances())
    state.tau = np.where(state.gamma, slab_sd * rng.standard_normal(q), 0.0)
    state.beta0 = math.sqrt(hp.h0) * rng.standard_normal(q)
    state.B = math.sqrt(hp.c0) * rng.standard_normal((p, q))
    state.sigma_sq = float(hp.nu1 * hp.sigma1_sq / 2.0 / rng.gamma(hp.nu1 / 2.0))
    refresh_outcome_selection(state, hp, rng)
    state.alpha0 = math.sqrt(hp.s0) * float(rng.standard_normal())
    state.alpha = math.sqrt(hp.t0) * rng.standard_normal(p)
    state.alpha_p1 = math.sqrt(hp.k0) * float(rng.standard_normal())
    return state


def sample_mediators(state: ParameterState, A: np.ndarray, X: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    n = A.shape[0]
    mean_M = state.beta0 + np.outer(A, state.tau) + X @ state.B
    z0 = rng.standard_normal(n)
    Z = rng.standard_normal((n, state.q))
    return mean_M + math.sqrt(state.sigma_sq_Sigma) * (np.outer(z0, state.lam) + Z)


def sample_outcome(state: ParameterState, A: np.ndarray, X: np.ndarray,
                   M: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    mean_Y = state.alpha0 + M @ state.delta + X @ state.alpha + state.alpha_p1 * A
    return mean_Y + math.sqrt(state.sigma_sq) * rng.standard_normal(A.shape[0])


def sample_data(state: ParameterState, A: np.ndarray, X: np.ndarray,
                rng: np.random.Generator) -> MediationDataset:
    """Fresh (M, Y) from the observed-data model at the fixed design."""
    M = sample_mediators(state, A, X, rng)
    Y = sample_outcome(state, A, X, M, rng)
    return MediationDataset(X=X, A=A, M=M, Y=Y)


def functional_names(q: int, p: int) -> list[str]:
    names: list[str] = []
    for base in ("gamma", "tau", "tau_sq", "omega", "delta", "delta_sq",
                 "lambda", "lambda_sq"):
        names += [f"{base}_{j + 1}" for j in range(q)]
    names += ["sigma_sq_Sigma", "sigma_sq_Sigma_sq", "sigma_sq", "sigma_sq_sq",
              "alpha0", "alpha_p1", "alpha_p1_sq", "mean_beta0", "mean_B"]
    return names


def functionals(state: ParameterState) -> np.ndarray:
    return np.concatenate([
        state.gamma.astype(float), state.tau, state.tau ** 2,
        state.omega.astype(float), state.delta, state.delta ** 2,
        state.lam, state.lam ** 2,
        [state.sigma_sq_Sigma, state.sigma_sq_Sigma ** 2,
         state.sigma_sq, state.sigma_sq ** 2,
         state.alpha0, state.alpha_p1, state.alpha_p1 ** 2,
         float(state.beta0.mean()), float(state.B.mean())],
    ])


def _batch_se(samples: np.ndarray, n_batches: int = 50) -> np.ndarray:
    """Batch-means standard error of the mean, robust to autocorrelation."""
    n = samples.shape[0]
    size = max(1, n // n_batches)
    n_batches = n // size
    trimmed = samples[: size * n_batches]
    batches = trimmed.reshape(n_batches, size, -1).mean(axis=1)
    return batches.std(axis=0, ddof=1) / math.sqrt(n_batches)


@dataclass
class GewekeResult:
    names: list[str]
    z_scores: np.ndarray
    mc_means: np.ndarray
    sc_means: np.ndarray
    elapsed: float

    @property
    def max_abs_z(self) -> float:
        return float(np.nanmax(np.abs(self.z_scores)))

    def failures(self, bound: float = 4.0) -> list[tuple[str, float]]:
        bad = np.abs(self.z_scores) >= bound
        return [(self.names[i], float(self.z_scores[i])) for i in np.flatnonzero(bad)]


def run_geweke(n: int = 20, q: int = 5, p: int = 2, eta: float = 0.0,
               n_samples: int = 100_000, seed: int = 0,
               variant: ModelVariant = ModelVariant.MVN_MRF_SSB,
               hp: Hyperparameters | None = None,
               proposal_sd: float = 0.4) -> GewekeResult:
    start = time.perf_counter()
    if hp is None:
        hp = harness_hyperparameters(eta)
    if hp.eta != eta:
        raise ValueError("hp.eta must match the requested eta")
    design_rng = np.random.default_rng(seed)
    X = design_rng.standard_normal((n, p))
    A = X @ design_rng.uniform(0.2, 0.8, size=p) + design_rng.standard_normal(n)

    mc_rng = np.random.default_rng(seed + 1)
    n_f = len(functional_names(q, p))
    mc = np.empty((n_samples, n_f))
    for s in range(n_samples):
        mc[s] = functionals(sample_prior_state(q, p, hp, variant, mc_rng))

    sc_rng = np.random.default_rng(seed + 2)
    state = sample_prior_state(q, p, hp, variant, sc_rng)
    data = sample_data(state, A, X, sc_rng)
    adapt_state = AdaptState.from_spec(
        AdaptSpec(initial_proposal_var_lambda=proposal_sd ** 2), q)
    sc = np.empty((n_samples, n_f))
    for s in range(n_samples):
        sweep_first_half(state, data, hp, variant, adapt_state, sc_rng, sc_rng,
                         adapt=False)
        # collapsed-variable refresh: (omega, delta) from the prior given the
        # new gamma, then Y from the model, before the outcome blocks read them
        refresh_outcome_selection(state, hp, sc_rng)
        Y = sample_outcome(state, A, X, data.M, sc_rng)
        data = MediationDataset(X=X, A=A, M=data.M, Y=Y)
        sweep_second_half(state, data, hp, sc_rng)
        data = sample_data(state, A, X, sc_rng)
        sc[s] = functionals(state)

    mc_mean = mc.mean(axis=0)
    sc_mean = sc.mean(axis=0)
    se_mc = mc.std(axis=0, ddof=1) / math.sqrt(n_samples)
    se_sc = _batch_se(sc)
    denom = np.sqrt(se_mc ** 2 + se_sc ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = (mc_mean - sc_mean) / denom
    z[denom == 0.0] = 0.0
    return GewekeResult(names=functional_names(q, p), z_scores=z,
                        mc_means=mc_mean, sc_means=sc_mean,
                        elapsed=time.perf_counter() - start)
