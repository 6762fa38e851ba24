"""MCMC kernel: marginalized stochastic-search variable selection for
(gamma, tau) under the MRF prior with cut feedback, SSVS for (omega, delta)
under the SSB coupling, joint refinement redraws of active coefficients,
per-coordinate adaptive random-walk Metropolis for the factor loadings, and
conjugate Gibbs updates for everything else.

Design notes that matter for correctness:

* Each chain uses two independent RNG streams (SeedSequence spawn): one for
  mediator-model blocks, one for outcome-model blocks. The (gamma, tau)
  sample path is therefore measurable with respect to (M, A, X) and the
  mediator-model parameters only -- perturbing Y cannot shift it, which is
  the cut-feedback contract.
* The gamma update never evaluates the outcome likelihood. When gamma_j
  drops 1 -> 0 the SSB support constraint forces (omega_j, delta_j) to
  (False, 0).
* Every block draws from an exact full conditional except the lambda block,
  which is random-walk Metropolis with Robbins-Monro scale adaptation that
  freezes after burn-in.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

from .data import MediationDataset
from .model import (
    FactorCovariance,
    Hyperparameters,
    ParameterState,
    expit,
)


class SamplerError(RuntimeError):
    """Numerical degeneracy inside an MCMC block."""


class MultiChainError(RuntimeError):
    """One or more chains failed; per-chain errors are attached."""

    def __init__(self, errors: dict[int, str], results: dict[int, "ChainDraws"]):
        self.errors = errors
        self.results = results
        lines = "; ".join(f"chain {i}: {msg}" for i, msg in sorted(errors.items()))
        super().__init__(f"{len(errors)} chain(s) failed: {lines}")


class ModelVariant(str, Enum):
    NORMAL_IB_SSB = "normal-ib-ssb"
    MVN_IB_SSB = "mvn-ib-ssb"
    MVN_MRF_SSB = "mvn-mrf-ssb"

    @property
    def has_lambda(self) -> bool:
        """Whether the factor loadings are model parameters (Sigma non-diagonal)."""
        return self is not ModelVariant.NORMAL_IB_SSB

    @property
    def allows_mrf(self) -> bool:
        return self is ModelVariant.MVN_MRF_SSB


@dataclass
class InitSpec:
    """Initial state policy. Coefficients are masked by their indicators, so
    the constructed state always satisfies the support invariants."""

    tau_init: float | np.ndarray = 0.0
    delta_init: float | np.ndarray = 0.0
    lambda_init: float | np.ndarray = 0.0
    gamma_policy: str = "all-off"       # all-off | all-on | random
    gamma_prob: float = 0.1
    omega_policy: str = "all-off"
    omega_prob: float = 0.1
    sigma_sq_Sigma_init: float = 1.0
    sigma_sq_init: float = 1.0

    def validate(self) -> None:
        for name in ("gamma_policy", "omega_policy"):
            if getattr(self, name) not in ("all-off", "all-on", "random"):
                raise ValueError(f"{name} must be all-off, all-on or random")
        if self.sigma_sq_Sigma_init <= 0 or self.sigma_sq_init <= 0:
            raise ValueError("variance inits must be positive")

    def _indicator(self, policy: str, prob: float, q: int,
                   rng: np.random.Generator) -> np.ndarray:
        if policy == "all-off":
            return np.zeros(q, dtype=bool)
        if policy == "all-on":
            return np.ones(q, dtype=bool)
        return rng.random(q) < prob

    def build_state(self, q: int, p: int, variant: ModelVariant,
                    rng_mediator: np.random.Generator,
                    rng_outcome: np.random.Generator) -> ParameterState:
        self.validate()
        state = ParameterState.zeros(q, p)
        gamma = self._indicator(self.gamma_policy, self.gamma_prob, q, rng_mediator)
        omega = self._indicator(self.omega_policy, self.omega_prob, q, rng_outcome) & gamma
        state.gamma = gamma
        state.omega = omega
        state.tau = np.where(gamma, np.broadcast_to(np.asarray(self.tau_init, float), (q,)), 0.0)
        state.delta = np.where(omega, np.broadcast_to(np.asarray(self.delta_init, float), (q,)), 0.0)
        if variant.has_lambda:
            state.lam = np.broadcast_to(np.asarray(self.lambda_init, float), (q,)).copy()
        state.sigma_sq_Sigma = self.sigma_sq_Sigma_init
        state.sigma_sq = self.sigma_sq_init
        state.validate()
        return state


@dataclass
class AdaptSpec:
    initial_proposal_var_lambda: float = 0.01
    target_accept: float = 0.44
    adapt_window: int = 50
    adapt_until: int | None = None    # defaults to burn_in
    adapt_rate0: float = 0.25

    def validate(self) -> None:
        if self.initial_proposal_var_lambda <= 0:
            raise ValueError("initial proposal variance must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0,1)")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be positive")


@dataclass
class AdaptState:
    """Mutable adaptation bookkeeping for the lambda proposals."""

    log_var: np.ndarray
    target: float
    step: float = 0.0              # Robbins-Monro step, set per iteration
    accepts_post: np.ndarray | None = None
    sweeps_post: int = 0

    @classmethod
    def from_spec(cls, spec: AdaptSpec, q: int) -> "AdaptState":
        return cls(log_var=np.full(q, math.log(spec.initial_proposal_var_lambda)),
                   target=spec.target_accept,
                   accepts_post=np.zeros(q))

    def record_post_burn(self, accepted: np.ndarray) -> None:
        self.accepts_post += accepted
        self.sweeps_post += 1

    @property
    def post_burn_accept_rates(self) -> np.ndarray:
        if self.sweeps_post == 0:
            return np.full_like(self.accepts_post, np.nan)
        return self.accepts_post / self.sweeps_post


@dataclass
class ChainConfig:
    n_iter: int
    burn_in: int
    thin: int = 1
    seed: int = 0
    model_variant: ModelVariant = ModelVariant.MVN_MRF_SSB
    init: InitSpec = field(default_factory=InitSpec)
    adapt: AdaptSpec = field(default_factory=AdaptSpec)
    random_scan: bool = False

    def validate(self) -> None:
        if self.n_iter < 1:
            raise ValueError("n_iter must be positive")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be positive")
        self.adapt.validate()
        self.init.validate()

    @property
    def n_kept(self) -> int:
        # keep t with t > burn_in and (t - burn_in) % thin == 0
        return (self.n_iter - self.burn_in) // self.thin


@dataclass
class ChainDraws:
    """Thinned post-burn-in states of one chain plus telemetry."""

    gamma: np.ndarray          # (K, q) bool
    tau: np.ndarray            # (K, q)
    omega: np.ndarray          # (K, q) bool
    delta: np.ndarray          # (K, q)
    lam: np.ndarray            # (K, q)
    beta0: np.ndarray          # (K, q)
    B: np.ndarray              # (K, p, q)
    alpha0: np.ndarray         # (K,)
    alpha: np.ndarray          # (K, p)
    alpha_p1: np.ndarray       # (K,)
    sigma_sq_Sigma: np.ndarray  # (K,)
    sigma_sq: np.ndarray       # (K,)
    accept_rate_lambda: np.ndarray   # (q,) post-burn-in acceptance rates
    eta_used: float
    wall_time: float
    seed: int
    n_iter: int
    burn_in: int
    thin: int
    model_variant: str
    proposal_scales_at_freeze: np.ndarray
    proposal_scales_final: np.ndarray

    @property
    def n_kept(self) -> int:
        return self.gamma.shape[0]

    @property
    def q(self) -> int:
        return self.gamma.shape[1]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    def kept_state(self, i: int) -> ParameterState:
        return ParameterState(
            beta0=self.beta0[i].copy(), B=self.B[i].copy(), tau=self.tau[i].copy(),
            gamma=self.gamma[i].copy(), lam=self.lam[i].copy(),
            sigma_sq_Sigma=float(self.sigma_sq_Sigma[i]), alpha0=float(self.alpha0[i]),
            alpha=self.alpha[i].copy(), alpha_p1=float(self.alpha_p1[i]),
            delta=self.delta[i].copy(), omega=self.omega[i].copy(),
            sigma_sq=float(self.sigma_sq[i]),
        )


def _rank_one_gaussian_draw(c1: float, c2: float, lam: np.ndarray, L: float,
                            b: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Draw N(P^-1 b, P^-1) for precision P = c1 I - c2 lam lam^T (c2 >= 0).

    Uses Sherman-Morrison for the mean and a closed-form symmetric square
    root of P^-1, so the cost is O(q)."""
    tail = c1 - c2 * L
    if tail <= 0.0 or c1 <= 0.0:
        raise SamplerError("rank-one precision not positive definite")
    d = c2 / tail
    mean = (b + d * lam * float(lam @ b)) / c1
    if L > 0.0:
        e = (math.sqrt(1.0 + d * L) - 1.0) / L
    else:
        e = 0.0
    noise = (z + e * lam * float(lam @ z)) / math.sqrt(c1)
    return mean + noise


def _precision_gaussian_draw(prec: np.ndarray, b: np.ndarray,
                             z: np.ndarray) -> np.ndarray:
    """Draw N(P^-1 b, P^-1) via Cholesky of the dense precision P."""
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        raise SamplerError("singular conditional precision (collinear inputs)") from None
    w = solve_triangular(chol, b, lower=True)
    mean = solve_triangular(chol.T, w, lower=False)
    return mean + solve_triangular(chol.T, z, lower=False)


def _mediator_residual(state: ParameterState, data: MediationDataset) -> np.ndarray:
    R = data.M - state.beta0 - np.outer(data.A, state.tau)
    if data.p:
        R = R - data.X @ state.B
    return R


def _outcome_residual(state: ParameterState, data: MediationDataset) -> np.ndarray:
    e = data.Y - state.alpha0 - data.M @ state.delta - state.alpha_p1 * data.A
    if data.p:
        e = e - data.X @ state.alpha
    return e


def update_mediator_fixed_effects(state: ParameterState, data: MediationDataset | None,
                                  hp: Hyperparameters, rng: np.random.Generator) -> ParameterState:
    """Exact Gaussian draws for beta0 and each covariate row of B, using the
    rank-one form of Sigma^-1 (O(q) per draw). ``data=None`` recovers the
    priors (no observations)."""
    if data is None:
        q, p = state.q, state.p
        state.beta0 = math.sqrt(hp.h0) * rng.standard_normal(q)
        state.B = math.sqrt(hp.c0) * rng.standard_normal((p, q))
        return state
    n, q = data.n, data.q
    lam = state.lam
    s2 = state.sigma_sq_Sigma
    L = float(lam @ lam)
    one_plus_L = 1.0 + L
    base = data.M - np.outer(data.A, state.tau)
    XB = data.X @ state.B if data.p else 0.0
    # beta0 block
    E = base - XB - state.beta0
    colsum = E.sum(axis=0) + n * state.beta0     # residual sums with beta0 removed
    b = (colsum - lam * (float(lam @ colsum) / one_plus_L)) / s2
    c1 = n / s2 + 1.0 / hp.h0
    c2 = (n / s2) / one_plus_L
    state.beta0 = _rank_one_gaussian_draw(c1, c2, lam, L, b, rng.standard_normal(q))
    for k in range(data.p):
        xk = data.X[:, k]
        Ek = base - state.beta0 - data.X @ state.B + np.outer(xk, state.B[k])
        sxx = float(xk @ xk)
        stat = xk @ Ek
        b = (stat - lam * (float(lam @ stat) / one_plus_L)) / s2
        c1 = sxx / s2 + 1.0 / hp.c0
        c2 = (sxx / s2) / one_plus_L
        state.B[k] = _rank_one_gaussian_draw(c1, c2, lam, L, b, rng.standard_normal(q))
    return state


def update_outcome_fixed_effects(state: ParameterState, data: MediationDataset | None,
                                 hp: Hyperparameters, rng: np.random.Generator) -> ParameterState:
    """Joint Gaussian draw for (alpha0, alpha, alpha_{p+1}). ``data=None``
    recovers the priors."""
    if data is None:
        p = state.p
        state.alpha0 = math.sqrt(hp.s0) * float(rng.standard_normal())
        state.alpha = math.sqrt(hp.t0) * rng.standard_normal(p)
        state.alpha_p1 = math.sqrt(hp.k0) * float(rng.standard_normal())
        return state
    n, p = data.n, data.p
    W = np.column_stack([np.ones(n), data.X, data.A])
    resid = data.Y - data.M @ state.delta
    prec = W.T @ W / state.sigma_sq
    prior_prec = np.concatenate([[1.0 / hp.s0], np.full(p, 1.0 / hp.t0), [1.0 / hp.k0]])
    prec[np.diag_indices_from(prec)] += prior_prec
    b = W.T @ resid / state.sigma_sq
    draw = _precision_gaussian_draw(prec, b, rng.standard_normal(p + 2))
    state.alpha0 = float(draw[0])
    state.alpha = draw[1:p + 1].copy()
    state.alpha_p1 = float(draw[p + 1])
    return state


def update_fixed_effects(state: ParameterState, data: MediationDataset,
                         cov: FactorCovariance | None, hp: Hyperparameters,
                         rng: np.random.Generator) -> ParameterState:
    """Both fixed-effect blocks with a single stream (test convenience; the
    chain itself uses the split updates on separate streams)."""
    update_mediator_fixed_effects(state, data, hp, rng)
    return update_outcome_fixed_effects(state, data, hp, rng)


def _gamma_tau_stats(j: int, lam_j: float, tau_j: float, AtR_j: float, AtT: float,
                     SAA: float, s2: float, c_inv: float, v_sq_j: float) -> tuple[float, float, float]:
    """(b, prior_precision, posterior_precision) for the slab conditional of
    tau_j with tau_j zeroed out of the maintained residual statistics."""
    atr0 = AtR_j + SAA * tau_j
    att0 = AtT + lam_j * SAA * tau_j
    b = (atr0 - lam_j * c_inv * att0) / s2
    prec_lik = SAA * (1.0 - lam_j * lam_j * c_inv) / s2
    p0 = 1.0 / (v_sq_j * s2 * (lam_j * lam_j + 1.0))
    return b, p0, p0 + prec_lik


def gamma_inclusion_log_odds(state: ParameterState, data: MediationDataset,
                             cov: FactorCovariance | None,
                             hp: Hyperparameters) -> np.ndarray:
    """Conditional posterior log-odds of gamma_j=1 at the current state (no
    sequential updating); the mediator likelihood only -- cut feedback."""
    if cov is None:
        cov = FactorCovariance.from_state(state)
    q = data.q
    R = _mediator_residual(state, data)
    T = R @ state.lam
    AtR = data.A @ R
    AtT = float(data.A @ T)
    SAA = float(data.A @ data.A)
    c_inv = 1.0 / (1.0 + cov.lambda_norm_sq)
    u = cov.corr_weights()
    s_act = float(u @ state.gamma)
    v_sq = hp.v_sq_vector(q)
    out = np.empty(q)
    for j in range(q):
        b, p0, prec = _gamma_tau_stats(j, float(state.lam[j]), float(state.tau[j]),
                                       float(AtR[j]), AtT, SAA,
                                       state.sigma_sq_Sigma, c_inv, float(v_sq[j]))
        neigh = u[j] * (s_act - u[j] * state.gamma[j])
        prior = hp.theta_gamma + hp.eta * neigh
        out[j] = prior + 0.5 * math.log(p0 / prec) + 0.5 * b * b / prec
    return out


def update_gamma_tau(state: ParameterState, data: MediationDataset,
                     cov: FactorCovariance | None, hp: Hyperparameters,
                     rng: np.random.Generator, random_scan: bool = False) -> ParameterState:
    """Sweep of exact marginalized Gibbs draws for (gamma_j, tau_j).

    tau_j is analytically integrated out of the mediator likelihood, the MRF
    prior odds use the current gamma and factor correlations, and the
    outcome likelihood is never touched. A 1 -> 0 transition of gamma_j
    forces (omega_j, delta_j) to (False, 0), the SSB support constraint.
    """
    q = data.q
    A = data.A
    lam = state.lam
    s2 = state.sigma_sq_Sigma
    L = float(lam @ lam)
    c_inv = 1.0 / (1.0 + L)
    R = np.asfortranarray(_mediator_residual(state, data))
    T = R @ lam
    AtR = A @ R
    AtT = float(A @ T)
    SAA = float(A @ A)
    u = np.abs(lam) / np.sqrt(lam * lam + 1.0)
    s_act = float(u @ state.gamma)
    v_sq = hp.v_sq_vector(q)
    unif = rng.random(q)
    zs = rng.standard_normal(q)
    order = rng.permutation(q) if random_scan else range(q)
    gamma = state.gamma
    tau = state.tau
    eta = hp.eta
    theta = hp.theta_gamma
    for j in order:
        tau_j = float(tau[j])
        lam_j = float(lam[j])
        b, p0, prec = _gamma_tau_stats(j, lam_j, tau_j, float(AtR[j]), AtT,
                                       SAA, s2, c_inv, float(v_sq[j]))
        if not math.isfinite(prec) or prec <= 0.0:
            raise SamplerError(f"non-finite posterior precision at mediator {j}")
        u_j = float(u[j])
        neigh = u_j * (s_act - u_j) if gamma[j] else u_j * s_act
        log_odds = (theta + eta * neigh
                    + 0.5 * math.log(p0 / prec) + 0.5 * b * b / prec)
        include = unif[j] < expit(log_odds)
        new_tau = (b / prec + zs[j] / math.sqrt(prec)) if include else 0.0
        if include != bool(gamma[j]):
            s_act += u_j if include else -u_j
            gamma[j] = include
            if not include:
                state.omega[j] = False
                state.delta[j] = 0.0
        move = new_tau - tau_j
        if move != 0.0:
            tau[j] = new_tau
            R[:, j] -= move * A
            AtR[j] -= move * SAA
            if lam_j != 0.0:
                T -= (move * lam_j) * A
                AtT -= move * lam_j * SAA
    return state


def omega_inclusion_log_odds(state: ParameterState, data: MediationDataset,
                             hp: Hyperparameters) -> np.ndarray:
    """Conditional posterior log-odds of omega_j=1 at the current state for
    gamma-active coordinates (-inf elsewhere: the SSB point mass)."""
    q = data.q
    e = _outcome_residual(state, data)
    psi_sq = hp.psi_sq_vector(q)
    s2 = state.sigma_sq
    theta = math.log(hp.theta_omega / (1.0 - hp.theta_omega))
    out = np.full(q, -math.inf)
    for j in np.flatnonzero(state.gamma):
        col = data.M[:, j]
        ssq = float(col @ col)
        b = (float(col @ e) + float(state.delta[j]) * ssq) / s2
        p0 = 1.0 / (psi_sq[j] * s2)
        prec = p0 + ssq / s2
        out[j] = theta + 0.5 * math.log(p0 / prec) + 0.5 * b * b / prec
    return out


def update_omega_delta(state: ParameterState, data: MediationDataset,
                       hp: Hyperparameters, rng: np.random.Generator,
                       random_scan: bool = False) -> ParameterState:
    """Exact marginalized Gibbs sweep for (omega_j, delta_j) over the
    gamma-active coordinates; inactive ones keep their SSB point mass."""
    q = data.q
    e = _outcome_residual(state, data)
    psi_sq = hp.psi_sq_vector(q)
    s2 = state.sigma_sq
    theta = math.log(hp.theta_omega / (1.0 - hp.theta_omega))
    unif = rng.random(q)
    zs = rng.standard_normal(q)
    active = np.flatnonzero(state.gamma)
    if random_scan:
        active = rng.permutation(active)
    omega = state.omega
    delta = state.delta
    for j in active:
        col = data.M[:, j]
        delta_j = float(delta[j])
        ssq = float(col @ col)
        b = (float(col @ e) + delta_j * ssq) / s2
        p0 = 1.0 / (psi_sq[j] * s2)
        prec = p0 + ssq / s2
        if not math.isfinite(prec) or prec <= 0.0:
            raise SamplerError(f"non-finite posterior precision at outcome term {j}")
        log_odds = theta + 0.5 * math.log(p0 / prec) + 0.5 * b * b / prec
        include = unif[j] < expit(log_odds)
        new_delta = (b / prec + zs[j] / math.sqrt(prec)) if include else 0.0
        omega[j] = include
        move = new_delta - delta_j
        if move != 0.0:
            delta[j] = new_delta
            e -= move * col
    return state


def refine_tau(state: ParameterState, data: MediationDataset,
               cov: FactorCovariance | None, hp: Hyperparameters,
               rng: np.random.Generator) -> ParameterState:
    """Joint redraw of the active tau sub-vector from its multivariate
    Gaussian full conditional; indicators unchanged."""
    idx = np.flatnonzero(state.gamma)
    if idx.size == 0:
        return state
    lam = state.lam
    s2 = state.sigma_sq_Sigma
    L = float(lam @ lam)
    one_plus_L = 1.0 + L
    E = data.M - state.beta0
    if data.p:
        E = E - data.X @ state.B
    w = data.A @ E
    SAA = float(data.A @ data.A)
    lam_s = lam[idx]
    k = idx.size
    prec = (SAA / s2) * (np.eye(k) - np.outer(lam_s, lam_s) / one_plus_L)
    v_sq = hp.v_sq_vector(data.q)
    prec[np.diag_indices(k)] += 1.0 / (v_sq[idx] * s2 * (lam_s ** 2 + 1.0))
    b = (w[idx] - lam_s * (float(lam @ w) / one_plus_L)) / s2
    state.tau[idx] = _precision_gaussian_draw(prec, b, rng.standard_normal(k))
    return state


def refine_delta(state: ParameterState, data: MediationDataset,
                 hp: Hyperparameters, rng: np.random.Generator) -> ParameterState:
    """Joint redraw of the active delta sub-vector from its Gaussian full
    conditional; indicators unchanged."""
    idx = np.flatnonzero(state.omega)
    if idx.size == 0:
        return state
    Mact = data.M[:, idx]
    resid0 = data.Y - state.alpha0 - state.alpha_p1 * data.A
    if data.p:
        resid0 = resid0 - data.X @ state.alpha
    s2 = state.sigma_sq
    prec = Mact.T @ Mact / s2
    psi_sq = hp.psi_sq_vector(data.q)
    prec[np.diag_indices(idx.size)] += 1.0 / (psi_sq[idx] * s2)
    b = Mact.T @ resid0 / s2
    state.delta[idx] = _precision_gaussian_draw(prec, b, rng.standard_normal(idx.size))
    return state


def refine_active(state: ParameterState, data: MediationDataset,
                  cov: FactorCovariance | None, hp: Hyperparameters,
                  rng: np.random.Generator) -> ParameterState:
    """Both refinement blocks with a single stream (test convenience)."""
    refine_tau(state, data, cov, hp, rng)
    return refine_delta(state, data, hp, rng)


def lambda_log_ratio(state: ParameterState, data: MediationDataset,
                     hp: Hyperparameters, j: int, proposal: float) -> float:
    """Log acceptance ratio for a per-coordinate lambda_j proposal: mediator
    likelihood + lambda prior + the active-tau slab that depends on
    Sigma_(j,j). Exposed for tests; the sweep computes the same quantity
    incrementally."""
    R = _mediator_residual(state, data)
    T = R @ state.lam
    lam_j = float(state.lam[j])
    return _lambda_log_ratio_terms(
        n=data.n, s2=state.sigma_sq_Sigma, L=float(state.lam @ state.lam),
        sumT2=float(T @ T), col=R[:, j], T=T, lam_j=lam_j, proposal=proposal,
        mu=hp.mu_lambda, h_lambda=hp.h_lambda,
        tau_j=float(state.tau[j]) if state.gamma[j] else None,
        v_sq_j=float(hp.v_sq_vector(data.q)[j]),
    )[0]


def _lambda_log_ratio_terms(n: int, s2: float, L: float, sumT2: float,
                            col: np.ndarray, T: np.ndarray, lam_j: float,
                            proposal: float, mu: float, h_lambda: float,
                            tau_j: float | None, v_sq_j: float):
    T_prop = T + (proposal - lam_j) * col
    sumT2_prop = float(T_prop @ T_prop)
    L_prop = L + proposal * proposal - lam_j * lam_j
    log_ratio = (-0.5 * n * (math.log1p(L_prop) - math.log1p(L))
                 + (sumT2_prop / (1.0 + L_prop) - sumT2 / (1.0 + L)) / (2.0 * s2))
    log_ratio -= ((proposal - mu) ** 2 - (lam_j - mu) ** 2) / (2.0 * h_lambda * s2)
    if tau_j is not None:
        var_new = v_sq_j * s2 * (proposal * proposal + 1.0)
        var_old = v_sq_j * s2 * (lam_j * lam_j + 1.0)
        log_ratio += (-0.5 * (math.log(var_new) - math.log(var_old))
                      - 0.5 * tau_j * tau_j * (1.0 / var_new - 1.0 / var_old))
    return log_ratio, T_prop, sumT2_prop, L_prop


def update_lambda(state: ParameterState, data: MediationDataset,
                  hp: Hyperparameters, adapt_state: AdaptState,
                  rng: np.random.Generator, adapt: bool = False) -> np.ndarray:
    """Per-coordinate random-walk Metropolis sweep over the factor loadings.

    Proposal scales adapt toward the target acceptance rate only while
    ``adapt`` is True (burn-in); afterwards they are frozen so the chain
    keeps the correct stationary law. Returns the acceptance indicators.
    """
    q = data.q
    lam = state.lam
    s2 = state.sigma_sq_Sigma
    R = np.asfortranarray(_mediator_residual(state, data))
    T = R @ lam
    sumT2 = float(T @ T)
    L = float(lam @ lam)
    v_sq = hp.v_sq_vector(q)
    zs = rng.standard_normal(q)
    unif_log = np.log(rng.random(q))
    accepted = np.zeros(q, dtype=bool)
    n = data.n
    for j in range(q):
        lam_j = float(lam[j])
        sd = math.exp(0.5 * adapt_state.log_var[j])
        proposal = lam_j + sd * zs[j]
        log_ratio, T_prop, sumT2_prop, L_prop = _lambda_log_ratio_terms(
            n=n, s2=s2, L=L, sumT2=sumT2, col=R[:, j], T=T, lam_j=lam_j,
            proposal=proposal, mu=hp.mu_lambda, h_lambda=hp.h_lambda,
            tau_j=float(state.tau[j]) if state.gamma[j] else None,
            v_sq_j=float(v_sq[j]),
        )
        if unif_log[j] < log_ratio:
            lam[j] = proposal
            T = T_prop
            sumT2 = sumT2_prop
            L = L_prop
            accepted[j] = True
        if adapt:
            adapt_state.log_var[j] += adapt_state.step * ((1.0 if accepted[j] else 0.0)
                                                          - adapt_state.target)
    return accepted


def mediator_variance_conditional(state: ParameterState, data: MediationDataset | None,
                                  hp: Hyperparameters,
                                  include_lambda_prior: bool = True) -> tuple[float, float]:
    """(shape, rate) of the inverse-gamma full conditional of sigma_sq_Sigma.

    Collects every sigma_sq_Sigma-scaled quadratic form: mediator residuals,
    the lambda prior (MVN variants only), and the active-tau slabs.
    ``data=None`` means no observations (prior-recovery testing).
    """
    lam = state.lam
    L = float(lam @ lam)
    q = state.q
    if data is not None:
        R = _mediator_residual(state, data)
        T = R @ lam
        quad = float(np.vdot(R, R)) - float(T @ T) / (1.0 + L)
        nq = data.n * q
    else:
        quad = 0.0
        nq = 0
    n_active = int(state.gamma.sum())
    shape = hp.nu0 / 2.0 + (nq + (q if include_lambda_prior else 0) + n_active) / 2.0
    rate = hp.nu0 * hp.sigma0_sq / 2.0 + 0.5 * quad
    if include_lambda_prior:
        rate += 0.5 * float(((lam - hp.mu_lambda) ** 2).sum()) / hp.h_lambda
    if n_active:
        v_sq = hp.v_sq_vector(q)
        idx = state.gamma
        rate += 0.5 * float((state.tau[idx] ** 2
                             / (v_sq[idx] * (lam[idx] ** 2 + 1.0))).sum())
    return shape, rate


def outcome_variance_conditional(state: ParameterState, data: MediationDataset | None,
                                 hp: Hyperparameters) -> tuple[float, float]:
    """(shape, rate) of the inverse-gamma full conditional of sigma_sq."""
    if data is not None:
        e = _outcome_residual(state, data)
        quad = float(e @ e)
        n = data.n
    else:
        quad = 0.0
        n = 0
    n_active = int(state.omega.sum())
    shape = hp.nu1 / 2.0 + (n + n_active) / 2.0
    rate = hp.nu1 * hp.sigma1_sq / 2.0 + 0.5 * quad
    if n_active:
        psi_sq = hp.psi_sq_vector(state.q)
        idx = state.omega
        rate += 0.5 * float((state.delta[idx] ** 2 / psi_sq[idx]).sum())
    return shape, rate


def _inverse_gamma_draw(shape: float, rate: float, rng: np.random.Generator) -> float:
    if rate <= 0.0 or shape <= 0.0:
        raise SamplerError("nonpositive inverse-gamma parameters")
    return float(rate / rng.gamma(shape))


def update_mediator_variance(state: ParameterState, data: MediationDataset | None,
                             hp: Hyperparameters, rng: np.random.Generator,
                             include_lambda_prior: bool = True) -> ParameterState:
    shape, rate = mediator_variance_conditional(state, data, hp, include_lambda_prior)
    state.sigma_sq_Sigma = _inverse_gamma_draw(shape, rate, rng)
    return state


def update_outcome_variance(state: ParameterState, data: MediationDataset | None,
                            hp: Hyperparameters, rng: np.random.Generator) -> ParameterState:
    shape, rate = outcome_variance_conditional(state, data, hp)
    state.sigma_sq = _inverse_gamma_draw(shape, rate, rng)
    return state


def update_variances(state: ParameterState, data: MediationDataset | None,
                     hp: Hyperparameters, rng: np.random.Generator,
                     include_lambda_prior: bool = True) -> ParameterState:
    """Both variance blocks with a single stream (test convenience)."""
    update_mediator_variance(state, data, hp, rng, include_lambda_prior)
    return update_outcome_variance(state, data, hp, rng)


def sweep_first_half(state: ParameterState, data: MediationDataset,
                     hp: Hyperparameters, variant: ModelVariant,
                     adapt_state: AdaptState, rng_mediator: np.random.Generator,
                     rng_outcome: np.random.Generator, adapt: bool = False,
                     random_scan: bool = False) -> np.ndarray:
    """Blocks up to and including the mediator variance: [fixed effects ->
    (gamma, tau) -> refine tau -> lambda -> sigma_sq_Sigma]."""
    update_mediator_fixed_effects(state, data, hp, rng_mediator)
    update_outcome_fixed_effects(state, data, hp, rng_outcome)
    update_gamma_tau(state, data, None, hp, rng_mediator, random_scan)
    refine_tau(state, data, None, hp, rng_mediator)
    if variant.has_lambda:
        accepted = update_lambda(state, data, hp, adapt_state, rng_mediator, adapt)
    else:
        accepted = np.zeros(data.q, dtype=bool)
    update_mediator_variance(state, data, hp, rng_mediator,
                             include_lambda_prior=variant.has_lambda)
    return accepted


def sweep_second_half(state: ParameterState, data: MediationDataset,
                      hp: Hyperparameters, rng_outcome: np.random.Generator,
                      random_scan: bool = False) -> None:
    """Outcome-selection blocks: [(omega, delta) -> refine delta -> sigma_sq]."""
    update_omega_delta(state, data, hp, rng_outcome, random_scan)
    refine_delta(state, data, hp, rng_outcome)
    update_outcome_variance(state, data, hp, rng_outcome)


def sweep_once(state: ParameterState, data: MediationDataset, hp: Hyperparameters,
               variant: ModelVariant, adapt_state: AdaptState,
               rng_mediator: np.random.Generator, rng_outcome: np.random.Generator,
               adapt: bool = False, random_scan: bool = False) -> np.ndarray:
    """One full sweep in the fixed block order. Returns lambda acceptances."""
    accepted = sweep_first_half(state, data, hp, variant, adapt_state,
                                rng_mediator, rng_outcome, adapt, random_scan)
    sweep_second_half(state, data, hp, rng_outcome, random_scan)
    return accepted


def _check_variant(variant: ModelVariant, hp: Hyperparameters) -> None:
    if not variant.allows_mrf and hp.eta != 0.0:
        raise ValueError(f"eta must be 0 for the {variant.value} variant")


def _assert_support(state: ParameterState, t: int) -> None:
    if (np.any(state.tau[~state.gamma] != 0.0)
            or np.any(state.omega & ~state.gamma)
            or np.any(state.delta[~state.omega] != 0.0)):
        raise SamplerError(f"support invariant violated at iteration {t}")


def run_chain(config: ChainConfig, data: MediationDataset,
              hp: Hyperparameters) -> ChainDraws:
    """Execute one chain; deterministic given config.seed."""
    config.validate()
    hp.validate()
    variant = ModelVariant(config.model_variant)
    _check_variant(variant, hp)
    q, p = data.q, data.p
    seq = np.random.SeedSequence(config.seed)
    med_seq, out_seq = seq.spawn(2)
    rng_m = np.random.default_rng(med_seq)
    rng_o = np.random.default_rng(out_seq)
    state = config.init.build_state(q, p, variant, rng_m, rng_o)
    adapt_state = AdaptState.from_spec(config.adapt, q)
    adapt_until = config.adapt.adapt_until
    if adapt_until is None:
        adapt_until = config.burn_in
    K = config.n_kept
    draws = ChainDraws(
        gamma=np.zeros((K, q), dtype=bool), tau=np.zeros((K, q)),
        omega=np.zeros((K, q), dtype=bool), delta=np.zeros((K, q)),
        lam=np.zeros((K, q)), beta0=np.zeros((K, q)), B=np.zeros((K, p, q)),
        alpha0=np.zeros(K), alpha=np.zeros((K, p)), alpha_p1=np.zeros(K),
        sigma_sq_Sigma=np.zeros(K), sigma_sq=np.zeros(K),
        accept_rate_lambda=np.full(q, np.nan), eta_used=hp.eta, wall_time=0.0,
        seed=config.seed, n_iter=config.n_iter, burn_in=config.burn_in,
        thin=config.thin, model_variant=variant.value,
        proposal_scales_at_freeze=np.zeros(q), proposal_scales_final=np.zeros(q),
    )
    start = time.perf_counter()
    kept = 0
    scales_frozen = adapt_state.log_var.copy()
    for t in range(1, config.n_iter + 1):
        adapt_enabled = t <= adapt_until
        if adapt_enabled:
            adapt_state.step = config.adapt.adapt_rate0 / (1.0 + t / config.adapt.adapt_window)
        try:
            accepted = sweep_once(state, data, hp, variant, adapt_state,
                                  rng_m, rng_o, adapt_enabled, config.random_scan)
        except SamplerError as err:
            raise SamplerError(f"iteration {t}: {err}") from err
        if t == adapt_until:
            scales_frozen = adapt_state.log_var.copy()
        if t > config.burn_in:
            adapt_state.record_post_burn(accepted)
            if (t - config.burn_in) % config.thin == 0:
                _assert_support(state, t)
                draws.gamma[kept] = state.gamma
                draws.tau[kept] = state.tau
                draws.omega[kept] = state.omega
                draws.delta[kept] = state.delta
                draws.lam[kept] = state.lam
                draws.beta0[kept] = state.beta0
                draws.B[kept] = state.B
                draws.alpha0[kept] = state.alpha0
                draws.alpha[kept] = state.alpha
                draws.alpha_p1[kept] = state.alpha_p1
                draws.sigma_sq_Sigma[kept] = state.sigma_sq_Sigma
                draws.sigma_sq[kept] = state.sigma_sq
                kept += 1
    draws.wall_time = time.perf_counter() - start
    if variant.has_lambda:
        draws.accept_rate_lambda = adapt_state.post_burn_accept_rates
    draws.proposal_scales_at_freeze = scales_frozen
    draws.proposal_scales_final = adapt_state.log_var.copy()
    return draws


def _run_chain_worker(args) -> ChainDraws:
    config, data, hp = args
    return run_chain(config, data, hp)


def default_workers() -> int:
    value = os.environ.get("MEDPATH_WORKERS", "")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def run_chains(configs: list[ChainConfig], data: MediationDataset,
               hp: Hyperparameters, workers: int | None = None) -> list[ChainDraws]:
    """Run independent chains (optionally in worker processes). Output order
    matches input order; per-chain failures are collected and reported
    together without aborting the surviving chains."""
    if not configs:
        raise ValueError("need at least one chain config")
    seeds = [c.seed for c in configs]
    if len(set(seeds)) != len(seeds):
        raise ValueError("chain seeds must be distinct")
    if workers is None:
        workers = default_workers()
    results: dict[int, ChainDraws] = {}
    errors: dict[int, str] = {}
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(_run_chain_worker, (c, data, hp))
                       for i, c in enumerate(configs)}
            for i, fut in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as err:  # noqa: BLE001 - reported per chain
                    errors[i] = str(err)
    else:
        for i, c in enumerate(configs):
            try:
                results[i] = run_chain(c, data, hp)
            except Exception as err:  # noqa: BLE001
                errors[i] = str(err)
    if errors:
        raise MultiChainError(errors, results)
    return [results[i] for i in range(len(configs))]
