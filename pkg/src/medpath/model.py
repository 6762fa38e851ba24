"""Model densities: factor-analytic covariance algebra, mediator/outcome
likelihoods, spike-and-slab priors, the MRF prior on the mediator-model
selection indicators, and the sequential-subsetting Bernoulli (SSB) prior
on the outcome-model indicators.

All functions here are pure; log densities may return -inf for points
outside a spike's support so that samplers can compare log-ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def logit(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"logit requires p in (0,1), got {p}")
    return math.log(p / (1.0 - p))


def expit(x: float) -> float:
    # branch avoids overflow in exp for large |x|
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass
class Hyperparameters:
    """Fixed prior constants.

    ``theta_gamma`` is stored on the log-odds scale; use
    :meth:`with_gamma_probability` to specify it as a probability instead
    (the two conventions are easy to confuse).
    """

    theta_gamma: float = logit(0.1)  # MRF baseline log-odds
    theta_omega: float = 0.1         # SSB inclusion probability
    eta: float = 0.0                 # MRF coupling strength
    v_sq: float | np.ndarray = 9.0   # slab scale for tau (scalar or length-q)
    psi_sq: float | np.ndarray = 9.0  # slab scale for delta
    h0: float = 100.0    # prior variance for beta0 entries
    c0: float = 100.0    # prior variance for B entries
    s0: float = 100.0    # prior variance for alpha0
    t0: float = 100.0    # prior variance for alpha entries
    k0: float = 100.0    # prior variance for alpha_{p+1}
    nu0: float = 6.0
    nu1: float = 6.0
    sigma0_sq: float = 1.0 / 3.0
    sigma1_sq: float = 1.0 / 3.0
    mu_lambda: float = 0.0
    h_lambda: float = 100.0

    def validate(self) -> None:
        if not 0.0 < self.theta_omega < 1.0:
            raise ValueError("theta_omega must lie in (0,1)")
        if self.eta < 0.0:
            raise ValueError("eta must be >= 0")
        for name in ("h0", "c0", "s0", "t0", "k0", "nu0", "nu1",
                     "sigma0_sq", "sigma1_sq", "h_lambda"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        for name in ("v_sq", "psi_sq"):
            if np.any(np.asarray(getattr(self, name)) <= 0.0):
                raise ValueError(f"{name} must be > 0")

    def v_sq_vector(self, q: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.v_sq, dtype=float), (q,)).copy()

    def psi_sq_vector(self, q: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.psi_sq, dtype=float), (q,)).copy()

    def with_gamma_probability(self, prob: float) -> "Hyperparameters":
        return replace(self, theta_gamma=logit(prob))

    @property
    def prior_inclusion_gamma(self) -> float:
        """logit^{-1}(theta_gamma): baseline inclusion probability at eta=0."""
        return expit(self.theta_gamma)


@dataclass
class ParameterState:
    """One MCMC state of the joint model.

    Invariants: gamma[j]=False implies tau[j]=0; omega[j]=True implies
    gamma[j]=True; omega[j]=False implies delta[j]=0; variances positive.
    """

    beta0: np.ndarray        # (q,)
    B: np.ndarray            # (p, q)
    tau: np.ndarray          # (q,)
    gamma: np.ndarray        # (q,) bool
    lam: np.ndarray          # (q,) factor loadings
    sigma_sq_Sigma: float
    alpha0: float
    alpha: np.ndarray        # (p,)
    alpha_p1: float
    delta: np.ndarray        # (q,)
    omega: np.ndarray        # (q,) bool
    sigma_sq: float

    @property
    def q(self) -> int:
        return self.tau.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[0]

    def validate(self) -> None:
        if self.sigma_sq_Sigma <= 0.0 or self.sigma_sq <= 0.0:
            raise ValueError("variances must be positive")
        if np.any(self.tau[~self.gamma] != 0.0):
            raise ValueError("tau must be 0 where gamma is off")
        if np.any(self.omega & ~self.gamma):
            raise ValueError("omega=1 requires gamma=1")
        if np.any(self.delta[~self.omega] != 0.0):
            raise ValueError("delta must be 0 where omega is off")

    def copy(self) -> "ParameterState":
        return ParameterState(
            beta0=self.beta0.copy(), B=self.B.copy(), tau=self.tau.copy(),
            gamma=self.gamma.copy(), lam=self.lam.copy(),
            sigma_sq_Sigma=self.sigma_sq_Sigma, alpha0=self.alpha0,
            alpha=self.alpha.copy(), alpha_p1=self.alpha_p1,
            delta=self.delta.copy(), omega=self.omega.copy(),
            sigma_sq=self.sigma_sq,
        )

    @classmethod
    def zeros(cls, q: int, p: int) -> "ParameterState":
        return cls(
            beta0=np.zeros(q), B=np.zeros((p, q)), tau=np.zeros(q),
            gamma=np.zeros(q, dtype=bool), lam=np.zeros(q),
            sigma_sq_Sigma=1.0, alpha0=0.0, alpha=np.zeros(p),
            alpha_p1=0.0, delta=np.zeros(q), omega=np.zeros(q, dtype=bool),
            sigma_sq=1.0,
        )


@dataclass
class FactorCovariance:
    """Sigma = sigma_sq_Sigma * (lam lam^T + I_q), the rank-one-plus-identity
    covariance that keeps all likelihood work at O(nq).

    The inverse is available in closed form,
    Sigma^-1 = sigma_sq_Sigma^-1 (I - lam lam^T / (1 + |lam|^2)),
    and log|Sigma| = q log sigma_sq_Sigma + log(1 + |lam|^2).
    """

    lam: np.ndarray
    sigma_sq_Sigma: float
    lambda_norm_sq: float = field(init=False)
    log_det: float = field(init=False)

    def __post_init__(self) -> None:
        if self.sigma_sq_Sigma <= 0.0:
            raise ValueError("sigma_sq_Sigma must be positive")
        self.lam = np.asarray(self.lam, dtype=float)
        self.lambda_norm_sq = float(self.lam @ self.lam)
        self.log_det = (self.q * math.log(self.sigma_sq_Sigma)
                        + math.log1p(self.lambda_norm_sq))

    @classmethod
    def from_state(cls, state: ParameterState) -> "FactorCovariance":
        return cls(lam=state.lam, sigma_sq_Sigma=state.sigma_sq_Sigma)

    @property
    def q(self) -> int:
        return self.lam.shape[0]

    def dense(self) -> np.ndarray:
        return self.sigma_sq_Sigma * (np.outer(self.lam, self.lam) + np.eye(self.q))

    def dense_inverse(self) -> np.ndarray:
        c = 1.0 / (1.0 + self.lambda_norm_sq)
        return (np.eye(self.q) - c * np.outer(self.lam, self.lam)) / self.sigma_sq_Sigma

    def inv_apply(self, v: np.ndarray) -> np.ndarray:
        """Sigma^-1 @ v for a vector (q,) or matrix (q, m)."""
        c = 1.0 / (1.0 + self.lambda_norm_sq)
        return (v - np.multiply.outer(self.lam, c * (self.lam @ v))) / self.sigma_sq_Sigma

    def inv_diag(self) -> np.ndarray:
        c = 1.0 / (1.0 + self.lambda_norm_sq)
        return (1.0 - c * self.lam ** 2) / self.sigma_sq_Sigma

    def marginal_variances(self) -> np.ndarray:
        """Sigma_(j,j) = sigma_sq_Sigma * (lam_j^2 + 1)."""
        return self.sigma_sq_Sigma * (self.lam ** 2 + 1.0)

    def corr_weights(self) -> np.ndarray:
        """u_j = |lam_j| / sqrt(lam_j^2 + 1); |c_{r,j}| = u_r * u_j."""
        return np.abs(self.lam) / np.sqrt(self.lam ** 2 + 1.0)


def fa_correlation(cov: FactorCovariance, r: int, j: int) -> float:
    """Correlation between mediators r and j implied by the factor structure:
    lam_r lam_j / sqrt((lam_r^2+1)(lam_j^2+1)); independent of the scale."""
    if r == j:
        raise ValueError("fa_correlation requires r != j")
    lr = float(cov.lam[r])
    lj = float(cov.lam[j])
    return lr * lj / math.sqrt((lr * lr + 1.0) * (lj * lj + 1.0))


def mrf_inclusion_prob(gamma: np.ndarray, cov: FactorCovariance, j: int,
                       hp: Hyperparameters) -> float:
    """Conditional inclusion probability of gamma_j under the MRF prior:
    logistic(theta_gamma + eta * sum_{r != j} |c_{r,j}| gamma_r)."""
    u = cov.corr_weights()
    g = np.asarray(gamma, dtype=bool)
    neighbor_sum = float(u[j] * (u @ g - u[j] * g[j]))
    return expit(hp.theta_gamma + hp.eta * neighbor_sum)


def mrf_log_mass_unnormalized(gamma: np.ndarray, cov: FactorCovariance,
                              hp: Hyperparameters) -> float:
    """Log of the unnormalized joint MRF mass:
    theta_gamma * sum_j gamma_j + eta * sum_{r<j} |c_{r,j}| gamma_r gamma_j.

    The stated conditionals p_j(gamma, Sigma) are exactly the full
    conditionals of this autologistic joint.
    """
    g = np.asarray(gamma, dtype=float)
    u = cov.corr_weights()
    ug = u * g
    total = float(ug.sum())
    pair_sum = 0.5 * (total * total - float(ug @ ug))
    return hp.theta_gamma * float(g.sum()) + hp.eta * pair_sum


def ssb_log_prior(omega_j: bool, gamma_j_value: bool, hp: Hyperparameters) -> float:
    """SSB prior: Bernoulli(theta_omega) when the realized gamma_j is 1,
    point mass at omega_j=0 otherwise."""
    if gamma_j_value:
        return math.log(hp.theta_omega) if omega_j else math.log1p(-hp.theta_omega)
    return -math.inf if omega_j else 0.0


def _normal_logpdf(x: float, var: float) -> float:
    return -0.5 * (LOG_2PI + math.log(var) + x * x / var)


def spike_slab_log_prior_tau(tau_j: float, gamma_j: bool, cov: FactorCovariance,
                             hp: Hyperparameters, j: int) -> float:
    """tau_j | gamma_j, Sigma: Normal(0, v_j^2 Sigma_(j,j)) slab or point mass."""
    if not gamma_j:
        return 0.0 if tau_j == 0.0 else -math.inf
    v_sq = float(np.broadcast_to(np.asarray(hp.v_sq, dtype=float), (cov.q,))[j])
    var = v_sq * cov.sigma_sq_Sigma * (float(cov.lam[j]) ** 2 + 1.0)
    return _normal_logpdf(tau_j, var)


def spike_slab_log_prior_delta(delta_j: float, omega_j: bool, sigma_sq: float,
                               hp: Hyperparameters, j: int) -> float:
    """delta_j | omega_j, sigma^2: Normal(0, psi_j^2 sigma^2) slab or point mass."""
    if not omega_j:
        return 0.0 if delta_j == 0.0 else -math.inf
    psi = np.asarray(hp.psi_sq, dtype=float)
    psi_sq = float(psi) if psi.ndim == 0 else float(psi[j])
    return _normal_logpdf(delta_j, psi_sq * sigma_sq)


def mediator_loglik(data, state: ParameterState) -> float:
    """Sum_i log MVN(M_i; beta0 + tau A_i + B^T X_i, Sigma) computed with the
    rank-one inverse and cached log-determinant; O(nq), never O(q^3)."""
    if state.sigma_sq_Sigma <= 0.0:
        raise ValueError("sigma_sq_Sigma must be positive")
    cov = FactorCovariance.from_state(state)
    R = data.M - state.beta0 - np.outer(data.A, state.tau) - data.X @ state.B
    T = R @ state.lam
    quad = (float(np.vdot(R, R))
            - float(T @ T) / (1.0 + cov.lambda_norm_sq)) / state.sigma_sq_Sigma
    n = data.n
    return -0.5 * (n * state.q * LOG_2PI + n * cov.log_det + quad)


def outcome_loglik(data, state: ParameterState) -> float:
    """Sum_i log Normal(Y_i; alpha0 + delta^T M_i + alpha^T X_i + alpha_{p+1} A_i, sigma^2)."""
    if state.sigma_sq <= 0.0:
        raise ValueError("sigma_sq must be positive")
    resid = (data.Y - state.alpha0 - data.M @ state.delta
             - data.X @ state.alpha - state.alpha_p1 * data.A)
    n = data.n
    return -0.5 * (n * (LOG_2PI + math.log(state.sigma_sq))
                   + float(resid @ resid) / state.sigma_sq)
