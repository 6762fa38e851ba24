"""Synthetic data generator for the four simulation scenarios.

Scenarios I-III share the generating constants (graded exposure-mediator
effects on the first 30 mediators, cycling mediator-outcome effects);
Scenario IV substitutes a user-supplied mediator covariance matrix, with
an optional index permutation so highly correlated mediators can be
aligned with the true pathways.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataError, MediationDataset


@dataclass
class TrueActiveSets:
    """Ground truth for selection metrics."""

    gamma_true: np.ndarray   # tau_true[j] != 0
    joint_true: np.ndarray   # tau_true[j] * delta_true[j] != 0

    def __post_init__(self) -> None:
        self.gamma_true = np.asarray(self.gamma_true, dtype=bool)
        self.joint_true = np.asarray(self.joint_true, dtype=bool)
        if np.any(self.joint_true & ~self.gamma_true):
            raise DataError("joint_true implies gamma_true")


@dataclass
class ScenarioSpec:
    """Generating process for one synthetic dataset.

    Exactly one of ``lambda_true`` (factor covariance) and ``covariance``
    (explicit q x q matrix, Scenario IV style) must be given.
    """

    scenario_id: str
    n: int
    q: int
    p: int
    l: np.ndarray                       # exposure-on-covariate loadings (p,)
    tau_true: np.ndarray                # (q,)
    delta_true: np.ndarray              # (q,)
    beta0_true: np.ndarray              # (q,)
    B_true: np.ndarray                  # (p, q)
    sigma_sq_Sigma_true: float
    alpha0_true: float
    alpha_true: np.ndarray              # (p,)
    alpha_p1_true: float
    sigma_sq_true: float
    seed: int
    lambda_true: np.ndarray | None = None
    covariance: np.ndarray | None = None
    covariance_permutation: np.ndarray | None = None

    def __post_init__(self) -> None:
        for name in ("l", "tau_true", "delta_true", "beta0_true", "alpha_true"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.B_true = np.asarray(self.B_true, dtype=float)
        if self.lambda_true is not None:
            self.lambda_true = np.asarray(self.lambda_true, dtype=float)
        if self.covariance is not None:
            self.covariance = np.asarray(self.covariance, dtype=float)

    def validate(self) -> None:
        if min(self.n, self.q) < 1 or self.p < 0:
            raise DataError("need n >= 1, q >= 1, p >= 0")
        if (self.lambda_true is None) == (self.covariance is None):
            raise DataError("exactly one of lambda_true / covariance must be set")
        if self.l.shape != (self.p,):
            raise DataError("l must have length p")
        for name in ("tau_true", "delta_true", "beta0_true"):
            if getattr(self, name).shape != (self.q,):
                raise DataError(f"{name} must have length q")
        if self.B_true.shape != (self.p, self.q):
            raise DataError("B_true must be p x q")
        if self.alpha_true.shape != (self.p,):
            raise DataError("alpha_true must have length p")
        if self.lambda_true is not None and self.lambda_true.shape != (self.q,):
            raise DataError("lambda_true must have length q")
        if self.covariance is not None and self.covariance.shape != (self.q, self.q):
            raise DataError("covariance must be q x q")
        if self.sigma_sq_Sigma_true <= 0.0 or self.sigma_sq_true <= 0.0:
            raise DataError("generating variances must be positive")

    def true_active_sets(self) -> TrueActiveSets:
        gamma = self.tau_true != 0.0
        return TrueActiveSets(gamma_true=gamma,
                              joint_true=gamma & (self.delta_true != 0.0))


def generate_scenario(spec: ScenarioSpec) -> tuple[MediationDataset, TrueActiveSets]:
    """Draw one dataset from the generating process; deterministic given seed.

    Draw order: X, exposure noise, mediator noise, outcome noise.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.p))
    A = X @ spec.l + rng.standard_normal(spec.n)
    mean_M = spec.beta0_true + np.outer(A, spec.tau_true) + X @ spec.B_true
    if spec.lambda_true is not None:
        # eps = sqrt(s2) * (lam z0 + z) has covariance s2 (lam lam^T + I)
        z0 = rng.standard_normal(spec.n)
        Z = rng.standard_normal((spec.n, spec.q))
        eps = np.sqrt(spec.sigma_sq_Sigma_true) * (np.outer(z0, spec.lambda_true) + Z)
    else:
        cov = spec.covariance
        if spec.covariance_permutation is not None:
            perm = np.asarray(spec.covariance_permutation, dtype=int)
            if sorted(perm.tolist()) != list(range(spec.q)):
                raise DataError("covariance_permutation must permute 0..q-1")
            cov = cov[np.ix_(perm, perm)]
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise DataError("supplied covariance is not positive definite") from None
        eps = rng.standard_normal((spec.n, spec.q)) @ chol.T
    M = mean_M + eps
    Y = (spec.alpha0_true + M @ spec.delta_true + X @ spec.alpha_true
         + spec.alpha_p1_true * A
         + np.sqrt(spec.sigma_sq_true) * rng.standard_normal(spec.n))
    data = MediationDataset(X=X, A=A, M=M, Y=Y)
    return data, spec.true_active_sets()


_L_FULL = np.array([0.5, 0.2, 0.7, 0.4, 0.6])
_TAU_LEVELS = np.array([-0.12, -0.08, -0.04, 0.04, 0.08, 0.12])
_DELTA_CYCLE = np.array([0.5, 1.0, 1.5, 0.0, 0.0])


def _paper_tau(q: int) -> np.ndarray:
    tau = np.zeros(q)
    tau[:30] = np.repeat(_TAU_LEVELS, 5)
    return tau


def _paper_delta(q: int) -> np.ndarray:
    delta = np.zeros(q)
    delta[:30] = np.tile(_DELTA_CYCLE, 6)
    return delta


def _base_spec(scenario_id: str, n: int, q: int, p: int, l: np.ndarray,
               tau: np.ndarray, delta: np.ndarray, seed: int, **kwargs) -> ScenarioSpec:
    return ScenarioSpec(
        scenario_id=scenario_id, n=n, q=q, p=p, l=l,
        tau_true=tau, delta_true=delta,
        beta0_true=np.full(q, 0.1), B_true=np.full((p, q), 0.1),
        sigma_sq_Sigma_true=0.5,
        alpha0_true=2.0, alpha_true=np.full(p, 2.0), alpha_p1_true=2.0,
        sigma_sq_true=0.5, seed=seed, **kwargs,
    )


def scenario_i(n: int = 1000, q: int = 300, seed: int = 0) -> ScenarioSpec:
    """Correlated mediators (pairwise correlation ~0.1), 30 active tau."""
    if q < 30:
        raise DataError("scenario I requires q >= 30")
    return _base_spec("I", n, q, 5, _L_FULL, _paper_tau(q), _paper_delta(q),
                      seed, lambda_true=np.full(q, 0.35))


def scenario_ii(n: int = 1000, q: int = 300, seed: int = 0) -> ScenarioSpec:
    """Independent mediators (lambda = 0)."""
    if q < 30:
        raise DataError("scenario II requires q >= 30")
    return _base_spec("II", n, q, 5, _L_FULL, _paper_tau(q), _paper_delta(q),
                      seed, lambda_true=np.zeros(q))


def scenario_iii(n: int = 1000, q: int = 300, seed: int = 0) -> ScenarioSpec:
    """Null case: all tau zero, correlated mediators."""
    if q < 30:
        raise DataError("scenario III requires q >= 30")
    return _base_spec("III", n, q, 5, _L_FULL, np.zeros(q), _paper_delta(q),
                      seed, lambda_true=np.full(q, 0.35))


def scenario_iv_like(covariance: np.ndarray, n: int = 466, p: int = 3,
                     seed: int = 0,
                     permutation: np.ndarray | None = None) -> ScenarioSpec:
    """Misspecified-covariance scenario with a user-supplied q x q matrix.

    ``permutation`` reindexes the covariance so highly correlated mediators
    can be aligned with the true pathways.
    """
    covariance = np.asarray(covariance, dtype=float)
    q = covariance.shape[0]
    if q < 30:
        raise DataError("scenario IV requires q >= 30")
    l = _L_FULL[:p] if p <= 5 else np.concatenate([_L_FULL, np.full(p - 5, 0.5)])
    return _base_spec("IV-like", n, q, p, l, _paper_tau(q), _paper_delta(q),
                      seed, covariance=covariance, covariance_permutation=permutation)


# Reduced-scale presets used by the test and replication harnesses: the first
# 12 mediators carry graded exposure effects, all with nonzero outcome effects.
# tau levels are 1.5x the full-scale ones so that per-pathway evidence at
# n=400 matches the full-scale study at n=1000 (z scales with tau*sqrt(n));
# the strongest cells keep the full-scale |IE| = 2 * 0.18 * 1.0 = 0.36.
_TAU_SMALL = np.array([-0.18, -0.18, -0.18, -0.12, -0.12, -0.09,
                       0.09, 0.12, 0.12, 0.18, 0.18, 0.18])
_DELTA_SMALL = np.array([1.0, 0.5, 1.0, 0.5, 1.0, 0.25,
                         0.25, 0.5, 1.0, 0.5, 1.0, 0.5])


def scenario_i_small(n: int = 400, q: int = 60, seed: int = 0) -> ScenarioSpec:
    if q < 12:
        raise DataError("small scenarios require q >= 12")
    tau = np.zeros(q)
    tau[:12] = _TAU_SMALL
    delta = np.zeros(q)
    delta[:12] = _DELTA_SMALL
    return _base_spec("I", n, q, 5, _L_FULL, tau, delta, seed,
                      lambda_true=np.full(q, 0.35))


def scenario_ii_small(n: int = 400, q: int = 60, seed: int = 0) -> ScenarioSpec:
    spec = scenario_i_small(n, q, seed)
    spec.scenario_id = "II"
    spec.lambda_true = np.zeros(q)
    return spec


def scenario_iii_small(n: int = 400, q: int = 60, seed: int = 0) -> ScenarioSpec:
    spec = scenario_i_small(n, q, seed)
    spec.scenario_id = "III"
    spec.tau_true = np.zeros(q)
    return spec


def scenario_from_id(scenario_id: str, n: int | None = None, q: int | None = None,
                     seed: int = 0, covariance: np.ndarray | None = None,
                     permutation: np.ndarray | None = None,
                     p: int | None = None) -> ScenarioSpec:
    """Build a preset by id; used by the CLI."""
    sid = scenario_id.strip().upper().replace("_", "-")
    kwargs = {}
    if n is not None:
        kwargs["n"] = n
    if q is not None:
        kwargs["q"] = q
    builders = {
        "I": scenario_i, "II": scenario_ii, "III": scenario_iii,
        "I-SMALL": scenario_i_small, "II-SMALL": scenario_ii_small,
        "III-SMALL": scenario_iii_small,
    }
    if sid in builders:
        return builders[sid](seed=seed, **kwargs)
    if sid in ("IV", "IV-LIKE"):
        if covariance is None:
            raise DataError("scenario IV needs a covariance matrix")
        extra = {"permutation": permutation}
        if p is not None:
            extra["p"] = p
        if n is not None:
            extra["n"] = n
        return scenario_iv_like(covariance, seed=seed, **extra)
    raise DataError(f"unknown scenario id {scenario_id!r}")
