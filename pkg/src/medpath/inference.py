"""Posterior post-processing: inclusion probabilities, pathway selection,
indirect/direct effect summaries with HPDIs, Gelman-Rubin PSR, and the
selection-quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sampler import ChainDraws
from .tuning import FdrThresholdResult, bayesian_fdr_threshold


@dataclass
class EffectContrast:
    """Two exposure levels; effects scale with a - a_prime."""

    a: float
    a_prime: float

    def __post_init__(self) -> None:
        if self.a == self.a_prime:
            raise ValueError("contrast levels must differ")

    @property
    def multiplier(self) -> float:
        return self.a - self.a_prime

    @classmethod
    def from_percentiles(cls, exposure: np.ndarray, lower: float = 30.0,
                         upper: float = 70.0) -> "EffectContrast":
        lo, hi = np.percentile(np.asarray(exposure, dtype=float), [lower, upper])
        return cls(a=float(hi), a_prime=float(lo))


@dataclass
class EffectSummary:
    median: float
    mean: float
    sd: float
    hpdi_lo: float
    hpdi_hi: float
    n_draws: int

    def to_dict(self) -> dict:
        return {"median": self.median, "mean": self.mean, "sd": self.sd,
                "hpdi": [self.hpdi_lo, self.hpdi_hi], "n_draws": self.n_draws}


@dataclass
class SelectionSummary:
    ppi_joint: np.ndarray
    ppi_gamma: np.ndarray
    kappa: float
    fdr_target: float
    selected: np.ndarray                      # indices with ppi_joint > kappa
    ie_per_mediator: dict[int, EffectSummary]  # conditional on gamma=omega=1
    tau_per_mediator: dict[int, EffectSummary]  # conditional on gamma=1
    ie_total: EffectSummary
    de: EffectSummary
    contrast: EffectContrast
    no_qualifying_kappa: bool = False
    mediator_names: list[str] = field(default_factory=list)


def hpdi(samples: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """Shortest contiguous interval containing ceil(level * N) sorted samples."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < 2:
        raise ValueError("hpdi needs at least 2 samples")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0,1)")
    m = int(math.ceil(level * n))
    m = min(max(m, 2), n)
    widths = x[m - 1:] - x[:n - m + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m - 1])


def _summary(samples: np.ndarray, level: float = 0.95) -> EffectSummary:
    lo, hi = hpdi(samples, level) if samples.size >= 2 else (float(samples[0]),) * 2
    return EffectSummary(
        median=float(np.median(samples)), mean=float(np.mean(samples)),
        sd=float(np.std(samples, ddof=1)) if samples.size > 1 else 0.0,
        hpdi_lo=lo, hpdi_hi=hi, n_draws=int(samples.size),
    )


def _pool(chains: list[ChainDraws], name: str) -> np.ndarray:
    if not chains:
        raise ValueError("need at least one chain")
    qs = {c.q for c in chains}
    if len(qs) != 1:
        raise ValueError("chains disagree on q")
    arrays = [getattr(c, name) for c in chains]
    if any(a.shape[0] == 0 for a in arrays):
        raise ValueError("chain with no kept draws")
    return np.concatenate(arrays, axis=0)


def ppi(chains: list[ChainDraws]) -> tuple[np.ndarray, np.ndarray]:
    """(ppi_joint, ppi_gamma): pooled inclusion frequencies over all kept
    draws of all chains; joint = P(gamma_j=1 and omega_j=1 | data)."""
    gamma = _pool(chains, "gamma")
    omega = _pool(chains, "omega")
    return (gamma & omega).mean(axis=0), gamma.mean(axis=0)


def estimate_effects(chains: list[ChainDraws], contrast: EffectContrast,
                     level: float = 0.95) -> tuple[dict[int, EffectSummary],
                                                   dict[int, EffectSummary],
                                                   EffectSummary, EffectSummary]:
    """Per-mediator conditional IE summaries, conditional tau summaries, the
    total-IE summary, and the DE summary.

    IE_j draws are (a - a') tau_j delta_j restricted to draws with
    gamma_j = omega_j = 1 (mediators never jointly included get no entry);
    IE total and DE use every draw.
    """
    mult = contrast.multiplier
    tau = _pool(chains, "tau")
    delta = _pool(chains, "delta")
    gamma = _pool(chains, "gamma")
    omega = _pool(chains, "omega")
    alpha_p1 = _pool(chains, "alpha_p1")
    q = tau.shape[1]
    ie_draws = mult * tau * delta
    ie_per: dict[int, EffectSummary] = {}
    tau_per: dict[int, EffectSummary] = {}
    for j in range(q):
        joint = gamma[:, j] & omega[:, j]
        if np.any(joint):
            ie_per[j] = _summary(ie_draws[joint, j], level)
        if np.any(gamma[:, j]):
            tau_per[j] = _summary(tau[gamma[:, j], j], level)
    ie_total = _summary(ie_draws.sum(axis=1), level)
    de = _summary(mult * alpha_p1, level)
    return ie_per, tau_per, ie_total, de


def summarize_selection(chains: list[ChainDraws], contrast: EffectContrast,
                        fdr_target: float = 0.05,
                        mediator_names: list[str] | None = None,
                        level: float = 0.95) -> SelectionSummary:
    """PPIs -> FDR-controlled kappa -> selected pathways -> effect summaries."""
    ppi_joint, ppi_gamma = ppi(chains)
    thresh: FdrThresholdResult = bayesian_fdr_threshold(ppi_joint, fdr_target)
    ie_per, tau_per, ie_total, de = estimate_effects(chains, contrast, level)
    return SelectionSummary(
        ppi_joint=ppi_joint, ppi_gamma=ppi_gamma, kappa=thresh.kappa,
        fdr_target=fdr_target, selected=thresh.selected,
        ie_per_mediator=ie_per, tau_per_mediator=tau_per,
        ie_total=ie_total, de=de, contrast=contrast,
        no_qualifying_kappa=thresh.no_qualifying,
        mediator_names=list(mediator_names or []),
    )


def gelman_rubin(chains: list[np.ndarray]) -> float:
    """Potential scale reduction sqrt(V_hat / W) with
    V_hat = ((n-1)/n) W + B/n, W the mean within-chain sample variance and
    B = n * variance of the chain means (both with denominator m-1/n-1)."""
    if len(chains) < 2:
        raise ValueError("PSR needs at least 2 chains")
    series = [np.asarray(c, dtype=float) for c in chains]
    n = series[0].size
    if n < 2 or any(s.size != n for s in series):
        raise ValueError("chains must share a common length >= 2")
    W = float(np.mean([np.var(s, ddof=1) for s in series]))
    if W == 0.0:
        raise ValueError("PSR undefined: all chains constant")
    means = np.array([s.mean() for s in series])
    B = n * float(np.var(means, ddof=1))
    v_hat = (n - 1) / n * W + B / n
    return math.sqrt(v_hat / W)


def monitored_scalars(chains: list[ChainDraws], n_lambda: int = 5,
                      n_delta: int = 5) -> dict[str, list[np.ndarray]]:
    """Default PSR monitors: both variances, the highest-variance squared
    factor loadings, and the highest-joint-PPI outcome coefficients.

    Loadings are monitored as lambda_j^2: the factor covariance is invariant
    under a global sign flip of lambda, so chains may settle into mirrored
    sign conventions and raw-lambda PSR would flag that non-identifiability
    forever rather than actual non-convergence.
    """
    out: dict[str, list[np.ndarray]] = {
        "sigma_sq_Sigma": [c.sigma_sq_Sigma for c in chains],
        "sigma_sq": [c.sigma_sq for c in chains],
    }
    lam_pooled = _pool(chains, "lam")
    if np.any(lam_pooled != 0.0):
        order = np.argsort((lam_pooled ** 2).var(axis=0))[::-1][:n_lambda]
        for j in sorted(order.tolist()):
            out[f"lambda_sq_{j + 1}"] = [c.lam[:, j] ** 2 for c in chains]
    ppi_joint, _ = ppi(chains)
    order = np.argsort(ppi_joint)[::-1][:n_delta]
    for j in sorted(order.tolist()):
        out[f"delta_{j + 1}"] = [c.delta[:, j] for c in chains]
    return out


def psr_report(chains: list[ChainDraws], threshold: float = 1.05) -> dict:
    """PSR per monitored scalar plus the convergence verdict. Monitors whose
    draws are constant everywhere (e.g. a never-included delta) are reported
    as None and do not fail the check."""
    monitors = monitored_scalars(chains)
    values: dict[str, float | None] = {}
    for name, series in monitors.items():
        try:
            values[name] = gelman_rubin(series)
        except ValueError:
            values[name] = None
    worst = max((v for v in values.values() if v is not None), default=None)
    converged = worst is None or worst < threshold
    return {"psr": values, "threshold": threshold,
            "max_psr": worst, "converged": converged}


@dataclass
class OperatingCharacteristics:
    tpr: float | None
    fpr: float | None
    ppv: float | None
    npv: float | None
    nvs: int

    def to_dict(self) -> dict:
        return {"tpr": self.tpr, "fpr": self.fpr, "ppv": self.ppv,
                "npv": self.npv, "nvs": self.nvs}


def operating_characteristics(selected, truth: np.ndarray) -> OperatingCharacteristics:
    """Set-vs-truth counts; rates with zero denominators are reported as
    absent (None), matching the convention for null scenarios."""
    truth = np.asarray(truth, dtype=bool)
    q = truth.size
    sel = np.zeros(q, dtype=bool)
    idx = np.asarray(list(selected), dtype=int)
    if idx.size:
        if idx.min() < 0 or idx.max() >= q:
            raise ValueError("selected index out of range")
        sel[idx] = True
    tp = int(np.sum(sel & truth))
    fp = int(np.sum(sel & ~truth))
    fn = int(np.sum(~sel & truth))
    tn = q - tp - fp - fn

    def rate(num: int, den: int) -> float | None:
        return num / den if den > 0 else None

    return OperatingCharacteristics(
        tpr=rate(tp, tp + fn), fpr=rate(fp, fp + tn),
        ppv=rate(tp, tp + fp), npv=rate(tn, tn + fn), nvs=int(sel.sum()),
    )
