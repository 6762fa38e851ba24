"""Hyperparameter selection: the phase-transition scan that picks the MRF
coupling eta, and the adaptive Bayesian-FDR threshold that picks the PPI
cutoff kappa."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import MediationDataset
from .model import Hyperparameters
from .sampler import ChainConfig, ChainDraws, ModelVariant, run_chain


@dataclass
class PhaseScanConfig:
    eta_grid: np.ndarray               # strictly increasing, starts at 0
    m_pt: int = 500                    # kept posterior samples per grid point
    jump_threshold: float = 0.05
    chain_template: ChainConfig | None = None

    def validate(self) -> None:
        grid = np.asarray(self.eta_grid, dtype=float)
        if grid.size < 1 or grid[0] != 0.0:
            raise ValueError("eta grid must start at 0")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("eta grid must be strictly increasing")
        if self.m_pt < 1:
            raise ValueError("m_pt must be positive")


@dataclass
class PhaseScanResult:
    eta_grid: np.ndarray
    medians: np.ndarray                # gamma_(eta^g) per grid point
    eta_pt: float | None               # first eta with a detected jump
    eta_selected: float
    transition_index: int | None
    no_transition: bool = False        # warning flag: rule never fired

    def to_dict(self) -> dict:
        return {
            "eta_grid": list(map(float, self.eta_grid)),
            "medians": list(map(float, self.medians)),
            "eta_pt": None if self.eta_pt is None else float(self.eta_pt),
            "eta_selected": float(self.eta_selected),
            "transition_index": self.transition_index,
            "no_transition": self.no_transition,
        }


def median_gamma(draws: ChainDraws) -> float:
    """50th percentile, across mediators, of the per-mediator posterior mean
    of gamma (even q: mean of the two middle order statistics)."""
    if draws.n_kept < 1:
        raise ValueError("need at least one kept draw")
    return float(np.median(draws.gamma.mean(axis=0)))


def select_eta(eta_grid: np.ndarray, medians: np.ndarray,
               jump_threshold: float = 0.05) -> PhaseScanResult:
    """The detection rule on a computed median curve: the transition is the
    first grid point whose median exceeds the eta=0 median by more than the
    threshold; the selected eta is the grid point just below it. If the rule
    never fires the largest grid value is returned with a warning flag."""
    grid = np.asarray(eta_grid, dtype=float)
    med = np.asarray(medians, dtype=float)
    if grid.shape != med.shape:
        raise ValueError("grid and medians must align")
    base = med[0]
    for g in range(1, grid.size):
        if med[g] - base > jump_threshold:
            return PhaseScanResult(eta_grid=grid, medians=med,
                                   eta_pt=float(grid[g]),
                                   eta_selected=float(grid[g - 1]),
                                   transition_index=g)
    return PhaseScanResult(eta_grid=grid, medians=med, eta_pt=None,
                           eta_selected=float(grid[-1]), transition_index=None,
                           no_transition=True)


def phase_transition_scan(cfg: PhaseScanConfig, data: MediationDataset,
                          hp: Hyperparameters) -> PhaseScanResult:
    """Run one independent short chain per grid point (seed = template seed
    + grid index), collect the gamma-median curve, and apply the rule."""
    cfg.validate()
    template = cfg.chain_template
    if template is None:
        raise ValueError("phase scan needs a chain_template")
    grid = np.asarray(cfg.eta_grid, dtype=float)
    medians = np.empty(grid.size)
    for g, eta in enumerate(grid):
        chain_cfg = replace(
            template,
            n_iter=template.burn_in + cfg.m_pt * template.thin,
            seed=template.seed + g,
            model_variant=ModelVariant.MVN_MRF_SSB,
        )
        hp_g = replace(hp, eta=float(eta))
        try:
            draws = run_chain(chain_cfg, data, hp_g)
        except Exception as err:
            raise RuntimeError(f"phase scan failed at grid index {g} "
                               f"(eta={eta})") from err
        medians[g] = median_gamma(draws)
    return select_eta(grid, medians, cfg.jump_threshold)


@dataclass
class FdrThresholdResult:
    kappa: float
    selected: np.ndarray            # sorted indices with ppi > kappa
    fdr: float | None               # achieved FDR at kappa (None if empty)
    no_qualifying: bool = False     # warning flag


def bayesian_fdr_threshold(ppi: np.ndarray, target: float = 0.05) -> FdrThresholdResult:
    """Smallest kappa among the candidate thresholds whose Bayesian FDR,
    FDR(kappa) = sum_j (1 - PPI_j) I(PPI_j > kappa) / sum_j I(PPI_j > kappa),
    is below the target; equivalently the largest selection meeting it.

    Candidates are the distinct PPI values (strict > selection). When every
    PPI ties at a single value, one candidate just below the tie is added so
    the block can be selected together. With no qualifying candidate the
    selection is empty, kappa = max(ppi), and the warning flag is set.
    """
    ppi = np.asarray(ppi, dtype=float)
    if ppi.size == 0:
        raise ValueError("ppi vector is empty")
    if np.any(ppi < 0.0) or np.any(ppi > 1.0):
        raise ValueError("PPIs must lie in [0, 1]")
    if not 0.0 < target < 1.0:
        raise ValueError("target must lie in (0, 1)")
    candidates = np.unique(ppi)[::-1].tolist()
    if len(candidates) == 1:
        candidates.append(np.nextafter(candidates[0], -np.inf))
    best_kappa = None
    best_fdr = None
    for kappa in candidates:  # descending, so the last qualifying is smallest
        mask = ppi > kappa
        n_sel = int(mask.sum())
        if n_sel == 0:
            continue
        fdr = float((1.0 - ppi[mask]).sum() / n_sel)
        if fdr < target:
            best_kappa = kappa
            best_fdr = fdr
    if best_kappa is None:
        return FdrThresholdResult(kappa=float(ppi.max()),
                                  selected=np.array([], dtype=int),
                                  fdr=None, no_qualifying=True)
    return FdrThresholdResult(kappa=float(best_kappa),
                              selected=np.flatnonzero(ppi > best_kappa),
                              fdr=best_fdr)
