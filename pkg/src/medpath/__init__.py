"""Bayesian variable selection for high-dimensional mediation analysis."""

from .data import (
    DataError,
    DatasetSchema,
    MediationDataset,
    PreprocessOptions,
    TransformReport,
    inverse_normal_transform,
    load_dataset,
    preprocess,
    sample_skewness,
    save_dataset,
)
from .inference import (
    EffectContrast,
    EffectSummary,
    OperatingCharacteristics,
    SelectionSummary,
    estimate_effects,
    gelman_rubin,
    hpdi,
    operating_characteristics,
    ppi,
    psr_report,
    summarize_selection,
)
from .model import (
    FactorCovariance,
    Hyperparameters,
    ParameterState,
    fa_correlation,
    mediator_loglik,
    mrf_inclusion_prob,
    outcome_loglik,
    spike_slab_log_prior_delta,
    spike_slab_log_prior_tau,
    ssb_log_prior,
)
from .sampler import (
    AdaptSpec,
    ChainConfig,
    ChainDraws,
    InitSpec,
    ModelVariant,
    MultiChainError,
    SamplerError,
    run_chain,
    run_chains,
)
from .scenarios import (
    ScenarioSpec,
    TrueActiveSets,
    generate_scenario,
    scenario_i,
    scenario_i_small,
    scenario_ii,
    scenario_ii_small,
    scenario_iii,
    scenario_iii_small,
    scenario_iv_like,
)
from .tuning import (
    PhaseScanConfig,
    PhaseScanResult,
    bayesian_fdr_threshold,
    median_gamma,
    phase_transition_scan,
    select_eta,
)

__version__ = "0.1.0"
