"""Run configuration: a nested YAML file plus dotted-key overrides.

All hyperparameter defaults mirror the reference analysis settings
(inclusion prior 0.1, slab scales 9, Gaussian prior variances 100,
inverse-gamma (6, 1/3), lambda prior (0, 100), FDR target 0.05).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .data import DataError, DatasetSchema, PreprocessOptions
from .model import Hyperparameters
from .sampler import AdaptSpec, ChainConfig, InitSpec, ModelVariant
from .scenarios import ScenarioSpec, scenario_from_id

log = logging.getLogger("medpath")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class DataSource:
    path: str
    schema: DatasetSchema


@dataclass
class RunConfig:
    output_dir: str
    variant: ModelVariant = ModelVariant.MVN_MRF_SSB
    data_source: DataSource | None = None
    scenario: ScenarioSpec | None = None
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    n_chains: int = 1
    n_iter: int = 10000
    burn_in: int = 5000
    thin: int = 5
    base_seed: int = 1
    init: InitSpec = field(default_factory=InitSpec)
    adapt: AdaptSpec = field(default_factory=AdaptSpec)
    random_scan: bool = False
    contrast_values: tuple[float, float] | None = None      # (a, a_prime)
    contrast_percentiles: tuple[float, float] | None = None  # (lower, upper)
    fdr_target: float = 0.05
    preprocess: PreprocessOptions | None = None
    group_column: str | None = None
    phase_scan_result: str | None = None    # path to a phase-scan JSON
    eta_grid: list[float] | None = None     # phase-scan command input
    m_pt: int = 500
    jump_threshold: float = 0.05
    workers: int | None = None
    raw: dict = field(default_factory=dict)

    def chain_configs(self) -> list[ChainConfig]:
        return [
            ChainConfig(n_iter=self.n_iter, burn_in=self.burn_in, thin=self.thin,
                        seed=self.base_seed + i, model_variant=self.variant,
                        init=self.init, adapt=self.adapt, random_scan=self.random_scan)
            for i in range(self.n_chains)
        ]

    def validate(self) -> None:
        if (self.data_source is None) == (self.scenario is None):
            raise ConfigError("exactly one of data/scenario must be configured")
        if self.contrast_percentiles is not None and self.data_source is None \
                and self.scenario is None:
            raise ConfigError("percentile contrast requires a dataset")
        if not 0.0 < self.fdr_target < 1.0:
            raise ConfigError("fdr_target must lie in (0,1)")
        if self.n_chains < 1:
            raise ConfigError("n_chains must be >= 1")
        try:
            for cfg in self.chain_configs():
                cfg.validate()
            self.hyperparameters.validate()
        except ValueError as err:
            raise ConfigError(str(err)) from None
        if not self.variant.allows_mrf and self.hyperparameters.eta != 0.0:
            raise ConfigError(f"eta must be 0 for the {self.variant.value} variant")


def _set_dotted(tree: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-mapping key {key!r}")
    node[keys[-1]] = value


def load_config_tree(path: str | Path, overrides: list[str] | None = None) -> dict:
    """Read the YAML file and apply ``key.path=value`` overrides (values are
    parsed as YAML scalars)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    with open(path, encoding="utf-8") as fh:
        tree = yaml.safe_load(fh) or {}
    if not isinstance(tree, dict):
        raise ConfigError("config root must be a mapping")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not in key=value form")
        key, _, raw_value = item.partition("=")
        _set_dotted(tree, key.strip(), yaml.safe_load(raw_value))
    return tree


def _hyperparameters_from(tree: dict) -> Hyperparameters:
    tree = dict(tree or {})
    for ignored in ("mu0", "mu1"):
        if ignored in tree:
            log.warning("hyperparameter %r is accepted but unused", ignored)
            tree.pop(ignored)
    if "theta_gamma" in tree and "theta_gamma_prob" in tree:
        raise ConfigError("give theta_gamma or theta_gamma_prob, not both")
    prob = tree.pop("theta_gamma_prob", None)
    known = set(Hyperparameters.__dataclass_fields__)
    unknown = set(tree) - known
    if unknown:
        raise ConfigError(f"unknown hyperparameters: {sorted(unknown)}")
    for name in ("v_sq", "psi_sq"):
        if name in tree and isinstance(tree[name], list):
            tree[name] = np.asarray(tree[name], dtype=float)
    hp = Hyperparameters(**tree)
    if prob is not None:
        hp = hp.with_gamma_probability(float(prob))
    return hp


def _schema_from(tree: dict) -> DatasetSchema:
    try:
        return DatasetSchema(
            exposure=tree["exposure"], outcome=tree["outcome"],
            mediators=list(tree["mediators"]),
            covariates=list(tree.get("covariates", [])),
            group=tree.get("group"),
        )
    except KeyError as err:
        raise ConfigError(f"schema is missing {err}") from None


def _scenario_from(tree: dict) -> ScenarioSpec:
    tree = dict(tree)
    sid = tree.pop("id", None)
    if sid is None:
        raise ConfigError("scenario block needs an 'id'")
    cov = tree.pop("covariance_csv", None)
    covariance = None
    if cov is not None:
        import pandas as pd
        covariance = pd.read_csv(cov, float_precision="round_trip").to_numpy(dtype=float)
    try:
        return scenario_from_id(
            sid, n=tree.pop("n", None), q=tree.pop("q", None),
            seed=int(tree.pop("seed", 0)), covariance=covariance,
            permutation=tree.pop("permutation", None), p=tree.pop("p", None),
        )
    except DataError as err:
        raise ConfigError(str(err)) from None


def _init_from(tree: dict) -> InitSpec:
    known = set(InitSpec.__dataclass_fields__)
    unknown = set(tree) - known
    if unknown:
        raise ConfigError(f"unknown init options: {sorted(unknown)}")
    for name in ("tau_init", "delta_init", "lambda_init"):
        if name in tree and isinstance(tree[name], list):
            tree[name] = np.asarray(tree[name], dtype=float)
    return InitSpec(**tree)


def parse_run_config(tree: dict) -> RunConfig:
    tree = dict(tree)
    if "output_dir" not in tree:
        raise ConfigError("config needs an output_dir")
    cfg = RunConfig(output_dir=str(tree.pop("output_dir")), raw=dict(tree))
    if "variant" in tree:
        try:
            cfg.variant = ModelVariant(str(tree.pop("variant")).lower())
        except ValueError:
            raise ConfigError(f"unknown variant {tree['variant']!r}") from None
    if "data" in tree:
        block = tree.pop("data")
        cfg.data_source = DataSource(path=str(block["path"]),
                                     schema=_schema_from(block.get("schema", {})))
    if "scenario" in tree:
        cfg.scenario = _scenario_from(tree.pop("scenario"))
    cfg.hyperparameters = _hyperparameters_from(tree.pop("hyperparameters", {}))
    if "eta" in tree:
        cfg.hyperparameters.eta = float(tree.pop("eta"))
    chains = tree.pop("chains", {})
    cfg.n_chains = int(chains.get("n_chains", 1))
    cfg.n_iter = int(chains.get("n_iter", 10000))
    cfg.burn_in = int(chains.get("burn_in", cfg.n_iter // 2))
    cfg.thin = int(chains.get("thin", 1))
    cfg.base_seed = int(chains.get("base_seed", 1))
    cfg.random_scan = bool(chains.get("random_scan", False))
    if "init" in tree:
        cfg.init = _init_from(tree.pop("init"))
    if "adapt" in tree:
        block = tree.pop("adapt")
        known = set(AdaptSpec.__dataclass_fields__)
        unknown = set(block) - known
        if unknown:
            raise ConfigError(f"unknown adapt options: {sorted(unknown)}")
        cfg.adapt = AdaptSpec(**block)
    if "contrast" in tree:
        block = tree.pop("contrast")
        if "percentiles" in block:
            lo, hi = block["percentiles"]
            cfg.contrast_percentiles = (float(lo), float(hi))
        elif "a" in block and "a_prime" in block:
            cfg.contrast_values = (float(block["a"]), float(block["a_prime"]))
        else:
            raise ConfigError("contrast needs either percentiles or a/a_prime")
    if "fdr_target" in tree:
        cfg.fdr_target = float(tree.pop("fdr_target"))
    if "preprocess" in tree:
        block = tree.pop("preprocess")
        cfg.group_column = block.pop("group_column", None)
        cfg.preprocess = PreprocessOptions(
            log_transform_abs_skewness_threshold=float(
                block.get("log_skew_threshold", 2.0)),
            inverse_normal_exposure=bool(block.get("inverse_normal_exposure", False)),
        )
    if "phase_scan_result" in tree:
        cfg.phase_scan_result = str(tree.pop("phase_scan_result"))
    if "phase_scan" in tree:
        block = tree.pop("phase_scan")
        cfg.eta_grid = [float(v) for v in block.get("eta_grid", [])]
        cfg.m_pt = int(block.get("m_pt", 500))
        cfg.jump_threshold = float(block.get("jump_threshold", 0.05))
    if "workers" in tree:
        cfg.workers = int(tree.pop("workers"))
    return cfg
