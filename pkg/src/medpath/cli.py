"""Command-line driver: simulate | fit | phase-scan | summarize | eval.

Exit codes: 0 ok, 2 config error, 3 convergence flag raised, 4 runtime
failure. Every command writes a manifest sufficient to re-run it
bit-identically (config hash, seeds, versions).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import ConfigError, RunConfig, load_config_tree, parse_run_config
from .data import (
    DataError,
    MediationDataset,
    PreprocessOptions,
    load_dataset,
    preprocess,
    save_dataset,
)
from .inference import EffectContrast, SelectionSummary, psr_report, summarize_selection
from .sampler import MultiChainError, SamplerError, run_chains
from .scenarios import generate_scenario
from .storage import config_hash, load_chains, read_json, save_chains, write_json
from .tuning import PhaseScanConfig, bayesian_fdr_threshold, phase_transition_scan

log = logging.getLogger("medpath")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNCONVERGED = 3
EXIT_RUNTIME = 4


def _manifest(command: str, cfg_tree: dict, extra: dict) -> dict:
    import scipy
    return {
        "command": command,
        "config": cfg_tree,
        "config_hash": config_hash(cfg_tree),
        "versions": {"medpath": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": sys.version.split()[0]},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        **extra,
    }


def _resolve_dataset(cfg: RunConfig) -> tuple[MediationDataset, dict]:
    info: dict = {}
    if cfg.scenario is not None:
        data, truth = generate_scenario(cfg.scenario)
        info["scenario_id"] = cfg.scenario.scenario_id
        info["scenario_seed"] = cfg.scenario.seed
    else:
        data = load_dataset(cfg.data_source.path, cfg.data_source.schema)
        info["data_path"] = cfg.data_source.path
    if cfg.preprocess is not None:
        opts = cfg.preprocess
        if cfg.group_column is not None and cfg.data_source is not None:
            frame = pd.read_csv(cfg.data_source.path, dtype=str, keep_default_na=False)
            opts = PreprocessOptions(
                log_transform_abs_skewness_threshold=opts.log_transform_abs_skewness_threshold,
                zscore_groups=frame[cfg.group_column].to_numpy(),
                inverse_normal_exposure=opts.inverse_normal_exposure,
            )
        data, report = preprocess(data, opts)
        info["preprocess"] = report.to_dict()
    return data, info


def _resolve_contrast(cfg: RunConfig, data: MediationDataset) -> EffectContrast:
    if cfg.contrast_percentiles is not None:
        lo, hi = cfg.contrast_percentiles
        return EffectContrast.from_percentiles(data.A, lo, hi)
    if cfg.contrast_values is not None:
        return EffectContrast(a=cfg.contrast_values[0], a_prime=cfg.contrast_values[1])
    return EffectContrast(a=1.0, a_prime=-1.0)


def _summary_payload(summary: SelectionSummary, names: list[str]) -> dict:
    return {
        "kappa": summary.kappa,
        "fdr_target": summary.fdr_target,
        "no_qualifying_kappa": summary.no_qualifying_kappa,
        "selected_indices": summary.selected.tolist(),
        "selected_mediators": [names[j] for j in summary.selected],
        "contrast": {"a": summary.contrast.a, "a_prime": summary.contrast.a_prime,
                     "multiplier": summary.contrast.multiplier},
        "ppi_joint": summary.ppi_joint.tolist(),
        "ppi_gamma": summary.ppi_gamma.tolist(),
        "mediator_names": names,
        "ie_per_mediator": {names[j]: s.to_dict()
                            for j, s in summary.ie_per_mediator.items()},
        "tau_per_mediator": {names[j]: s.to_dict()
                             for j, s in summary.tau_per_mediator.items()},
        "ie_total": summary.ie_total.to_dict(),
        "de": summary.de.to_dict(),
    }


def _write_summary_files(summary: SelectionSummary, names: list[str],
                         out_dir: Path) -> None:
    write_json(out_dir / "selection_summary.json", _summary_payload(summary, names))
    rows = []
    for j in summary.selected:
        tau_s = summary.tau_per_mediator.get(j)
        ie_s = summary.ie_per_mediator.get(j)
        rows.append({
            "mediator": names[j],
            "ppi_joint": summary.ppi_joint[j],
            "tau_pm": tau_s.median if tau_s else None,
            "tau_hpdi_lo": tau_s.hpdi_lo if tau_s else None,
            "tau_hpdi_hi": tau_s.hpdi_hi if tau_s else None,
            "ie_pm": ie_s.median if ie_s else None,
            "ie_hpdi_lo": ie_s.hpdi_lo if ie_s else None,
            "ie_hpdi_hi": ie_s.hpdi_hi if ie_s else None,
        })
    pd.DataFrame(rows, columns=["mediator", "ppi_joint", "tau_pm", "tau_hpdi_lo",
                                "tau_hpdi_hi", "ie_pm", "ie_hpdi_lo",
                                "ie_hpdi_hi"]).to_csv(
        out_dir / "selection_summary.csv", index=False)
    ppi_frame = pd.DataFrame({
        "mediator": names,
        "ppi_gamma": summary.ppi_gamma,
        "ppi_joint": summary.ppi_joint,
        "kappa": summary.kappa,
        "selected": np.isin(np.arange(len(names)), summary.selected).astype(int),
    })
    ppi_frame.to_csv(out_dir / "ppi.csv", index=False)


def cmd_simulate(args) -> int:
    tree = load_config_tree(args.config, args.overrides)
    cfg = parse_run_config(tree)
    if cfg.scenario is None:
        raise ConfigError("simulate needs a scenario block")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data, truth = generate_scenario(cfg.scenario)
    schema = save_dataset(data, out / "dataset.csv")
    truth_frame = pd.DataFrame({
        "mediator": data.mediator_names,
        "gamma_true": truth.gamma_true.astype(int),
        "joint_true": truth.joint_true.astype(int),
    })
    truth_frame.to_csv(out / "truth.csv", index=False)
    write_json(out / "manifest.json", _manifest("simulate", tree, {
        "schema": asdict(schema), "n": data.n, "q": data.q, "p": data.p,
        "n_gamma_true": int(truth.gamma_true.sum()),
        "n_joint_true": int(truth.joint_true.sum()),
    }))
    log.info("wrote %s", out / "dataset.csv")
    return EXIT_OK


def _load_eta_from_scan(path: str) -> float:
    payload = read_json(path)
    return float(payload["eta_selected"])


def cmd_fit(args) -> int:
    tree = load_config_tree(args.config, args.overrides)
    cfg = parse_run_config(tree)
    if cfg.variant.allows_mrf and cfg.hyperparameters.eta == 0.0 \
            and cfg.phase_scan_result is not None:
        cfg.hyperparameters.eta = _load_eta_from_scan(cfg.phase_scan_result)
    cfg.validate()
    data, data_info = _resolve_dataset(cfg)
    contrast = _resolve_contrast(cfg, data)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    chains = run_chains(cfg.chain_configs(), data, cfg.hyperparameters,
                        workers=cfg.workers)
    wall = time.perf_counter() - start
    save_chains(chains, out)
    if len(chains) >= 2:
        report = psr_report(chains)
    else:
        report = {"psr": None, "note": "skipped (single chain)", "converged": True,
                  "threshold": 1.05, "max_psr": None}
    write_json(out / "psr_report.json", report)
    summary = summarize_selection(chains, contrast, cfg.fdr_target,
                                  data.mediator_names)
    _write_summary_files(summary, data.mediator_names, out)
    converged = bool(report.get("converged", True))
    write_json(out / "manifest.json", _manifest("fit", tree, {
        **data_info,
        "mediator_names": data.mediator_names,
        "variant": cfg.variant.value,
        "eta": cfg.hyperparameters.eta,
        "lambda_pinned": not cfg.variant.has_lambda,
        "hyperparameters": {k: v for k, v in asdict(cfg.hyperparameters).items()
                            if k != "eta"},
        "seeds": [c.seed for c in cfg.chain_configs()],
        "contrast": {"a": contrast.a, "a_prime": contrast.a_prime,
                     "multiplier": contrast.multiplier},
        "fdr_target": cfg.fdr_target,
        "wall_time": wall,
        "converged": converged,
        "flag": None if converged else "unconverged",
    }))
    if not converged:
        log.warning("monitored PSR >= %.2f: flagged unconverged", report["threshold"])
        return EXIT_UNCONVERGED
    return EXIT_OK


def cmd_phase_scan(args) -> int:
    tree = load_config_tree(args.config, args.overrides)
    cfg = parse_run_config(tree)
    if not cfg.eta_grid:
        raise ConfigError("phase-scan needs a phase_scan.eta_grid")
    data, data_info = _resolve_dataset(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    template = cfg.chain_configs()[0]
    scan_cfg = PhaseScanConfig(eta_grid=np.asarray(cfg.eta_grid, dtype=float),
                               m_pt=cfg.m_pt, jump_threshold=cfg.jump_threshold,
                               chain_template=template)
    if len(cfg.eta_grid) == 1:
        result = None
        payload = {"eta_grid": cfg.eta_grid, "medians": [None], "eta_pt": None,
                   "eta_selected": cfg.eta_grid[0], "transition_index": None,
                   "no_transition": True}
        log.warning("single-point grid: no scan possible, selected eta=%s",
                    cfg.eta_grid[0])
    else:
        result = phase_transition_scan(scan_cfg, data, cfg.hyperparameters)
        payload = result.to_dict()
        if result.no_transition:
            log.warning("no phase transition detected; selected largest grid eta")
    write_json(out / "phase_scan.json", payload)
    frame = pd.DataFrame({
        "eta": payload["eta_grid"],
        "median_gamma": payload["medians"],
        "is_transition": [payload["transition_index"] == g
                          for g in range(len(payload["eta_grid"]))],
    })
    frame.to_csv(out / "phase_scan.csv", index=False)
    write_json(out / "manifest.json", _manifest("phase-scan", tree, {
        **data_info, "m_pt": cfg.m_pt, "jump_threshold": cfg.jump_threshold,
        "eta_selected": payload["eta_selected"],
        "no_transition": payload["no_transition"],
    }))
    return EXIT_OK


def cmd_summarize(args) -> int:
    run_dir = Path(args.run_dir)
    manifest = read_json(run_dir / "manifest.json")
    chains = load_chains(run_dir)
    if args.contrast is not None:
        a, a_prime = (float(v) for v in args.contrast.split(","))
        contrast = EffectContrast(a=a, a_prime=a_prime)
    else:
        block = manifest.get("contrast", {"a": 1.0, "a_prime": -1.0})
        contrast = EffectContrast(a=float(block["a"]), a_prime=float(block["a_prime"]))
    fdr_target = args.fdr_target if args.fdr_target is not None \
        else float(manifest.get("fdr_target", 0.05))
    names = manifest.get("mediator_names") or \
        [f"M{j + 1}" for j in range(chains[0].q)]
    summary = summarize_selection(chains, contrast, fdr_target, names)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_summary_files(summary, names, out)
    return EXIT_OK


def _read_truth(path: str) -> tuple[np.ndarray, np.ndarray]:
    frame = pd.read_csv(path)
    return (frame["gamma_true"].to_numpy().astype(bool),
            frame["joint_true"].to_numpy().astype(bool))


def _eval_one(summary_path: str, gamma_true: np.ndarray,
              joint_true: np.ndarray, fdr_target: float) -> dict:
    from .inference import operating_characteristics
    payload = read_json(summary_path)
    q = len(payload["ppi_joint"])
    if q != gamma_true.size:
        raise DataError(f"{summary_path}: q={q} does not match truth "
                        f"(q={gamma_true.size})")
    joint_sel = payload["selected_indices"]
    gamma_thr = bayesian_fdr_threshold(np.asarray(payload["ppi_gamma"]), fdr_target)
    return {
        "gamma": operating_characteristics(gamma_thr.selected, gamma_true).to_dict(),
        "joint": operating_characteristics(joint_sel, joint_true).to_dict(),
        "kappa_joint": payload["kappa"],
        "kappa_gamma": gamma_thr.kappa,
        "summary": summary_path,
    }


def cmd_eval(args) -> int:
    gamma_true, joint_true = _read_truth(args.truth)
    fdr_target = args.fdr_target if args.fdr_target is not None else 0.05
    evals = [_eval_one(s, gamma_true, joint_true, fdr_target)
             for s in args.summaries]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "eval.json", {"replicates": evals, "fdr_target": fdr_target})
    metrics = ["tpr", "fpr", "ppv", "npv", "nvs"]
    rows = []
    for metric in metrics:
        row = {"metric": metric.upper()}
        for group in ("gamma", "joint"):
            values = [e[group][metric] for e in evals]
            present = [v for v in values if v is not None]
            row[f"{group}_mean"] = float(np.mean(present)) if present else None
            row[f"{group}_sd"] = (float(np.std(present, ddof=1))
                                  if len(present) > 1 else None)
        rows.append(row)
    pd.DataFrame(rows).to_csv(out / "eval.csv", index=False)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medpath",
        description="Bayesian pathway selection for high-dimensional mediation",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_cmd(name: str, func, help_text: str):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="YAML run config")
        cmd.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="KEY=VALUE", help="dotted-key config override")
        cmd.set_defaults(func=func)
        return cmd

    add_config_cmd("simulate", cmd_simulate, "generate a synthetic scenario")
    add_config_cmd("fit", cmd_fit, "fit the model and summarize selections")
    add_config_cmd("phase-scan", cmd_phase_scan, "select eta by phase-transition scan")

    summ = sub.add_parser("summarize", help="re-summarize stored draws")
    summ.add_argument("--run-dir", required=True)
    summ.add_argument("--out", default=None)
    summ.add_argument("--contrast", default=None, metavar="A,A_PRIME")
    summ.add_argument("--fdr-target", type=float, default=None)
    summ.set_defaults(func=cmd_summarize)

    ev = sub.add_parser("eval", help="selection quality against ground truth")
    ev.add_argument("--truth", required=True, help="truth CSV from simulate")
    ev.add_argument("--summaries", nargs="+", required=True,
                    help="selection_summary.json file(s), one per replicate")
    ev.add_argument("--out", required=True)
    ev.add_argument("--fdr-target", type=float, default=None)
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, ValueError) as err:
        log.error("%s", err)
        return EXIT_CONFIG
    except (SamplerError, MultiChainError, RuntimeError, OSError) as err:
        log.error("%s", err)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
