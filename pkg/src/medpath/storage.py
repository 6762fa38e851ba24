"""On-disk layout for fitted runs: one CSV per parameter group per chain
(columns = parameters, rows = kept draws) plus JSON manifests. Floats are
written with enough digits to round-trip exactly."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .sampler import ChainDraws

_FLOAT_FMT = "%.17g"


def _write_matrix(path: Path, header: list[str], matrix: np.ndarray,
                  fmt: str = _FLOAT_FMT) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, np.atleast_2d(matrix), fmt=fmt, delimiter=",")


def _read_matrix(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, body


def _group_files(q: int, p: int) -> dict[str, list[str]]:
    med = [f"m{j + 1}" for j in range(q)]
    return {
        "gamma": med, "tau": med, "omega": med, "delta": med,
        "lambda": med, "beta0": med,
        "b": [f"x{k + 1}_m{j + 1}" for k in range(p) for j in range(q)],
        "outcome_fixed": ["alpha0", *[f"alpha_{k + 1}" for k in range(p)], "alpha_p1"],
        "variances": ["sigma_sq_Sigma", "sigma_sq"],
    }


def save_chain(draws: ChainDraws, chain_dir: str | Path) -> None:
    chain_dir = Path(chain_dir)
    chain_dir.mkdir(parents=True, exist_ok=True)
    q, p, K = draws.q, draws.p, draws.n_kept
    files = _group_files(q, p)
    _write_matrix(chain_dir / "gamma.csv", files["gamma"],
                  draws.gamma.astype(int), fmt="%d")
    _write_matrix(chain_dir / "omega.csv", files["omega"],
                  draws.omega.astype(int), fmt="%d")
    for name, arr in (("tau", draws.tau), ("delta", draws.delta),
                      ("lambda", draws.lam), ("beta0", draws.beta0)):
        _write_matrix(chain_dir / f"{name}.csv", files[name], arr)
    _write_matrix(chain_dir / "b.csv", files["b"], draws.B.reshape(K, p * q))
    _write_matrix(chain_dir / "outcome_fixed.csv", files["outcome_fixed"],
                  np.column_stack([draws.alpha0, draws.alpha, draws.alpha_p1]))
    _write_matrix(chain_dir / "variances.csv", files["variances"],
                  np.column_stack([draws.sigma_sq_Sigma, draws.sigma_sq]))
    telemetry = {
        "seed": draws.seed, "n_iter": draws.n_iter, "burn_in": draws.burn_in,
        "thin": draws.thin, "model_variant": draws.model_variant,
        "eta_used": draws.eta_used, "wall_time": draws.wall_time,
        "accept_rate_lambda": _to_jsonable(draws.accept_rate_lambda),
        "proposal_scales_at_freeze": _to_jsonable(draws.proposal_scales_at_freeze),
        "proposal_scales_final": _to_jsonable(draws.proposal_scales_final),
        "q": q, "p": p, "n_kept": K,
    }
    write_json(chain_dir / "telemetry.json", telemetry)


def load_chain(chain_dir: str | Path) -> ChainDraws:
    chain_dir = Path(chain_dir)
    telemetry = read_json(chain_dir / "telemetry.json")
    q, p = telemetry["q"], telemetry["p"]
    arrays = {}
    for name in ("gamma", "tau", "omega", "delta", "lambda", "beta0",
                 "b", "outcome_fixed", "variances"):
        _, arrays[name] = _read_matrix(chain_dir / f"{name}.csv")
    K = arrays["gamma"].shape[0]
    rate = telemetry["accept_rate_lambda"]
    return ChainDraws(
        gamma=arrays["gamma"].astype(bool), tau=arrays["tau"],
        omega=arrays["omega"].astype(bool), delta=arrays["delta"],
        lam=arrays["lambda"], beta0=arrays["beta0"],
        B=arrays["b"].reshape(K, p, q),
        alpha0=arrays["outcome_fixed"][:, 0],
        alpha=arrays["outcome_fixed"][:, 1:p + 1],
        alpha_p1=arrays["outcome_fixed"][:, p + 1],
        sigma_sq_Sigma=arrays["variances"][:, 0],
        sigma_sq=arrays["variances"][:, 1],
        accept_rate_lambda=np.asarray(rate, dtype=float),
        eta_used=telemetry["eta_used"], wall_time=telemetry["wall_time"],
        seed=telemetry["seed"], n_iter=telemetry["n_iter"],
        burn_in=telemetry["burn_in"], thin=telemetry["thin"],
        model_variant=telemetry["model_variant"],
        proposal_scales_at_freeze=np.asarray(
            telemetry["proposal_scales_at_freeze"], dtype=float),
        proposal_scales_final=np.asarray(
            telemetry["proposal_scales_final"], dtype=float),
    )


def save_chains(chains: list[ChainDraws], run_dir: str | Path) -> list[Path]:
    run_dir = Path(run_dir)
    dirs = []
    for i, draws in enumerate(chains):
        chain_dir = run_dir / "chains" / f"chain_{i:02d}"
        save_chain(draws, chain_dir)
        dirs.append(chain_dir)
    return dirs


def load_chains(run_dir: str | Path) -> list[ChainDraws]:
    base = Path(run_dir) / "chains"
    chain_dirs = sorted(d for d in base.iterdir() if d.is_dir())
    if not chain_dirs:
        raise FileNotFoundError(f"no chains under {base}")
    return [load_chain(d) for d in chain_dirs]


def _to_jsonable(value):
    if isinstance(value, np.ndarray):
        return [None if (isinstance(v, float) and not np.isfinite(v)) else v
                for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_to_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def config_hash(config: dict) -> str:
    canonical = json.dumps(_to_jsonable(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
