"""Dataset representation, CSV ingestion, and preprocessing transforms."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats as sp_stats


class DataError(ValueError):
    """Raised for malformed input files or invalid dataset contents."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass
class MediationDataset:
    """Observed (X, A, M, Y) with dimensions (n, p, q).

    Values are immutable after construction; all entries must be finite
    (imputation is out of scope, ingestion rejects NaN/Inf).
    """

    X: np.ndarray                    # (n, p) covariates
    A: np.ndarray                    # (n,) exposure
    M: np.ndarray                    # (n, q) mediators
    Y: np.ndarray                    # (n,) outcome
    mediator_names: list[str] = field(default_factory=list)
    covariate_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.X = _readonly(np.atleast_2d(self.X) if np.asarray(self.X).ndim == 2
                           else np.asarray(self.X, dtype=float).reshape(len(self.A), -1))
        self.A = _readonly(self.A)
        self.M = _readonly(self.M)
        self.Y = _readonly(self.Y)
        n = self.A.shape[0]
        if n < 1:
            raise DataError("dataset must contain at least one row")
        if self.M.ndim != 2 or self.M.shape[0] != n:
            raise DataError("M must be an (n, q) matrix aligned with A")
        if self.M.shape[1] < 1:
            raise DataError("at least one mediator is required")
        if self.Y.shape != (n,):
            raise DataError("Y must be a length-n vector")
        if self.X.shape[0] != n:
            raise DataError("X must have n rows")
        for name, arr in (("X", self.X), ("A", self.A), ("M", self.M), ("Y", self.Y)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite value in {name}")
        if not self.mediator_names:
            self.mediator_names = [f"M{j + 1}" for j in range(self.q)]
        if not self.covariate_names:
            self.covariate_names = [f"X{k + 1}" for k in range(self.p)]
        if len(self.mediator_names) != self.q:
            raise DataError("mediator_names length must equal q")
        if len(self.covariate_names) != self.p:
            raise DataError("covariate_names length must equal p")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def q(self) -> int:
        return self.M.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass
class DatasetSchema:
    """Maps CSV column names to model roles."""

    exposure: str
    outcome: str
    mediators: list[str]
    covariates: list[str] = field(default_factory=list)
    group: str | None = None   # optional z-score group labels column

    def validate(self) -> None:
        if not self.mediators:
            raise DataError("schema must name at least one mediator column")
        roles = [self.exposure, self.outcome, *self.mediators, *self.covariates]
        if self.group is not None:
            roles.append(self.group)
        dupes = {c for c in roles if roles.count(c) > 1}
        if dupes:
            raise DataError(f"columns assigned to multiple roles: {sorted(dupes)}")


def _parse_column(frame: pd.DataFrame, column: str, path: str) -> np.ndarray:
    raw = frame[column].tolist()
    out = np.empty(len(raw))
    for i, cell in enumerate(raw):
        try:
            value = float(cell)
        except (TypeError, ValueError):
            raise DataError(
                f"{path}: non-numeric value {cell!r} in column {column!r}, row {i + 1}"
            ) from None
        if not np.isfinite(value):
            raise DataError(
                f"{path}: non-finite value {cell!r} in column {column!r}, row {i + 1}"
            )
        out[i] = value
    return out


def load_dataset(path: str | Path, schema: DatasetSchema) -> MediationDataset:
    """Read a CSV (header row required) and assemble a MediationDataset.

    Every referenced cell must parse as a finite number; the offending
    row/column is reported otherwise. Mediator column order is preserved.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    schema.validate()
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    cols = list(frame.columns)
    dupes = {c for c in cols if cols.count(c) > 1}
    if dupes:
        raise DataError(f"{path}: duplicate columns {sorted(dupes)}")
    needed = [schema.exposure, schema.outcome, *schema.mediators, *schema.covariates]
    missing = [c for c in needed if c not in cols]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    A = _parse_column(frame, schema.exposure, str(path))
    Y = _parse_column(frame, schema.outcome, str(path))
    M = np.column_stack([_parse_column(frame, c, str(path)) for c in schema.mediators])
    if schema.covariates:
        X = np.column_stack([_parse_column(frame, c, str(path)) for c in schema.covariates])
    else:
        X = np.empty((len(A), 0))
    return MediationDataset(X=X, A=A, M=M, Y=Y,
                            mediator_names=list(schema.mediators),
                            covariate_names=list(schema.covariates))


def save_dataset(data: MediationDataset, path: str | Path,
                 exposure_name: str = "A", outcome_name: str = "Y") -> DatasetSchema:
    """Write a dataset as CSV (exposure, outcome, mediators, covariates).

    Floats are written with shortest round-trip repr, so save -> load is
    bit-identical. Returns the schema describing the written columns.
    """
    columns = {exposure_name: data.A, outcome_name: data.Y}
    columns.update({name: data.M[:, j] for j, name in enumerate(data.mediator_names)})
    columns.update({name: data.X[:, k] for k, name in enumerate(data.covariate_names)})
    pd.DataFrame(columns).to_csv(path, index=False)
    return DatasetSchema(exposure=exposure_name, outcome=outcome_name,
                         mediators=list(data.mediator_names),
                         covariates=list(data.covariate_names))


def sample_skewness(x: np.ndarray) -> float:
    """Biased (moment) skewness m3 / m2^(3/2) with central sample moments."""
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise DataError("skewness requires at least 3 observations")
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        raise DataError("skewness undefined for zero-variance data")
    m3 = float(np.mean(d ** 3))
    return m3 / m2 ** 1.5


def inverse_normal_transform(x: np.ndarray) -> np.ndarray:
    """Rank-based transform Phi^{-1}((rank - 0.5)/n), average ranks for ties."""
    x = np.asarray(x, dtype=float)
    ranks = sp_stats.rankdata(x, method="average")
    return sp_stats.norm.ppf((ranks - 0.5) / x.size)


@dataclass
class PreprocessOptions:
    log_transform_abs_skewness_threshold: float = 2.0
    zscore_groups: np.ndarray | None = None   # length-n group labels
    inverse_normal_exposure: bool = False

    def validate(self, n: int) -> None:
        if self.log_transform_abs_skewness_threshold <= 0.0:
            raise DataError("skewness threshold must be > 0")
        if self.zscore_groups is not None:
            groups = np.asarray(self.zscore_groups)
            if groups.shape[0] != n:
                raise DataError("zscore_groups must have one label per row")
            _, counts = np.unique(groups, return_counts=True)
            if np.any(counts < 2):
                raise DataError("every z-score group needs at least 2 rows")


@dataclass
class TransformReport:
    log_transformed: list[str]
    zscored: list[str]
    exposure_inverse_normal: bool

    def to_dict(self) -> dict:
        return {
            "log_transformed": self.log_transformed,
            "zscored": self.zscored,
            "exposure_inverse_normal": self.exposure_inverse_normal,
        }


def preprocess(data: MediationDataset,
               opts: PreprocessOptions) -> tuple[MediationDataset, TransformReport]:
    """Apply the analysis-ready transforms: natural-log mediators whose
    |sample skewness| exceeds the threshold, z-score every mediator within
    each group (grand group if none), and optionally inverse-normal
    transform the exposure.
    """
    opts.validate(data.n)
    M = np.array(data.M)
    logged: list[str] = []
    for j, name in enumerate(data.mediator_names):
        if abs(sample_skewness(M[:, j])) > opts.log_transform_abs_skewness_threshold:
            if np.any(M[:, j] <= 0.0):
                raise DataError(
                    f"mediator {name!r} triggers the log transform but has "
                    "non-positive values"
                )
            M[:, j] = np.log(M[:, j])
            logged.append(name)
    if opts.zscore_groups is None:
        group_index = [np.arange(data.n)]
    else:
        labels = np.asarray(opts.zscore_groups)
        group_index = [np.flatnonzero(labels == g) for g in np.unique(labels)]
    for j, name in enumerate(data.mediator_names):
        for rows in group_index:
            block = M[rows, j]
            sd = float(np.std(block, ddof=1))
            if sd == 0.0:
                raise DataError(
                    f"mediator {name!r} has zero variance within a z-score group"
                )
            M[rows, j] = (block - block.mean()) / sd
    A = np.array(data.A)
    if opts.inverse_normal_exposure:
        A = inverse_normal_transform(A)
    out = MediationDataset(X=data.X, A=A, M=M, Y=data.Y,
                           mediator_names=list(data.mediator_names),
                           covariate_names=list(data.covariate_names))
    report = TransformReport(log_transformed=logged,
                             zscored=list(data.mediator_names),
                             exposure_inverse_normal=opts.inverse_normal_exposure)
    return out, report
