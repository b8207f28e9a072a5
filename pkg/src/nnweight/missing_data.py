"""Missing-at-random tables, query functionals, and their estimators.

A table holds fully observed covariates and a partially missing response.
The nearest-neighbor weighted estimator imputes each missing row's query
value with the value at its nearest fully observed row (in covariate
space), which is equivalent to weighting each observed row by how often
it is the nearest donor.  The complete-case estimator averages over the
observed rows only and is consistent only when missingness is independent
of everything.

Preprocessing follows the usual tabular pipeline: median imputation of
partially missing covariates, a 0/1 missingness-indicator column per
imputed covariate, and z-scoring of all covariate columns (indicators
included) so Euclidean distances weigh columns comparably.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import pandas as pd

from .nn_index import NNIndex, PointSet

COLUMN_ROLES = ("covariate", "response", "id")


@dataclass(frozen=True, eq=False)
class MARTable:
    """Tabular data with complete-or-missing responses per row.

    NaN marks a missing cell.  A row counts as observed when every
    response cell is present; covariate cells may be missing until
    ``preprocess`` fills them.
    """

    covariates: np.ndarray
    responses: np.ndarray
    covariate_names: tuple[str, ...] = ()
    response_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        Y = np.asarray(self.responses, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if Y.ndim == 1:
            Y = Y.reshape(-1, 1)
        if X.shape[0] != Y.shape[0]:
            raise ValueError("covariates and responses must have the same row count")
        if X.shape[0] == 0:
            raise ValueError("table has zero rows")
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "responses", Y)
        if not self.covariate_names:
            object.__setattr__(self, "covariate_names", tuple(f"x{j}" for j in range(X.shape[1])))
        if not self.response_names:
            object.__setattr__(self, "response_names", tuple(f"y{j}" for j in range(Y.shape[1])))

    @property
    def n_rows(self) -> int:
        return self.covariates.shape[0]

    @property
    def observed_mask(self) -> np.ndarray:
        """True where the whole response row is present."""
        return ~np.isnan(self.responses).any(axis=1)

    @property
    def n_observed(self) -> int:
        return int(self.observed_mask.sum())

    @property
    def n_missing(self) -> int:
        return self.n_rows - self.n_observed

    @property
    def covariates_complete(self) -> bool:
        return not np.isnan(self.covariates).any()


class IngestError(ValueError):
    """Raised when a tabular source fails schema validation."""


def ingest_table(source, schema: dict[str, str]) -> MARTable:
    """Read a comma-separated file with a header row into a MARTable.

    ``schema`` maps column names to roles: covariate, response, or id.
    An empty field means missing.  Id columns are dropped.  Problems are
    collected and reported together: unknown columns, non-numeric cells
    (with row and column), and zero data rows.
    """
    frame = pd.read_csv(source, dtype=str, keep_default_na=False, skipinitialspace=True)
    errors: list[str] = []
    for col, role in schema.items():
        if role not in COLUMN_ROLES:
            errors.append(f"column {col!r}: unknown role {role!r}")
        if col not in frame.columns:
            errors.append(f"column {col!r} not present in the file")
    covariate_cols = [c for c, r in schema.items() if r == "covariate" and c in frame.columns]
    response_cols = [c for c, r in schema.items() if r == "response" and c in frame.columns]
    if not covariate_cols:
        errors.append("schema names no covariate column")
    if not response_cols:
        errors.append("schema names no response column")
    if len(frame) == 0:
        errors.append("file contains a header but zero data rows")
    if errors:
        raise IngestError("; ".join(errors))

    def parse_column(col: str) -> np.ndarray:
        out = np.empty(len(frame))
        for i, cell in enumerate(frame[col].tolist()):
            text = cell.strip()
            if text == "":
                out[i] = np.nan
                continue
            try:
                out[i] = float(text)
            except ValueError:
                errors.append(f"non-numeric cell {text!r} at row {i} (file line {i + 2}), column {col!r}")
                out[i] = np.nan
        return out

    X = np.column_stack([parse_column(c) for c in covariate_cols])
    Y = np.column_stack([parse_column(c) for c in response_cols])
    if errors:
        raise IngestError("; ".join(errors))
    return MARTable(
        covariates=X,
        responses=Y,
        covariate_names=tuple(covariate_cols),
        response_names=tuple(response_cols),
    )


def preprocess(table: MARTable, *, standardize: bool = True,
               add_missing_indicators: bool = True) -> MARTable:
    """Median-impute covariates, add missingness indicators, z-score.

    Each covariate column with missing cells is filled with the median of
    its observed cells and gains a companion 0/1 indicator column (1 where
    the cell was missing).  All covariate columns, indicators included,
    are then standardized to mean 0 and sample standard deviation 1.
    Constant columns are left untouched with a warning.
    """
    X = table.covariates.copy()
    names = list(table.covariate_names)
    indicator_cols: list[np.ndarray] = []
    indicator_names: list[str] = []
    for j, name in enumerate(table.covariate_names):
        missing = np.isnan(X[:, j])
        if missing.any():
            observed = X[~missing, j]
            if observed.size == 0:
                raise ValueError(f"covariate column {name!r} has no observed cells to impute from")
            X[missing, j] = np.median(observed)
            if add_missing_indicators:
                indicator_cols.append(missing.astype(float))
                indicator_names.append(f"{name}_missing")
    if indicator_cols:
        X = np.column_stack([X] + indicator_cols)
        names += indicator_names

    if standardize:
        for j, name in enumerate(names):
            col = X[:, j]
            sd = col.std(ddof=1) if col.size > 1 else 0.0
            if not np.isfinite(sd) or sd == 0.0:
                warnings.warn(f"covariate column {name!r} is constant; left unstandardized")
                continue
            X[:, j] = (col - col.mean()) / sd

    return MARTable(
        covariates=X,
        responses=table.responses,
        covariate_names=tuple(names),
        response_names=table.response_names,
    )


@dataclass(frozen=True)
class Query:
    """A filtered transform over (covariates, response) rows.

    ``transform`` maps (X, Y) arrays to per-row reals; ``where`` is an
    optional per-row predicate.  The weighted estimator evaluates the
    indicator-weighted transform 1{where} * transform at donor rows; the
    complete-case estimator averages the transform over observed rows that
    pass the predicate.
    """

    transform: Callable[[np.ndarray, np.ndarray], np.ndarray]
    where: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    description: str = ""

    @staticmethod
    def mean_response(description: str = "mean(y)") -> "Query":
        return Query(transform=lambda X, Y: Y[:, 0], description=description)

    def transform_values(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.transform(X, Y), dtype=float).reshape(X.shape[0])
        return vals

    def passes(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        if self.where is None:
            return np.ones(X.shape[0], dtype=bool)
        return np.asarray(self.where(X, Y), dtype=bool).reshape(X.shape[0])


@dataclass(frozen=True)
class FunctionalEstimate:
    """A scalar functional estimate plus the population sizes behind it.

    ``status`` is "ok" or "empty"; an empty filter yields no value rather
    than a silent zero or NaN.
    """

    value: Optional[float]
    method: str
    n_observed: int
    n_missing: int
    status: str = "ok"
    description: str = ""


def nn_weighted_functional(table: MARTable, query: Query, tie_seed: int = 0) -> FunctionalEstimate:
    """Average the query over missing rows, imputed from nearest donors.

    Each missing row contributes the query value of its nearest observed
    row.  The per-row average and the equivalent donor-weighted sum are
    both computed and cross-checked.
    """
    if not table.covariates_complete:
        raise ValueError("covariates contain missing cells; run preprocess first")
    mask = table.observed_mask
    n, n_missing = int(mask.sum()), int((~mask).sum())
    if n < 1:
        raise ValueError("no observed rows to donate values")
    if n_missing < 1:
        raise ValueError("no missing population: every response is observed")

    donors_X = table.covariates[mask]
    donors_Y = table.responses[mask]
    recipients_X = table.covariates[~mask]

    index = NNIndex(PointSet(donors_X), tie_seed=tie_seed)
    assigned = index.nearest(recipients_X)

    keep = query.passes(donors_X, donors_Y)
    values = np.where(keep, query.transform_values(donors_X, donors_Y), 0.0)
    if not np.all(np.isfinite(values[keep])):
        raise ValueError("query transform is non-finite on a passing observed row")

    if query.where is not None and not keep[assigned].any():
        return FunctionalEstimate(
            value=None, method="nn_weighted", n_observed=n, n_missing=n_missing,
            status="empty", description=query.description,
        )

    row_form = float(values[assigned].sum() / n_missing)
    counts = np.bincount(assigned, minlength=n)
    weight_form = float(np.dot(counts, values) / n_missing)
    if not math.isclose(row_form, weight_form, rel_tol=1e-12, abs_tol=1e-12):
        raise AssertionError(
            f"estimator forms disagree: per-row {row_form!r} vs weighted {weight_form!r}"
        )
    return FunctionalEstimate(
        value=row_form, method="nn_weighted", n_observed=n, n_missing=n_missing,
        description=query.description,
    )


def complete_case_functional(table: MARTable, query: Query) -> FunctionalEstimate:
    """Average the transform over observed rows passing the filter."""
    mask = table.observed_mask
    n, n_missing = int(mask.sum()), int((~mask).sum())
    if n < 1:
        raise ValueError("no observed rows")
    donors_X = table.covariates[mask]
    donors_Y = table.responses[mask]
    keep = query.passes(donors_X, donors_Y)
    if not keep.any():
        return FunctionalEstimate(
            value=None, method="complete_case", n_observed=n, n_missing=n_missing,
            status="empty", description=query.description,
        )
    values = query.transform_values(donors_X[keep], donors_Y[keep])
    if not np.all(np.isfinite(values)):
        raise ValueError("query transform is non-finite on a passing observed row")
    return FunctionalEstimate(
        value=float(values.mean()), method="complete_case", n_observed=n,
        n_missing=n_missing, description=query.description,
    )


# ---------------------------------------------------------------------------
# Synthetic generator used by demos and tests


@dataclass(frozen=True)
class SyntheticMARModel:
    """X ~ Uniform(0,1), Y|X ~ Normal(X, noise_sd^2), P(observed|X) linear in X."""

    observe_intercept: float = 0.2
    observe_slope: float = 0.6
    noise_sd: float = 0.1

    def observe_probability(self, x: np.ndarray) -> np.ndarray:
        return self.observe_intercept + self.observe_slope * np.asarray(x, dtype=float)

    def conditional_mean(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)


def synthetic_mar_table(n_rows: int, seed: int,
                        model: SyntheticMARModel | None = None) -> MARTable:
    """Draw a table from the synthetic MAR model; missing responses are NaN."""
    model = model or SyntheticMARModel()
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(90,)))
    x = rng.uniform(0.0, 1.0, size=n_rows)
    y = rng.normal(model.conditional_mean(x), model.noise_sd)
    observed = rng.uniform(size=n_rows) < model.observe_probability(x)
    y = np.where(observed, y, np.nan)
    return MARTable(covariates=x.reshape(-1, 1), responses=y.reshape(-1, 1),
                    covariate_names=("x",), response_names=("y",))
