"""Dataset representation: masked predictor matrices, response families,
CSV ingestion, standardization and a seeded simulator.

Missing predictor entries are first-class citizens here: a MaskedMatrix
carries an explicit boolean mask (True = present) and downstream engines
use pairwise-available sums instead of imputing. Responses are never
allowed to be missing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, xlogy

from .errors import DataError

DEFAULT_NA_TOKENS = frozenset({"NA", "", "NaN"})

_MEAN_EPS = 1e-10  # clamp for means on the boundary of their valid range


# ---------------------------------------------------------------------------
# response families


@dataclass(frozen=True)
class Family:
    """Response family: link, inverse link, variance and deviance kernels.

    ``link`` maps a mean m to the linear predictor eta, ``inv_link`` is its
    inverse, ``variance`` the GLM variance function V(m), ``unit_deviance``
    the per-observation deviance contribution d(y, m) and ``link_deriv``
    the derivative g'(m) used by the IRLS weights.
    """

    name: str
    link: Callable[[np.ndarray], np.ndarray]
    inv_link: Callable[[np.ndarray], np.ndarray]
    variance: Callable[[np.ndarray], np.ndarray]
    unit_deviance: Callable[[np.ndarray, np.ndarray], np.ndarray]
    link_deriv: Callable[[np.ndarray], np.ndarray]
    work_weight: Callable[[np.ndarray], np.ndarray]  # 1 / (V(m) g'(m)^2)
    clamp_mean: Callable[[np.ndarray], np.ndarray]
    initial_mean: Callable[[np.ndarray], np.ndarray]
    validate_response: Callable[[np.ndarray], None]

    def pearson_resid(self, y: np.ndarray, m: np.ndarray) -> np.ndarray:
        return (y - m) / np.sqrt(self.variance(m))

    def __repr__(self) -> str:  # keep reprs short in error messages
        return f"Family({self.name!r})"


def _validate_gaussian(y: np.ndarray) -> None:
    if not np.all(np.isfinite(y)):
        raise DataError("gaussian response must be finite")


def _validate_binomial(y: np.ndarray) -> None:
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("invalid binomial response: values must be 0 or 1")


def _validate_poisson(y: np.ndarray) -> None:
    if not np.all(np.isfinite(y)) or np.any(y < 0) or np.any(y != np.floor(y)):
        raise DataError("invalid poisson response: values must be nonnegative integers")


GAUSSIAN = Family(
    name="gaussian",
    link=lambda m: np.asarray(m, dtype=float),
    inv_link=lambda eta: np.asarray(eta, dtype=float),
    variance=lambda m: np.ones_like(np.asarray(m, dtype=float)),
    unit_deviance=lambda y, m: (y - m) ** 2,
    link_deriv=lambda m: np.ones_like(np.asarray(m, dtype=float)),
    work_weight=lambda m: np.ones_like(np.asarray(m, dtype=float)),
    clamp_mean=lambda m: m,
    initial_mean=lambda y: np.asarray(y, dtype=float),
    validate_response=_validate_gaussian,
)

BINOMIAL = Family(
    name="binomial",
    link=lambda m: np.log(m / (1.0 - m)),
    inv_link=expit,
    variance=lambda m: m * (1.0 - m),
    unit_deviance=lambda y, m: 2.0 * (xlogy(y, y / m) + xlogy(1.0 - y, (1.0 - y) / (1.0 - m))),
    link_deriv=lambda m: 1.0 / (m * (1.0 - m)),
    work_weight=lambda m: m * (1.0 - m),
    clamp_mean=lambda m: np.clip(m, _MEAN_EPS, 1.0 - _MEAN_EPS),
    initial_mean=lambda y: (y + 0.5) / 2.0,
    validate_response=_validate_binomial,
)

POISSON = Family(
    name="poisson",
    link=np.log,
    inv_link=np.exp,
    variance=lambda m: np.asarray(m, dtype=float),
    unit_deviance=lambda y, m: 2.0 * (xlogy(y, y / m) - (y - m)),
    link_deriv=lambda m: 1.0 / m,
    work_weight=lambda m: np.asarray(m, dtype=float),
    clamp_mean=lambda m: np.maximum(m, _MEAN_EPS),
    initial_mean=lambda y: np.asarray(y, dtype=float) + 0.1,
    validate_response=_validate_poisson,
)

FAMILIES = {f.name: f for f in (GAUSSIAN, BINOMIAL, POISSON)}


def family(name: str) -> Family:
    try:
        return FAMILIES[name]
    except KeyError:
        raise DataError(f"unknown family {name!r}; expected one of {sorted(FAMILIES)}") from None


# ---------------------------------------------------------------------------
# core containers


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MaskedMatrix:
    """n x p predictor matrix with an explicit missingness mask.

    ``values`` holds NaN where masked; masked cells are never read by any
    kernel. ``mask`` is True where a value is present. Instances are
    immutable and safe to share across threads.
    """

    values: np.ndarray
    mask: np.ndarray
    col_names: tuple[str, ...]
    row_ids: tuple[str, ...]

    def __post_init__(self):
        values = _freeze(np.asarray(self.values, dtype=float))
        mask = _freeze(np.asarray(self.mask, dtype=bool))
        if values.ndim != 2 or mask.shape != values.shape:
            raise DataError("values and mask must be 2-d arrays of identical shape")
        if len(self.col_names) != values.shape[1]:
            raise DataError("col_names length does not match number of columns")
        if len(self.row_ids) != values.shape[0]:
            raise DataError("row_ids length does not match number of rows")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "col_names", tuple(self.col_names))
        object.__setattr__(self, "row_ids", tuple(self.row_ids))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def complete(self) -> bool:
        return bool(self.mask.all())

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Dense copy with masked cells replaced by ``fill``."""
        return np.where(self.mask, self.values, fill)

    def take_rows(self, idx: Sequence[int]) -> "MaskedMatrix":
        idx = np.asarray(idx, dtype=int)
        return MaskedMatrix(
            values=self.values[idx],
            mask=self.mask[idx],
            col_names=self.col_names,
            row_ids=tuple(self.row_ids[i] for i in idx),
        )


def validate_columns(X: MaskedMatrix) -> None:
    """Enforce the load-time invariants.

    Every row needs at least one present entry; every column needs at least
    two present entries taking at least two distinct values.
    """
    row_counts = X.mask.sum(axis=1)
    if np.any(row_counts == 0):
        i = int(np.argmin(row_counts))
        raise DataError(f"row {X.row_ids[i]!r} has no observed predictor values")
    for j in range(X.p):
        col = X.values[X.mask[:, j], j]
        if col.size < 2:
            raise DataError(f"column {X.col_names[j]!r} has fewer than 2 observed values")
        if np.unique(col).size < 2:
            raise DataError(f"all-constant column {X.col_names[j]!r}")


@dataclass(frozen=True)
class Response:
    """Fully observed response vector with its family and observation weights."""

    y: np.ndarray
    family: Family
    obs_weights: np.ndarray = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        if y.size == 0:
            raise DataError("empty response")
        if np.any(np.isnan(y)):
            raise DataError("missing response value")
        self.family.validate_response(y)
        w = self.obs_weights
        w = np.ones_like(y) if w is None else np.asarray(w, dtype=float).ravel()
        if w.shape != y.shape:
            raise DataError("obs_weights length does not match response length")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise DataError("obs_weights must be positive and finite")
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "obs_weights", _freeze(w))

    @property
    def n(self) -> int:
        return self.y.size

    def take(self, idx: Sequence[int]) -> "Response":
        idx = np.asarray(idx, dtype=int)
        return Response(y=self.y[idx], family=self.family, obs_weights=self.obs_weights[idx])


@dataclass(frozen=True)
class ScalingRecord:
    """Column means/sds used for standardization, plus the response scaling
    for the gaussian engine (None for other families)."""

    col_means: np.ndarray
    col_sds: np.ndarray
    y_mean: float | None = None
    y_sd: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "col_means", _freeze(np.asarray(self.col_means, dtype=float)))
        object.__setattr__(self, "col_sds", _freeze(np.asarray(self.col_sds, dtype=float)))
        if np.any(self.col_sds <= 0):
            raise DataError("column standard deviations must be positive")


# ---------------------------------------------------------------------------
# operations


def masked_column_stats(X: MaskedMatrix, w_obs: np.ndarray | None = None):
    """Weighted per-column mean and sample sd over present entries.

    The sd divisor is (sum of weights - 1), which reduces to n_j - 1 for
    unit weights and makes duplicating a row equivalent to doubling its
    weight.
    """
    w = np.ones(X.n) if w_obs is None else np.asarray(w_obs, dtype=float)
    Xf = X.filled(0.0)
    wcol = X.mask * w[:, None]
    wsum = wcol.sum(axis=0)
    means = (Xf * w[:, None]).sum(axis=0) / wsum
    dev = np.where(X.mask, X.values - means, 0.0)
    ss = (dev * dev * w[:, None]).sum(axis=0)
    denom = wsum - 1.0
    if np.any(denom <= 0):
        j = int(np.argmin(denom))
        raise DataError(f"column {X.col_names[j]!r} has fewer than 2 observed values")
    var = ss / denom
    if np.any(var <= 0):
        j = int(np.argmin(var))
        raise DataError(f"all-constant column {X.col_names[j]!r} (zero variance)")
    return means, np.sqrt(var)


def standardize(
    X: MaskedMatrix, w_obs: np.ndarray | None = None
) -> tuple[MaskedMatrix, ScalingRecord]:
    """Center and scale each column over its present entries.

    Masked cells stay masked. Returns the standardized matrix and the
    ScalingRecord needed to map model coefficients back to the raw scale.
    """
    means, sds = masked_column_stats(X, w_obs)
    vals = np.where(X.mask, (X.values - means) / sds, np.nan)
    Xs = MaskedMatrix(values=vals, mask=X.mask, col_names=X.col_names, row_ids=X.row_ids)
    return Xs, ScalingRecord(col_means=means, col_sds=sds)


def apply_scaling(X: MaskedMatrix, scaling: ScalingRecord) -> MaskedMatrix:
    """Standardize ``X`` with a previously computed ScalingRecord."""
    if len(scaling.col_means) != X.p:
        raise DataError("scaling record does not match the number of columns")
    vals = np.where(X.mask, (X.values - scaling.col_means) / scaling.col_sds, np.nan)
    return MaskedMatrix(values=vals, mask=X.mask, col_names=X.col_names, row_ids=X.row_ids)


def load_csv(
    path,
    response_col: str,
    family_: Family | str,
    na_tokens: frozenset[str] | set[str] = DEFAULT_NA_TOKENS,
    encoding: str = "utf-8",
) -> tuple[MaskedMatrix, Response]:
    """Read an RFC-4180 CSV with a mandatory header row.

    Cells matching a token in ``na_tokens`` become masked predictor
    entries. The response column must be fully populated and valid for the
    family.
    """
    fam = family(family_) if isinstance(family_, str) else family_
    na = frozenset(na_tokens)
    with open(path, "r", newline="", encoding=encoding) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        rows = [r for r in reader if r]
    if response_col not in header:
        raise DataError(f"{path}: response column {response_col!r} not found in header")
    ycol = header.index(response_col)
    pred_cols = [j for j in range(len(header)) if j != ycol]
    col_names = tuple(header[j] for j in pred_cols)
    n = len(rows)
    if n == 0:
        raise DataError(f"{path}: no data rows")

    y = np.empty(n)
    values = np.full((n, len(pred_cols)), np.nan)
    mask = np.zeros((n, len(pred_cols)), dtype=bool)
    row_ids = tuple(str(i + 1) for i in range(n))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 1} has {len(row)} fields, expected {len(header)}")
        cell = row[ycol]
        if cell in na:
            raise DataError(f"{path}: missing response value in row {i + 1}")
        try:
            y[i] = float(cell)
        except ValueError:
            raise DataError(f"{path}: non-numeric response {cell!r} in row {i + 1}") from None
        for jj, j in enumerate(pred_cols):
            cell = row[j]
            if cell in na:
                continue
            try:
                values[i, jj] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell!r} in row {i + 1}, column {header[j]!r}"
                ) from None
            mask[i, jj] = True

    X = MaskedMatrix(values=values, mask=mask, col_names=col_names, row_ids=row_ids)
    validate_columns(X)
    resp = Response(y=y, family=fam)
    return X, resp


def save_csv(path, X: MaskedMatrix, y: Response | None = None, response_name: str = "y") -> None:
    """Write a MaskedMatrix (and optional response) as CSV, masked cells as "NA".

    Floats are written with ``repr`` so a reload reproduces them exactly.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ([response_name] if y is not None else []) + list(X.col_names)
        writer.writerow(header)
        for i in range(X.n):
            row = [repr(float(y.y[i]))] if y is not None else []
            for j in range(X.p):
                row.append(repr(float(X.values[i, j])) if X.mask[i, j] else "NA")
            writer.writerow(row)


def simulate(
    n: int,
    p: int,
    family_: Family | str,
    missing_frac: float = 0.0,
    seed: int = 0,
    noise_sd: float = 1.0,
    max_retries: int = 100,
) -> tuple[MaskedMatrix, Response, np.ndarray]:
    """Draw a synthetic dataset with known coefficients and an i.i.d. mask.

    Parameters
    ----------
    n, p : int
        Number of observations and predictors. n <= p is allowed.
    family_ : Family or str
        Response family; the linear predictor is passed through its
        inverse link before sampling.
    missing_frac : float
        Marginal masking rate in [0, 1). Rows or columns that violate the
        MaskedMatrix invariants are re-drawn, a bounded number of times.
    seed : int
        Everything is deterministic given this seed.
    noise_sd : float
        Gaussian-family noise standard deviation.

    Returns
    -------
    (MaskedMatrix, Response, true_beta)
    """
    fam = family(family_) if isinstance(family_, str) else family_
    if not 0.0 <= missing_frac < 1.0:
        raise DataError("missing_frac must lie in [0, 1)")
    if n < 2 or p < 1:
        raise DataError("need n >= 2 and p >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    # scale keeps the linear predictor O(1) regardless of p
    true_beta = rng.normal(0.0, 1.0, p) / math.sqrt(p)
    eta = X @ true_beta
    if fam.name == "gaussian":
        y = eta + noise_sd * rng.standard_normal(n)
    elif fam.name == "binomial":
        y = (rng.random(n) < expit(eta)).astype(float)
    else:
        y = rng.poisson(np.exp(np.clip(eta, -30.0, 30.0))).astype(float)

    if missing_frac == 0.0:
        mask = np.ones((n, p), dtype=bool)
    else:
        mask = rng.random((n, p)) >= missing_frac
        for _ in range(max_retries):
            bad_rows = np.flatnonzero(mask.sum(axis=1) == 0)
            for i in bad_rows:
                mask[i] = rng.random(p) >= missing_frac
            col_ok = np.array(
                [mask[:, j].sum() >= 2 and np.unique(X[mask[:, j], j]).size >= 2 for j in range(p)]
            )
            bad_cols = np.flatnonzero(~col_ok)
            for j in bad_cols:
                mask[:, j] = rng.random(n) >= missing_frac
            if bad_rows.size == 0 and bad_cols.size == 0:
                break
        else:
            raise DataError(
                f"infeasible mask rate {missing_frac}: invariants not satisfied "
                f"after {max_retries} retries"
            )

    values = np.where(mask, X, np.nan)
    col_names = tuple(f"x{j + 1}" for j in range(p))
    row_ids = tuple(str(i + 1) for i in range(n))
    Xm = MaskedMatrix(values=values, mask=mask, col_names=col_names, row_ids=row_ids)
    validate_columns(Xm)
    return Xm, Response(y=y, family=fam), true_beta
