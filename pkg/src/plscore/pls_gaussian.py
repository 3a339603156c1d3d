"""Gaussian PLS regression (regular or observation-weighted) built on
missing-data-aware NIPALS kernels.

All kernels use pairwise-available sums: a masked cell simply drops out of
every numerator and denominator it would have entered. With a complete mask
each formula collapses to its textbook dense counterpart, which the test
suite checks to 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import (
    Family,
    MaskedMatrix,
    Response,
    ScalingRecord,
    apply_scaling,
    masked_column_stats,
    standardize,
)
from .errors import DataError, DeflationCollapseError, DegenerateComponentError

_TINY = 1e-12


@dataclass(frozen=True)
class PlsFit:
    """Fitted PLS model.

    W holds the unit-norm weight vectors, P the loadings, T the training
    scores and c the component coefficients; W_star = W (P'W)^-1 maps
    standardized predictors straight to scores on complete data. For the
    gaussian engine, mu and c live on the standardized-response scale and
    ScalingRecord carries the response mean/sd; beta_raw is always on the
    original scale with the intercept first.
    """

    W: np.ndarray
    P: np.ndarray
    T: np.ndarray
    c: np.ndarray
    mu: float
    W_star: np.ndarray
    beta_std: np.ndarray
    beta_raw: np.ndarray
    scaling: ScalingRecord
    H: int
    family: Family
    col_names: tuple[str, ...]
    row_ids: tuple[str, ...]


def nipals_weights(Xres: MaskedMatrix, u: np.ndarray, w_obs: np.ndarray | None = None) -> np.ndarray:
    """Unit-norm weight vector from pairwise-available regressions of each
    column on ``u``.

    w_j = sum_{i in obs(j)} w_i x_ij u_i / sum_{i in obs(j)} w_i u_i^2,
    normalized to unit length afterwards.
    """
    u = np.asarray(u, dtype=float)
    w = np.ones(Xres.n) if w_obs is None else np.asarray(w_obs, dtype=float)
    Xf = Xres.filled(0.0)
    num = Xf.T @ (w * u)
    den = Xres.mask.T.astype(float) @ (w * u * u)
    if np.any(den <= _TINY):
        raise DegenerateComponentError(
            "degenerate component: a column has no informative overlap with the residual"
        )
    wvec = num / den
    nrm = float(np.linalg.norm(wvec))
    if nrm < _TINY:
        raise DegenerateComponentError("degenerate component: zero weight vector")
    return wvec / nrm


def compute_scores(Xres: MaskedMatrix, w: np.ndarray) -> np.ndarray:
    """Per-row available-coordinate slope against the weight vector.

    t_i = sum_{j in obs(i)} w_j x_ij / sum_{j in obs(i)} w_j^2, the slope of
    the no-intercept regression of the observed entries of row i on the
    matching entries of w. Complete rows reduce to the inner product x_i'w.
    """
    w = np.asarray(w, dtype=float)
    Xf = Xres.filled(0.0)
    num = Xf @ w
    den = Xres.mask.astype(float) @ (w * w)
    bad = den <= _TINY
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DataError(f"row {Xres.row_ids[i]!r} has no observed entries with nonzero weight")
    return num / den


def deflate(
    Xres: MaskedMatrix, t: np.ndarray, w_obs: np.ndarray | None = None
) -> tuple[MaskedMatrix, np.ndarray]:
    """Remove a score's contribution from every present cell.

    Loadings are pairwise-available weighted regressions of each column on
    t; the mask is preserved untouched. Columns with no informative overlap
    with t keep a zero loading and are left as they are.
    """
    t = np.asarray(t, dtype=float)
    w = np.ones(Xres.n) if w_obs is None else np.asarray(w_obs, dtype=float)
    Xf = Xres.filled(0.0)
    num = Xf.T @ (w * t)
    den = Xres.mask.T.astype(float) @ (w * t * t)
    safe = np.where(den > _TINY, den, 1.0)
    p_load = np.where(den > _TINY, num / safe, 0.0)
    vals = np.where(Xres.mask, Xres.values - np.outer(t, p_load), np.nan)
    Xnext = MaskedMatrix(
        values=vals, mask=Xres.mask, col_names=Xres.col_names, row_ids=Xres.row_ids
    )
    return Xnext, p_load


def sign_convention(w: np.ndarray, convention: str = "max_abs") -> float:
    """Sign that makes the reference entry of a weight vector positive.

    "max_abs" keys on the largest-magnitude entry (ties broken by lowest
    index, which argmax already does); "first_nonzero" on the first entry
    exceeding the degeneracy threshold.
    """
    if convention == "max_abs":
        ref = w[int(np.argmax(np.abs(w)))]
    elif convention == "first_nonzero":
        nz = np.flatnonzero(np.abs(w) > _TINY)
        ref = w[int(nz[0])] if nz.size else 1.0
    else:
        raise ValueError(f"unknown sign convention {convention!r}")
    return -1.0 if ref < 0 else 1.0


def max_components(n: int, p: int) -> int:
    return min(n - 1, p)


def fit_pls(
    X: MaskedMatrix,
    y: Response,
    H: int,
    w_obs: np.ndarray | None = None,
    convention: str = "max_abs",
) -> PlsFit:
    """Fit an H-component PLS regression of a gaussian response on X.

    Standardizes X (and the response) with weighted column statistics,
    then iterates weights -> scores -> loadings -> deflation with the
    response residual updated as u <- u - c_h t_h. Predictor-scale
    coefficients are reconstructed from the scaling record.
    """
    if y.family.name != "gaussian":
        raise DataError("fit_pls requires a gaussian response; use fit_plsglr for other families")
    if y.n != X.n:
        raise DataError("response length does not match number of rows")
    w = y.obs_weights if w_obs is None else np.asarray(w_obs, dtype=float)
    if w.shape != (X.n,) or np.any(w <= 0):
        raise DataError("observation weights must be positive with one entry per row")
    hmax = max_components(X.n, X.p)
    if not 1 <= H <= hmax:
        raise DataError(f"H must lie in [1, {hmax}] for this dataset, got {H}")

    Xs, scaling = standardize(X, w)
    wsum = float(w.sum())
    y_mean = float(np.sum(w * y.y) / wsum)
    y_var = float(np.sum(w * (y.y - y_mean) ** 2) / (wsum - 1.0))
    if y_var <= 0:
        raise DataError("constant response")
    y_sd = float(np.sqrt(y_var))
    u = (y.y - y_mean) / y_sd

    n, p = X.n, X.p
    W = np.empty((p, H))
    P = np.empty((p, H))
    T = np.empty((n, H))
    c = np.empty(H)
    Xres = Xs
    for h in range(H):
        try:
            wvec = nipals_weights(Xres, u, w)
        except DegenerateComponentError as err:
            raise DegenerateComponentError(str(err), achieved=h) from None
        wvec = wvec * sign_convention(wvec, convention)
        t = compute_scores(Xres, wvec)
        tt = float(np.sum(w * t * t))
        if tt < _TINY:
            raise DegenerateComponentError("degenerate component: zero score vector", achieved=h)
        ch = float(np.sum(w * u * t) / tt)
        Xres, p_load = deflate(Xres, t, w)
        u = u - ch * t
        W[:, h], P[:, h], T[:, h], c[h] = wvec, p_load, t, ch

    W_star = _w_star(W, P)
    beta_std = W_star @ c
    scaling = ScalingRecord(
        col_means=scaling.col_means, col_sds=scaling.col_sds, y_mean=y_mean, y_sd=y_sd
    )
    beta_raw = _beta_raw(beta_std, mu=0.0, scaling=scaling, y_scale=y_sd, y_shift=y_mean)
    return PlsFit(
        W=W,
        P=P,
        T=T,
        c=c,
        mu=0.0,
        W_star=W_star,
        beta_std=beta_std,
        beta_raw=beta_raw,
        scaling=scaling,
        H=H,
        family=y.family,
        col_names=X.col_names,
        row_ids=X.row_ids,
    )


def _w_star(W: np.ndarray, P: np.ndarray) -> np.ndarray:
    PtW = P.T @ W
    try:
        return np.linalg.solve(PtW.T, W.T).T
    except np.linalg.LinAlgError:
        raise DeflationCollapseError() from None


def _beta_raw(
    beta_std: np.ndarray, mu: float, scaling: ScalingRecord, y_scale: float, y_shift: float
) -> np.ndarray:
    """Map standardized-scale coefficients to the original predictor scale.

    y_scale/y_shift undo the response standardization of the gaussian
    engine (1 and 0 for GLM families, where mu already lives on the link
    scale).
    """
    slopes = y_scale * beta_std / scaling.col_sds
    intercept = y_shift + y_scale * mu - float(slopes @ scaling.col_means)
    return np.concatenate([[intercept], slopes])


def scores_for(fit, Xnew: MaskedMatrix) -> np.ndarray:
    """Sequential component scores for new rows under the training scaling.

    Each component's score is the available-coordinate slope of the row
    residual against the training weight vector; the row residual is then
    deflated with the training loadings, mirroring the fit.
    """
    if Xnew.col_names != fit.col_names:
        raise DataError("column set of new data does not match the training columns")
    Xres = apply_scaling(Xnew, fit.scaling)
    T = np.empty((Xnew.n, fit.H))
    for h in range(fit.H):
        T[:, h] = compute_scores(Xres, fit.W[:, h])
        Xres, _ = _deflate_fixed(Xres, T[:, h], fit.P[:, h])
    return T


def _deflate_fixed(Xres: MaskedMatrix, t: np.ndarray, p_load: np.ndarray):
    vals = np.where(Xres.mask, Xres.values - np.outer(t, p_load), np.nan)
    return (
        MaskedMatrix(values=vals, mask=Xres.mask, col_names=Xres.col_names, row_ids=Xres.row_ids),
        p_load,
    )


def predict(fit: PlsFit, Xnew: MaskedMatrix) -> np.ndarray:
    """Predicted responses for new rows, on the original response scale."""
    T = scores_for(fit, Xnew)
    eta = fit.mu + T @ fit.c
    return fit.scaling.y_mean + fit.scaling.y_sd * eta


def fitted_values(fit: PlsFit, h: int | None = None) -> np.ndarray:
    """In-sample fitted responses using the first ``h`` components."""
    h = fit.H if h is None else h
    eta = fit.mu + fit.T[:, :h] @ fit.c[:h]
    return fit.scaling.y_mean + fit.scaling.y_sd * eta
