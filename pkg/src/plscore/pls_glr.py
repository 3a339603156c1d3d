"""PLS generalized linear regression: components driven by per-predictor
GLM coefficients, a final GLM on the components, and back-transformation of
the component coefficients to predictor coefficients.

The X-side geometry (scores, loadings, deflation) is shared with the
gaussian engine; only the weight construction and the final regression are
family-aware.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data_model import MaskedMatrix, Response, ScalingRecord, standardize
from .errors import DataError, DegenerateComponentError, SingularSystemError
from .glm_core import GlmFit, fit_glm_arrays, wald_test
from .pls_gaussian import (
    PlsFit,
    _beta_raw,
    _w_star,
    compute_scores,
    deflate,
    max_components,
    scores_for,
    sign_convention,
)

SIG_LEVEL = 0.05
_TINY = 1e-12


@dataclass(frozen=True)
class PlsGlrFit(PlsFit):
    """PlsFit plus the final GLM on components and per-step diagnostics.

    ``sig_pred_count[h]`` is the number of predictors whose per-predictor
    GLM coefficient was significant at the 5% level when component h+1 was
    built; ``nonconverged[h]`` counts per-predictor fits that failed and
    contributed a zero weight.
    """

    final_glm: GlmFit = None
    sig_pred_count: tuple[int, ...] = ()
    nonconverged: tuple[int, ...] = ()


class StepResult(NamedTuple):
    w: np.ndarray
    t: np.ndarray
    sig_count: int
    nonconverged: int  # predictors contributing zero weight (failed GLM or exhausted column)


def plsglr_component_step(
    Xres: MaskedMatrix,
    T_prev: np.ndarray,
    y: Response,
) -> StepResult:
    """Build one component from per-predictor GLM coefficients.

    For each predictor j, a GLM of y on (previous components, residual
    column j) is fit on the rows where column j is present; the coefficient
    of the residual column becomes the unnormalized weight. Fits that fail
    to converge (or hit a singular system) contribute a zero weight and are
    counted rather than aborting, so bootstrap resampling stays robust.
    """
    n, p = Xres.n, Xres.p
    T_prev = np.asarray(T_prev, dtype=float).reshape(n, -1)
    a = np.zeros(p)
    sig = 0
    failures = 0
    for j in range(p):
        rows = Xres.mask[:, j]
        xcol = Xres.values[rows, j]
        # a column deflated down to rounding noise carries no information
        # for this component; give it zero weight instead of a wild slope
        if float(xcol @ xcol) <= 1e-18 * xcol.size:
            failures += 1
            continue
        Z = np.column_stack([T_prev[rows], xcol])
        try:
            fit = fit_glm_arrays(Z, y.y[rows], y.family, y.obs_weights[rows])
        except SingularSystemError:
            failures += 1
            continue
        if not fit.converged:
            failures += 1
            continue
        a[j] = fit.coef[-1]
        if wald_test(fit, len(fit.coef) - 1).p_value < SIG_LEVEL:
            sig += 1
    nrm = float(np.linalg.norm(a))
    if nrm < _TINY:
        raise DegenerateComponentError("degenerate PLSGLR component: zero weight vector")
    w = a / nrm
    t = compute_scores(Xres, w)
    return StepResult(w=w, t=t, sig_count=sig, nonconverged=failures)


def fit_plsglr(
    X: MaskedMatrix, y: Response, H: int, convention: str = "max_abs"
) -> PlsGlrFit:
    """Fit an H-component PLS generalized linear regression.

    Components are extracted sequentially (the first h components of an
    H-component fit equal an h-component fit); deflation uses the gaussian
    least-squares loadings, and the final GLM of y on the component scores
    supplies the intercept and component coefficients, which are then
    mapped back to predictor coefficients through W (P'W)^-1 and the
    training scaling.
    """
    if y.n != X.n:
        raise DataError("response length does not match number of rows")
    hmax = max_components(X.n, X.p)
    if not 1 <= H <= hmax:
        raise DataError(f"H must lie in [1, {hmax}] for this dataset, got {H}")
    w_obs = y.obs_weights

    Xres, scaling = standardize(X, w_obs)
    n, p = X.n, X.p
    W = np.empty((p, H))
    P = np.empty((p, H))
    T = np.empty((n, H))
    sig_counts = []
    failures = []
    for h in range(H):
        try:
            step = plsglr_component_step(Xres, T[:, :h], y)
        except DegenerateComponentError as err:
            raise DegenerateComponentError(str(err), achieved=h) from None
        s = sign_convention(step.w, convention)
        W[:, h] = s * step.w
        T[:, h] = s * step.t
        sig_counts.append(step.sig_count)
        failures.append(step.nonconverged)
        Xres, p_load = deflate(Xres, T[:, h], w_obs)
        P[:, h] = p_load

    final = fit_glm_arrays(T, y.y, y.family, w_obs)
    mu = float(final.coef[0])
    c = final.coef[1:].copy()
    W_star = _w_star(W, P)
    beta_std = W_star @ c
    beta_raw = _beta_raw(beta_std, mu=mu, scaling=scaling, y_scale=1.0, y_shift=0.0)
    return PlsGlrFit(
        W=W,
        P=P,
        T=T,
        c=c,
        mu=mu,
        W_star=W_star,
        beta_std=beta_std,
        beta_raw=beta_raw,
        scaling=scaling,
        H=H,
        family=y.family,
        col_names=X.col_names,
        row_ids=X.row_ids,
        final_glm=final,
        sig_pred_count=tuple(sig_counts),
        nonconverged=tuple(failures),
    )


def predict_response(fit: PlsGlrFit, Xnew: MaskedMatrix, type: str = "response") -> np.ndarray:
    """Out-of-sample predictions on the link, response or class scale.

    "class" thresholds the response-scale probability at 0.5 and is only
    defined for the binomial family.
    """
    if type not in ("link", "response", "class"):
        raise DataError(f"unknown prediction type {type!r}")
    T = scores_for(fit, Xnew)
    eta = fit.mu + T @ fit.c
    if type == "link":
        return eta
    m = fit.family.inv_link(eta)
    if type == "response":
        return m
    if fit.family.name != "binomial":
        raise DataError("class predictions require the binomial family")
    return (m >= 0.5).astype(float)


class BiplotData(NamedTuple):
    scores: np.ndarray
    loadings: np.ndarray
    row_ids: tuple[str, ...]
    col_names: tuple[str, ...]


def biplot_data(fit) -> BiplotData:
    """First two component scores and loadings, labelled for plotting."""
    if fit.H < 2:
        raise DataError("biplot requires at least 2 components")
    return BiplotData(
        scores=fit.T[:, :2].copy(),
        loadings=fit.P[:, :2].copy(),
        row_ids=fit.row_ids,
        col_names=fit.col_names,
    )
