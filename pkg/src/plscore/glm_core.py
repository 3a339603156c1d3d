"""Iteratively reweighted least squares GLM fitter.

Small and self-contained: this solver sits inside tight loops (one fit per
predictor per component, one per bootstrap resample), so it works on plain
arrays and keeps allocations low. Supported families are gaussian/identity,
binomial/logit and poisson/log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve

from .data_model import Family, Response
from .errors import SingularSystemError

MAX_ITER = 50
DEV_RTOL = 1e-8
MAX_HALVINGS = 10
SEPARATION_COEF = 30.0  # |coef| beyond this after a failed fit flags separation


@dataclass(frozen=True)
class GlmFit:
    """Converged (or best-effort) GLM fit.

    ``coef`` has the intercept first. ``cov`` is the estimated covariance of
    ``coef`` at the final IRLS weights, scaled by the dispersion estimate for
    the gaussian family. ``separated`` marks logistic fits whose coefficients
    diverged (complete separation); such fits carry their best iterate.
    """

    coef: np.ndarray
    cov: np.ndarray
    deviance: float
    pearson_chi2: float
    n_iter: int
    converged: bool
    separated: bool
    fitted_means: np.ndarray
    family: Family
    boundary: bool  # fitted means were clamped away from the boundary
    dev_trace: tuple = ()  # deviance after each accepted iteration


class WaldResult(NamedTuple):
    z: float
    p_value: float
    degenerate: bool


def _solve_wls(D: np.ndarray, z: np.ndarray, w: np.ndarray):
    """Solve the weighted least squares system D' diag(w) D b = D' (w z).

    Returns (solution, cholesky factor). Raises SingularSystemError when the
    weighted cross-product is not positive definite.
    """
    Dw = D * w[:, None]
    A = Dw.T @ D
    b = Dw.T @ z
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise SingularSystemError() from None
    return cho_solve((L, True), b, check_finite=False), L


def fit_glm_arrays(
    Z: np.ndarray,
    y: np.ndarray,
    fam: Family,
    w_obs: np.ndarray | None = None,
    max_iter: int = MAX_ITER,
) -> GlmFit:
    """Fit a GLM of ``y`` on an intercept plus the columns of ``Z``.

    ``Z`` must be complete; pass an (n, 0) array for an intercept-only
    model. Convergence is declared when the relative deviance change drops
    below 1e-8; deviance increases trigger step-halving (up to 10 halvings),
    after which the best iterate is returned with ``converged=False``.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    Z = np.asarray(Z, dtype=float).reshape(n, -1)
    q = Z.shape[1]
    w = np.ones(n) if w_obs is None else np.asarray(w_obs, dtype=float)
    D = np.empty((n, q + 1))
    D[:, 0] = 1.0
    if q:
        D[:, 1:] = Z

    mu = fam.clamp_mean(fam.initial_mean(y))
    eta = fam.link(mu)
    dev = float(np.sum(w * fam.unit_deviance(y, mu)))
    coef = None
    converged = False
    n_iter = 0
    boundary = False
    trace = []

    for it in range(1, max_iter + 1):
        n_iter = it
        gp = fam.link_deriv(mu)
        # for canonical links 1/(V g'^2) equals V, so reuse it
        irls_w = w * fam.work_weight(mu)
        z = eta + (y - mu) * gp
        new_coef, _ = _solve_wls(D, z, irls_w)

        if coef is None:
            trial = new_coef
            eta_t = D @ trial
            mu_raw = fam.inv_link(eta_t)
            mu_t = fam.clamp_mean(mu_raw)
            dev_t = float(np.sum(w * fam.unit_deviance(y, mu_t)))
        else:
            step = new_coef - coef
            frac = 1.0
            for _ in range(MAX_HALVINGS + 1):
                trial = coef + frac * step
                eta_t = D @ trial
                mu_raw = fam.inv_link(eta_t)
                mu_t = fam.clamp_mean(mu_raw)
                dev_t = float(np.sum(w * fam.unit_deviance(y, mu_t)))
                if np.isfinite(dev_t) and dev_t <= dev + 1e-10 * max(1.0, abs(dev)):
                    break
                frac *= 0.5
            else:
                # step-halving exhausted: keep the best iterate seen so far
                break
        boundary = boundary or bool(np.any(mu_t != mu_raw))
        dev_prev = dev
        coef, eta, mu, dev = trial, eta_t, mu_t, dev_t
        trace.append(dev)
        rel = abs(dev_prev - dev) / max(abs(dev_prev), 1e-300)
        if rel < DEV_RTOL:
            converged = True
            break

    if coef is None:  # max_iter == 0 guard; not reachable in normal use
        raise SingularSystemError("IRLS produced no iterate")

    separated = (
        not converged and fam.name == "binomial" and float(np.max(np.abs(coef))) > SEPARATION_COEF
    )

    irls_w = w * fam.work_weight(mu)
    A = (D * irls_w[:, None]).T @ D
    try:
        L = np.linalg.cholesky(A)
        cov = cho_solve((L, True), np.eye(q + 1), check_finite=False)
    except np.linalg.LinAlgError:
        raise SingularSystemError() from None
    if fam.name == "gaussian":
        dof = n - (q + 1)
        phi = dev / dof if dof > 0 else 0.0
        cov = cov * phi
    cov = (cov + cov.T) / 2.0
    chi2 = float(np.sum(w * (y - mu) ** 2 / fam.variance(mu)))

    return GlmFit(
        coef=coef,
        cov=cov,
        deviance=dev,
        pearson_chi2=chi2,
        n_iter=n_iter,
        converged=converged,
        separated=separated,
        fitted_means=mu,
        family=fam,
        boundary=boundary,
        dev_trace=tuple(trace),
    )


def fit_glm(Z: np.ndarray, y: Response) -> GlmFit:
    """Fit a GLM of a Response on a complete design matrix ``Z`` (no
    intercept column; one is added internally)."""
    return fit_glm_arrays(Z, y.y, y.family, y.obs_weights)


def wald_test(fit: GlmFit, index: int) -> WaldResult:
    """Two-sided Wald test for one coefficient (0 = intercept).

    A zero standard error yields p = 1 with the degenerate flag set.
    """
    se = math.sqrt(max(float(fit.cov[index, index]), 0.0))
    coef = float(fit.coef[index])
    if se == 0.0:
        return WaldResult(z=0.0, p_value=1.0, degenerate=True)
    z = coef / se
    # two-sided standard normal tail: 2*(1 - Phi(|z|)) = erfc(|z|/sqrt(2))
    return WaldResult(z=z, p_value=math.erfc(abs(z) / math.sqrt(2.0)), degenerate=False)


def deviance_and_chi2(fit: GlmFit, y: Response) -> tuple[float, float]:
    """Recompute deviance and the Pearson chi-square statistic from a fit.

    Fitted means on the boundary of the valid range are clamped first (the
    fit's ``boundary`` flag records whether that happened during fitting).
    """
    fam = y.family
    m = fam.clamp_mean(fit.fitted_means)
    w = y.obs_weights
    dev = float(np.sum(w * fam.unit_deviance(y.y, m)))
    chi2 = float(np.sum(w * (y.y - m) ** 2 / fam.variance(m)))
    return dev, chi2
