"""Bootstrap significance machinery: (Y,T) and (Y,X) resampling schemes,
percentile/basic/normal/BCa confidence intervals, per-component-count
significance flags and the CV-vote-weighted stability index.

Every resample slot draws from its own child RNG stream, so results are
bit-identical for a fixed (scheme, seed, B) regardless of scheduling.
Resamples whose refit fails (separation, singular systems, broken column
invariants) are skipped and redrawn from the same stream, up to ten
attempts per slot.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .data_model import MaskedMatrix, Response, validate_columns
from .errors import BootstrapInstabilityError, ConfigError, DataError, NumericalError
from .glm_core import fit_glm_arrays
from .pls_gaussian import fit_pls
from .pls_glr import fit_plsglr

CI_TYPES = ("percentile", "basic", "normal", "bca")
MAX_ATTEMPTS_PER_SLOT = 10


class SmallResampleWarning(UserWarning):
    """Quantile-based intervals are coarse below ~1000 resamples."""


@dataclass
class CiResult:
    intervals: np.ndarray  # (p, 2), lower <= upper
    degenerate: np.ndarray  # all resampled values identical
    clamped: np.ndarray  # BCa z0 clamped away from +-inf


@dataclass
class BootReport:
    """Resampled coefficients plus the CI table and significance flags."""

    scheme: str
    B: int
    beta_star: np.ndarray  # (B, p) on the original predictor scale
    skipped: int
    ci: dict[str, np.ndarray]  # type -> (p, 2)
    significant: np.ndarray  # bool per predictor, from ci_type
    ci_type: str
    alpha: float
    col_names: tuple[str, ...]
    beta_hat: np.ndarray
    jackknife_accel: np.ndarray | None = None

    def to_json_text(self) -> str:
        payload = {
            "scheme": self.scheme,
            "B": self.B,
            "alpha": self.alpha,
            "ci_type": self.ci_type,
            "skipped": self.skipped,
            "col_names": list(self.col_names),
            "beta_hat": self.beta_hat.tolist(),
            "ci": {k: v.tolist() for k, v in self.ci.items()},
            "significant": [bool(s) for s in self.significant],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def ci_csv_text(self) -> str:
        intervals = self.ci[self.ci_type]
        lines = ["predictor,estimate,lower,upper,significant"]
        for j, name in enumerate(self.col_names):
            lines.append(
                f'"{name}",{self.beta_hat[j]:.6g},{intervals[j, 0]:.6g},'
                f"{intervals[j, 1]:.6g},{int(self.significant[j])}"
            )
        return "\n".join(lines) + "\n"

    def beta_star_csv_text(self) -> str:
        lines = [",".join(f'"{c}"' for c in self.col_names)]
        for row in self.beta_star:
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def _slopes_from_components(fit, coef: np.ndarray) -> np.ndarray:
    """Map refit component coefficients to raw predictor-scale slopes."""
    return (fit.W_star @ coef[1:]) / fit.scaling.col_sds


def refit_yt(fit, y: Response, idx: np.ndarray) -> np.ndarray:
    """Refit the final GLM on resampled (response, score) rows.

    Components and W* stay frozen at their full-data values. Raises
    NumericalError when the refit does not converge cleanly.
    """
    g = fit_glm_arrays(fit.T[idx], y.y[idx], y.family, y.obs_weights[idx])
    if not g.converged or g.separated:
        raise NumericalError("resampled final GLM did not converge")
    return _slopes_from_components(fit, g.coef)


def _engine_for(family_name: str):
    if family_name == "gaussian":
        return lambda X, y, H: fit_pls(X, y, H)
    return lambda X, y, H: fit_plsglr(X, y, H)


def refit_yx(X: MaskedMatrix, y: Response, H: int, idx: np.ndarray) -> np.ndarray:
    """Refit the whole pipeline (scaling, components, final GLM) on
    resampled raw rows and return raw-scale slopes."""
    Xb = X.take_rows(idx)
    yb = y.take(idx)
    validate_columns(Xb)
    fit = _engine_for(y.family.name)(Xb, yb, H)
    final = getattr(fit, "final_glm", None)
    if final is not None and (not final.converged or final.separated):
        raise NumericalError("resampled final GLM did not converge")
    return fit.beta_raw[1:]


def _run_scheme(refit_one, n: int, p: int, B: int, seed: int):
    if B < 1:
        raise ConfigError("B must be at least 1")
    beta_star = np.empty((B, p))
    skipped = 0
    children = np.random.SeedSequence(seed).spawn(B)
    for b in range(B):
        rng = np.random.default_rng(children[b])
        for _ in range(MAX_ATTEMPTS_PER_SLOT):
            idx = rng.integers(0, n, n)
            try:
                beta_star[b] = refit_one(idx)
                break
            except (DataError, NumericalError):
                skipped += 1
        else:
            raise BootstrapInstabilityError(
                f"bootstrap instability: slot {b} failed {MAX_ATTEMPTS_PER_SLOT} redraws"
            )
    return beta_star, skipped


def boot_yt(fit, y: Response, B: int, seed: int, return_skipped: bool = False):
    """(Y,T) bootstrap: resample rows of (y, T), refit only the final GLM."""
    beta_star, skipped = _run_scheme(
        lambda idx: refit_yt(fit, y, idx), n=y.n, p=fit.W.shape[0], B=B, seed=seed
    )
    return (beta_star, skipped) if return_skipped else beta_star


def boot_yx(
    X: MaskedMatrix, y: Response, H: int, B: int, seed: int, return_skipped: bool = False
):
    """(Y,X) bootstrap: resample raw observation rows, refit everything."""
    beta_star, skipped = _run_scheme(
        lambda idx: refit_yx(X, y, H, idx), n=y.n, p=X.p, B=B, seed=seed
    )
    return (beta_star, skipped) if return_skipped else beta_star


def yt_jackknife(fit, y: Response) -> np.ndarray:
    """Leave-one-out refits of the final GLM on components (T frozen)."""
    n = y.n
    out = np.empty((n, fit.W.shape[0]))
    all_idx = np.arange(n)
    for i in range(n):
        idx = np.delete(all_idx, i)
        g = fit_glm_arrays(fit.T[idx], y.y[idx], y.family, y.obs_weights[idx])
        out[i] = _slopes_from_components(fit, g.coef)
    return out


def yx_jackknife(X: MaskedMatrix, y: Response, H: int) -> np.ndarray:
    """Leave-one-out refits of the full pipeline. Expensive; used only when
    BCa intervals are requested for the (Y,X) scheme."""
    n = y.n
    out = np.empty((n, X.p))
    all_idx = np.arange(n)
    for i in range(n):
        idx = np.delete(all_idx, i)
        out[i] = refit_yx(X, y, H, idx)
    return out


def _acceleration(jack: np.ndarray) -> np.ndarray:
    """Jackknife acceleration a = sum d^3 / (6 (sum d^2)^1.5), d = mean - theta_i."""
    d = jack.mean(axis=0) - jack
    num = np.sum(d**3, axis=0)
    den = 6.0 * np.sum(d**2, axis=0) ** 1.5
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, num / safe, 0.0)


def ci(
    beta_star: np.ndarray,
    beta_hat: np.ndarray,
    alpha: float = 0.05,
    type: str = "percentile",
    jackknife_fn=None,
) -> CiResult:
    """Bootstrap confidence intervals of one of four types.

    Quantiles use linear (type-7) interpolation throughout so golden values
    are stable. BCa needs ``jackknife_fn``: either an (n, p) array of
    leave-one-out coefficient vectors or a callable producing one.
    """
    beta_star = np.asarray(beta_star, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)
    B, p = beta_star.shape
    if type not in CI_TYPES:
        raise ConfigError(f"unknown CI type {type!r}")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if type != "normal":
        if B < 100:
            raise ConfigError(f"B={B} is too small for quantile-based intervals (need >= 100)")
        if B < 1000:
            warnings.warn(
                f"B={B} resamples give coarse quantile estimates; 1000 or more recommended",
                SmallResampleWarning,
                stacklevel=2,
            )

    degenerate = np.ptp(beta_star, axis=0) == 0.0
    clamped = np.zeros(p, dtype=bool)
    lo = np.empty(p)
    hi = np.empty(p)

    if type == "percentile":
        q = np.quantile(beta_star, [alpha / 2, 1 - alpha / 2], axis=0)
        lo, hi = q[0], q[1]
    elif type == "basic":
        q = np.quantile(beta_star, [alpha / 2, 1 - alpha / 2], axis=0)
        lo = 2 * beta_hat - q[1]
        hi = 2 * beta_hat - q[0]
    elif type == "normal":
        bias = beta_star.mean(axis=0) - beta_hat
        sd = beta_star.std(axis=0, ddof=1)
        z = float(norm.ppf(1 - alpha / 2))
        center = beta_hat - bias
        lo = center - z * sd
        hi = center + z * sd
    else:  # bca
        if jackknife_fn is None:
            raise ConfigError("BCa intervals require jackknife leave-one-out coefficients")
        jack = jackknife_fn() if callable(jackknife_fn) else np.asarray(jackknife_fn, dtype=float)
        if jack.ndim != 2 or jack.shape[1] != p:
            raise ConfigError("jackknife coefficients must be an (n, p) array")
        accel = _acceleration(jack)
        z_lo = float(norm.ppf(alpha / 2))
        z_hi = float(norm.ppf(1 - alpha / 2))
        for j in range(p):
            if degenerate[j]:
                lo[j] = hi[j] = beta_star[0, j]
                continue
            count = int(np.sum(beta_star[:, j] < beta_hat[j]))
            if count == 0 or count == B:
                z0 = float(norm.ppf((count + 0.5) / (B + 1)))
                clamped[j] = True
            else:
                z0 = float(norm.ppf(count / B))
            a = float(accel[j])
            adj = []
            for zq in (z_lo, z_hi):
                denom = 1.0 - a * (z0 + zq)
                adj.append(float(norm.cdf(z0 + (z0 + zq) / denom)))
            a1, a2 = np.clip(sorted(adj), 1e-12, 1 - 1e-12)
            lo[j] = float(np.quantile(beta_star[:, j], a1))
            hi[j] = float(np.quantile(beta_star[:, j], a2))
        return CiResult(
            intervals=np.column_stack([lo, hi]), degenerate=degenerate, clamped=clamped
        )

    lo2 = np.minimum(lo, hi)
    hi2 = np.maximum(lo, hi)
    return CiResult(intervals=np.column_stack([lo2, hi2]), degenerate=degenerate, clamped=clamped)


def significant_flags(intervals: np.ndarray) -> np.ndarray:
    """True where the interval excludes zero (both endpoints same sign)."""
    return (intervals[:, 0] > 0) | (intervals[:, 1] < 0)


def bootstrap_report(
    X: MaskedMatrix,
    y: Response,
    fit,
    scheme: str = "yt",
    B: int = 1000,
    seed: int = 0,
    alpha: float = 0.05,
    ci_type: str = "bca",
    extra_ci_types: tuple = (),
) -> BootReport:
    """Run one bootstrap scheme and assemble the CI table and flags.

    ``ci_type`` drives the significance flags; any additional requested
    types are computed from the same resamples.
    """
    if scheme not in ("yt", "yx"):
        raise ConfigError(f"unknown bootstrap scheme {scheme!r}")
    beta_hat = fit.beta_raw[1:]
    if scheme == "yt":
        beta_star, skipped = boot_yt(fit, y, B, seed, return_skipped=True)
    else:
        beta_star, skipped = boot_yx(X, y, fit.H, B, seed, return_skipped=True)

    wanted = [ci_type] + [t for t in extra_ci_types if t != ci_type]
    jack = None
    accel = None
    if "bca" in wanted:
        jack = yt_jackknife(fit, y) if scheme == "yt" else yx_jackknife(X, y, fit.H)
        accel = _acceleration(jack)
    tables = {}
    for t in wanted:
        res = ci(beta_star, beta_hat, alpha=alpha, type=t, jackknife_fn=jack)
        tables[t] = res.intervals
    return BootReport(
        scheme=scheme,
        B=B,
        beta_star=beta_star,
        skipped=skipped,
        ci=tables,
        significant=significant_flags(tables[ci_type]),
        ci_type=ci_type,
        alpha=alpha,
        col_names=fit.col_names,
        beta_hat=np.asarray(beta_hat, dtype=float),
        jackknife_accel=accel,
    )


@dataclass
class StabilityTable:
    """Significance flags per component count plus the weighted index.

    ``significant[H]`` is None for component counts that received no votes
    and were not bootstrapped; pi_e weights each bootstrapped H by its vote
    frequency.
    """

    hmax: int
    significant: dict[int, np.ndarray | None]
    pi_e: np.ndarray
    vote_freq: dict[int, float]
    col_names: tuple[str, ...]
    scheme: str
    ci_type: str
    B: int
    alpha: float

    def to_csv_text(self) -> str:
        header = "predictor," + ",".join(f"H{h}" for h in range(1, self.hmax + 1)) + ",pi_e"
        lines = [header]
        for j, name in enumerate(self.col_names):
            cells = []
            for h in range(1, self.hmax + 1):
                flags = self.significant.get(h)
                cells.append("" if flags is None else str(int(flags[j])))
            lines.append(f'"{name}",' + ",".join(cells) + f",{self.pi_e[j]:.6g}")
        return "\n".join(lines) + "\n"

    def to_json_text(self) -> str:
        payload = {
            "hmax": self.hmax,
            "scheme": self.scheme,
            "ci_type": self.ci_type,
            "B": self.B,
            "alpha": self.alpha,
            "vote_freq": {str(k): v for k, v in self.vote_freq.items()},
            "col_names": list(self.col_names),
            "significant": {
                str(h): (None if v is None else [bool(x) for x in v])
                for h, v in self.significant.items()
            },
            "pi_e": self.pi_e.tolist(),
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def pie_index(
    vote_freq: dict[int, float], significant: dict[int, np.ndarray | None], p: int
) -> np.ndarray:
    """Vote-weighted proportion of component counts at which each predictor
    is significant. Votes for H=0 (intercept-only) contribute zero."""
    pi = np.zeros(p)
    for h, q in vote_freq.items():
        if h == 0 or q == 0.0:
            continue
        flags = significant.get(h)
        if flags is None:
            raise NumericalError(f"no significance flags for H={h} with vote weight {q}")
        pi += q * flags.astype(float)
    return pi


def stability_and_pie(
    X: MaskedMatrix,
    y: Response,
    hmax: int,
    votes,
    B: int = 1000,
    seed: int = 0,
    scheme: str = "yt",
    ci_type: str = "bca",
    alpha: float = 0.05,
    bootstrap_all: bool = False,
) -> StabilityTable:
    """Bootstrap each voted component count and weight the significance
    flags by the vote distribution.

    ``bootstrap_all=True`` also bootstraps counts with zero votes so a full
    significance grid can be rendered; those rows do not affect pi_e.
    """
    engine = _engine_for(y.family.name)
    children = np.random.SeedSequence(seed).spawn(hmax)
    significant: dict[int, np.ndarray | None] = {}
    for h in range(1, hmax + 1):
        q = votes.freq.get(h, 0.0)
        if q == 0.0 and not bootstrap_all:
            significant[h] = None
            continue
        try:
            fit_h = engine(X, y, h)
            report = bootstrap_report(
                X,
                y,
                fit_h,
                scheme=scheme,
                B=B,
                seed=_child_seed(children[h - 1]),
                alpha=alpha,
                ci_type=ci_type,
            )
        except (DataError, NumericalError) as err:
            if q > 0.0:
                raise NumericalError(f"stability bootstrap failed at H={h}: {err}") from err
            significant[h] = None
            continue
        significant[h] = report.significant
    pi_e = pie_index(votes.freq, significant, X.p)
    return StabilityTable(
        hmax=hmax,
        significant=significant,
        pi_e=pi_e,
        vote_freq=dict(votes.freq),
        col_names=X.col_names,
        scheme=scheme,
        ci_type=ci_type,
        B=B,
        alpha=alpha,
    )


def _child_seed(child: np.random.SeedSequence) -> int:
    # stable scalar seed derived from a child sequence
    return int(child.generate_state(1, dtype=np.uint64)[0])
