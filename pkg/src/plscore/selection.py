"""Component-count selection: leave-one-out and repeated k-fold
cross-validation, the per-H criteria table (AIC, BIC, misclassification,
PRESS/Q2, Pearson chi-square analogues) and the vote distribution over
repeats that feeds the stability index.

Fold fitting is a pure function of the training rows: standardization,
component extraction and the per-H final GLM never see a held-out row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data_model import MaskedMatrix, Response, validate_columns
from .errors import ConfigError, DataError, NumericalError
from .glm_core import fit_glm_arrays
from .pls_gaussian import fit_pls, fitted_values, scores_for
from .pls_glr import fit_plsglr

Q2_THRESHOLD = 0.0975  # 1 - 0.95^2, the usual retention cutoff

SELECTION_RULES = (
    "cv_missclassed",
    "q2_threshold",
    "q2chi2_threshold",
    "aic",
    "bic",
    "sig_pred",
)


@dataclass(frozen=True)
class CvPlan:
    """Fold assignments for every repeat; deterministic given the seed."""

    k: int
    repeats: int
    seed: int
    fold_assignments: np.ndarray  # (repeats, n) fold index per observation

    @property
    def n(self) -> int:
        return self.fold_assignments.shape[1]


def make_folds(n: int, k: int, repeats: int, seed: int) -> CvPlan:
    """Random equal-size partitions, one per repeat.

    Fold sizes differ by at most one. k = n selects the deterministic
    leave-one-out plan and forces repeats to 1. Each repeat draws from its
    own child RNG stream so the plan is independent of execution order.
    """
    if k > n:
        raise ConfigError(f"k={k} exceeds n={n}")
    if k < 2:
        raise ConfigError("need at least 2 folds")
    if repeats < 1:
        raise ConfigError("need at least 1 repeat")
    if k == n:
        assignments = np.arange(n, dtype=int)[None, :]
        return CvPlan(k=k, repeats=1, seed=seed, fold_assignments=assignments)

    sizes = [n // k + (1 if i < n % k else 0) for i in range(k)]
    children = np.random.SeedSequence(seed).spawn(repeats)
    assignments = np.empty((repeats, n), dtype=int)
    for r in range(repeats):
        perm = np.random.default_rng(children[r]).permutation(n)
        pos = 0
        for f, size in enumerate(sizes):
            assignments[r, perm[pos : pos + size]] = f
            pos += size
    assignments.setflags(write=False)
    return CvPlan(k=k, repeats=repeats, seed=seed, fold_assignments=assignments)


@dataclass
class CvRecords:
    """Everything cv_criteria measured, across all repeats.

    All-data quantities are indexed by H = 0..Hmax; per-repeat CV arrays
    have shape (repeats, Hmax) with column h-1 holding component count h.
    """

    family: str
    k: int
    hmax: int
    n: int
    aic: np.ndarray
    bic: np.ndarray
    chi2_pearson: np.ndarray
    rss: np.ndarray | None
    miss_insample: np.ndarray | None
    sig_pred: np.ndarray | None
    cv_miss: np.ndarray | None
    press: np.ndarray | None
    prechi2: np.ndarray | None
    q2: np.ndarray | None
    q2cum: np.ndarray | None
    q2chi2: np.ndarray | None
    q2chi2cum: np.ndarray | None
    skipped_folds: int
    total_folds: int
    fold_detail: list = field(default_factory=list)


@dataclass
class VoteDistribution:
    """How often each component count was selected across repeats."""

    counts: dict[int, int]
    freq: dict[int, float]
    n_repeats: int

    @classmethod
    def from_picks(cls, picks) -> "VoteDistribution":
        picks = list(int(h) for h in picks)
        counts: dict[int, int] = {}
        for h in picks:
            counts[h] = counts.get(h, 0) + 1
        total = len(picks)
        freq = {h: counts[h] / total for h in sorted(counts)}
        return cls(counts={h: counts[h] for h in sorted(counts)}, freq=freq, n_repeats=total)


@dataclass
class CriteriaTable:
    """Per-H criteria, one labelled row per criterion (None where a cell
    does not apply to the family or to H=0)."""

    family: str
    k: int
    hmax: int
    rows: dict[str, list]

    def to_csv_text(self) -> str:
        header = "criterion," + ",".join(str(h) for h in range(self.hmax + 1))
        lines = [header]
        for label, values in self.rows.items():
            cells = ["" if v is None else f"{v:.6g}" for v in values]
            lines.append('"' + label + '",' + ",".join(cells))
        return "\n".join(lines) + "\n"

    def to_json_text(self) -> str:
        payload = {
            "family": self.family,
            "k": self.k,
            "hmax": self.hmax,
            "rows": self.rows,
        }
        return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _alldata_stats(X: MaskedMatrix, y: Response, hmax: int):
    """In-sample quantities of the all-data fits with 0..hmax components."""
    n = X.n
    w = y.obs_weights
    fam = y.family
    aic = np.empty(hmax + 1)
    bic = np.empty(hmax + 1)
    chi2 = np.empty(hmax + 1)
    logn = math.log(n)
    if fam.name == "gaussian":
        fit = fit_pls(X, y, hmax)
        rss = np.empty(hmax + 1)
        for h in range(hmax + 1):
            resid = y.y - fitted_values(fit, h)
            rss[h] = float(np.sum(w * resid * resid))
            # h components + intercept + variance parameter
            aic[h] = n * math.log(rss[h] / n) + 2 * (h + 2)
            bic[h] = n * math.log(rss[h] / n) + logn * (h + 2)
        chi2[:] = rss
        return dict(fit=fit, aic=aic, bic=bic, chi2=chi2, rss=rss, miss=None, sig=None)

    fit = fit_plsglr(X, y, hmax)
    miss = np.empty(hmax + 1) if fam.name == "binomial" else None
    for h in range(hmax + 1):
        g = fit_glm_arrays(fit.T[:, :h], y.y, fam, w)
        aic[h] = g.deviance + 2 * (h + 1)
        bic[h] = g.deviance + logn * (h + 1)
        chi2[h] = g.pearson_chi2
        if miss is not None:
            miss[h] = int(np.sum((g.fitted_means >= 0.5).astype(float) != y.y))
    return dict(
        fit=fit, aic=aic, bic=bic, chi2=chi2, rss=None, miss=miss,
        sig=np.asarray(fit.sig_pred_count, dtype=float),
    )


def fold_predictions(
    X: MaskedMatrix, y: Response, train_idx: np.ndarray, test_idx: np.ndarray, hmax: int
) -> np.ndarray:
    """Response-scale predictions for the held-out rows at each component
    count 1..hmax, fitting on the training rows only.

    Raises DataError/NumericalError when the training slice cannot support
    the fit; callers treat that as a skipped fold.
    """
    Xtr = X.take_rows(train_idx)
    ytr = y.take(train_idx)
    validate_columns(Xtr)
    Xte = X.take_rows(test_idx)
    preds = np.empty((hmax, len(test_idx)))
    if y.family.name == "gaussian":
        fit = fit_pls(Xtr, ytr, hmax)
        T_te = scores_for(fit, Xte)
        for h in range(1, hmax + 1):
            eta = fit.mu + T_te[:, :h] @ fit.c[:h]
            preds[h - 1] = fit.scaling.y_mean + fit.scaling.y_sd * eta
    else:
        fit = fit_plsglr(Xtr, ytr, hmax)
        T_te = scores_for(fit, Xte)
        for h in range(1, hmax + 1):
            g = fit_glm_arrays(fit.T[:, :h], ytr.y, y.family, ytr.obs_weights)
            eta = g.coef[0] + T_te[:, :h] @ g.coef[1:]
            preds[h - 1] = y.family.inv_link(eta)
    return preds


def cv_criteria(
    X: MaskedMatrix, y: Response, hmax: int, plan: CvPlan
) -> tuple[CriteriaTable, CvRecords]:
    """Cross-validated criteria for component counts 1..hmax.

    The table reports the first repeat (plus the all-data in-sample rows);
    the returned records retain every repeat for the vote distribution.
    Folds whose training slice violates the column invariants, or whose fit
    degenerates, are skipped and counted; more than 20% skipped is an
    error.
    """
    if plan.n != X.n:
        raise DataError("plan was built for a different number of rows")
    fam = y.family
    fold_sizes = np.array(
        [np.sum(plan.fold_assignments[0] == f) for f in range(plan.k)]
    )
    min_train = X.n - int(fold_sizes.max())
    cap = min(min_train - 1, X.p)
    if hmax > cap:
        raise ConfigError(f"hmax={hmax} exceeds the per-fold cap {cap}")

    stats = _alldata_stats(X, y, hmax)
    repeats = plan.repeats
    gaussian = fam.name == "gaussian"
    binomial = fam.name == "binomial"
    press = np.zeros((repeats, hmax)) if gaussian else None
    prechi2 = np.zeros((repeats, hmax)) if not gaussian else None
    cv_miss = np.zeros((repeats, hmax)) if binomial else None
    skipped = 0
    fold_detail = []

    for r in range(repeats):
        detail_r = []
        for f in range(plan.k):
            test_idx = np.flatnonzero(plan.fold_assignments[r] == f)
            train_idx = np.flatnonzero(plan.fold_assignments[r] != f)
            try:
                preds = fold_predictions(X, y, train_idx, test_idx, hmax)
            except (DataError, NumericalError):
                skipped += 1
                detail_r.append({"fold": f, "skipped": True})
                continue
            y_te = y.y[test_idx]
            w_te = y.obs_weights[test_idx]
            entry = {"fold": f, "skipped": False, "n_test": int(len(test_idx))}
            for h in range(1, hmax + 1):
                m = preds[h - 1]
                if gaussian:
                    val = float(np.sum(w_te * (y_te - m) ** 2))
                    press[r, h - 1] += val
                    entry[f"press_{h}"] = val
                else:
                    mc = fam.clamp_mean(m)
                    val = float(np.sum(w_te * (y_te - mc) ** 2 / fam.variance(mc)))
                    prechi2[r, h - 1] += val
                    entry[f"prechi2_{h}"] = val
                if binomial:
                    miss = int(np.sum((m >= 0.5).astype(float) != y_te))
                    cv_miss[r, h - 1] += miss
                    entry[f"miss_{h}"] = miss
            detail_r.append(entry)
        fold_detail.append(detail_r)

    total_folds = repeats * plan.k
    if skipped > 0.2 * total_folds:
        raise DataError(
            f"{skipped} of {total_folds} CV folds skipped (> 20%); data too fragile for this plan"
        )

    q2 = q2cum = q2chi2 = q2chi2cum = None
    if gaussian:
        denom = stats["rss"][:hmax]  # RSS_{h-1}
        ratios = press / denom
        q2 = 1.0 - ratios
        q2cum = 1.0 - np.cumprod(ratios, axis=1)
    else:
        denom = stats["chi2"][:hmax]
        ratios = prechi2 / denom
        q2chi2 = 1.0 - ratios
        q2chi2cum = 1.0 - np.cumprod(ratios, axis=1)

    records = CvRecords(
        family=fam.name,
        k=plan.k,
        hmax=hmax,
        n=X.n,
        aic=stats["aic"],
        bic=stats["bic"],
        chi2_pearson=stats["chi2"],
        rss=stats["rss"],
        miss_insample=stats["miss"],
        sig_pred=stats["sig"],
        cv_miss=cv_miss,
        press=press,
        prechi2=prechi2,
        q2=q2,
        q2cum=q2cum,
        q2chi2=q2chi2,
        q2chi2cum=q2chi2cum,
        skipped_folds=skipped,
        total_folds=total_folds,
        fold_detail=fold_detail,
    )
    return build_criteria_table(records), records


def build_criteria_table(records: CvRecords) -> CriteriaTable:
    """Assemble the labelled per-H table from the first repeat."""
    hmax, k = records.hmax, records.k
    n_cells = hmax + 1

    def allh(arr):
        return [float(v) for v in arr]

    def cvrow(arr):
        return [None] + [float(v) for v in arr[0]]

    rows: dict[str, list] = {}
    rows["AIC"] = allh(records.aic)
    rows["BIC"] = allh(records.bic)
    if records.miss_insample is not None:
        rows["Miss Classed"] = [int(v) for v in records.miss_insample]
    if records.sig_pred is not None:
        rows["Significant pred."] = [None] + [int(v) for v in records.sig_pred]
    if records.cv_miss is not None:
        rows[f"Miss Classed ({k}-CV)"] = [None] + [int(v) for v in records.cv_miss[0]]
    if records.q2chi2 is not None:
        rows[f"Q²χ² ({k}-CV)"] = cvrow(records.q2chi2)
        rows[f"Q²χ²cum ({k}-CV)"] = cvrow(records.q2chi2cum)
        rows[f"PREχ² ({k}-CV)"] = cvrow(records.prechi2)
    if records.press is not None:
        rows[f"PRESS ({k}-CV)"] = cvrow(records.press)
        rows[f"Q² ({k}-CV)"] = cvrow(records.q2)
        rows[f"Q²cum ({k}-CV)"] = cvrow(records.q2cum)
    rows["χ² Pearson"] = allh(records.chi2_pearson)
    assert all(len(v) == n_cells for v in rows.values())
    return CriteriaTable(family=records.family, k=k, hmax=hmax, rows=rows)


def _pick_one(records: CvRecords, rule: str, r: int) -> int:
    hmax = records.hmax
    if rule == "cv_missclassed":
        if records.cv_miss is None:
            raise ConfigError("cv_missclassed rule requires a binomial response")
        return int(np.argmin(records.cv_miss[r])) + 1
    if rule == "q2_threshold":
        if records.q2 is None:
            raise ConfigError("q2_threshold rule requires a gaussian response")
        ok = records.q2[r] >= Q2_THRESHOLD
    elif rule == "q2chi2_threshold":
        if records.q2chi2 is None:
            raise ConfigError("q2chi2_threshold rule requires a GLM family")
        ok = records.q2chi2[r] >= Q2_THRESHOLD
    elif rule == "aic":
        return int(np.argmin(records.aic))
    elif rule == "bic":
        return int(np.argmin(records.bic))
    elif rule == "sig_pred":
        if records.sig_pred is None:
            raise ConfigError("sig_pred rule requires a GLM family")
        nz = np.flatnonzero(records.sig_pred >= 1)
        return int(nz[-1]) + 1 if nz.size else 0
    else:
        raise ConfigError(f"unknown selection rule {rule!r}")
    # threshold rules: largest H whose whole prefix clears the cutoff
    h = 0
    while h < hmax and ok[h]:
        h += 1
    return h


def select_components(records: CvRecords, rule: str) -> tuple[int, VoteDistribution]:
    """Apply a selection rule per repeat and tally the votes.

    Ties in argmin rules go to the smaller component count; the returned
    H_star is the modal vote (smallest on a tie).
    """
    repeats = 1 if rule in ("aic", "bic", "sig_pred") else _n_cv_repeats(records)
    if records.total_folds == 0 and rule not in ("aic", "bic", "sig_pred"):
        raise DataError("no CV records available")
    picks = [_pick_one(records, rule, r) for r in range(repeats)]
    if rule in ("aic", "bic", "sig_pred"):
        # all-data criteria vote identically across repeats
        picks = picks * max(_n_cv_repeats(records), 1)
    votes = VoteDistribution.from_picks(picks)
    best = max(votes.counts.values())
    h_star = min(h for h, cnt in votes.counts.items() if cnt == best)
    return h_star, votes


def _n_cv_repeats(records: CvRecords) -> int:
    for arr in (records.cv_miss, records.press, records.prechi2):
        if arr is not None:
            return arr.shape[0]
    return 1
