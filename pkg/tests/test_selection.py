import csv
import io
import json

import numpy as np
import numpy.testing as npt
import pytest

from plscore import (
    BINOMIAL,
    GAUSSIAN,
    ConfigError,
    CvRecords,
    Response,
    build_criteria_table,
    cv_criteria,
    fit_glm,
    fold_predictions,
    make_folds,
    select_components,
    simulate,
)
from conftest import as_masked


def fixed_records(**overrides):
    """Hand-filled binomial records exercising every selection rule.

    The per-H values are frozen constants; only their ordering matters to
    the rules under test.
    """
    base = dict(
        family="binomial",
        k=8,
        hmax=7,
        n=104,
        aic=np.array([145.83, 119.06, 105.96, 100.28, 96.2, 94.17, 93.0, 94.11]),
        bic=np.array([148.47, 124.35, 113.89, 110.86, 109.42, 110.04, 111.51, 115.26]),
        chi2_pearson=np.array([104.0, 101.71, 110.98, 102.52, 122.84, 148.72, 141.1, 149.1]),
        rss=None,
        miss_insample=np.array([49, 30, 20, 18, 20, 18, 16, 17]),
        sig_pred=np.array([1, 3, 0, 0, 0, 0, 0]),
        cv_miss=np.array([[58, 62, 56, 55, 56, 63, 64]], dtype=float),
        press=None,
        prechi2=np.array([[654.0, 992.0, 3731.0, 2.4e4, 3.0e5, 2.0e8, 1.3e12]]),
        q2=None,
        q2cum=None,
        q2chi2=np.array([[-5.29, -8.54, -34.87, -238.0, -2430.0, -1.41e6, -9.26e9]]),
        q2chi2cum=None,
        skipped_folds=0,
        total_folds=8,
    )
    base.update(overrides)
    return CvRecords(**base)


class TestMakeFolds:
    def test_equal_fold_sizes_104_8(self):
        plan = make_folds(104, 8, 100, seed=17)
        for r in range(100):
            sizes = np.bincount(plan.fold_assignments[r], minlength=8)
            npt.assert_array_equal(sizes, 13)

    def test_partition_property(self):
        plan = make_folds(23, 5, 7, seed=3)
        for r in range(plan.repeats):
            counts = np.bincount(plan.fold_assignments[r], minlength=5)
            assert counts.sum() == 23
            assert counts.max() - counts.min() <= 1

    def test_loo_is_deterministic_singletons(self):
        plan = make_folds(10, 10, repeats=5, seed=1)
        assert plan.repeats == 1
        npt.assert_array_equal(plan.fold_assignments[0], np.arange(10))

    def test_same_seed_same_plan(self):
        a = make_folds(40, 4, 6, seed=9)
        b = make_folds(40, 4, 6, seed=9)
        npt.assert_array_equal(a.fold_assignments, b.fold_assignments)
        c = make_folds(40, 4, 6, seed=10)
        assert not np.array_equal(a.fold_assignments, c.fold_assignments)

    def test_k_out_of_range(self):
        with pytest.raises(ConfigError, match="exceeds"):
            make_folds(5, 6, 1, seed=0)
        with pytest.raises(ConfigError, match="at least 2"):
            make_folds(5, 1, 1, seed=0)


class TestCvCriteria:
    def test_noiseless_gaussian_loo_q2(self, rng):
        n = 20
        x = rng.normal(size=(n, 1))
        y = 2.5 * x[:, 0] + 1e-6 * rng.normal(size=n)
        resp = Response(y=y, family=GAUSSIAN)
        plan = make_folds(n, n, 1, seed=4)
        _, rec = cv_criteria(as_masked(x), resp, 1, plan)
        assert rec.press[0, 0] < 1e-9
        assert rec.q2[0, 0] >= 0.99

    def test_q2chi2_anchored_to_intercept_chi2(self):
        X, y, _ = simulate(60, 4, "binomial", 0.1, seed=5)
        plan = make_folds(60, 4, 2, seed=6)
        _, rec = cv_criteria(X, y, 2, plan)
        g0 = fit_glm(np.empty((60, 0)), y)
        npt.assert_allclose(rec.chi2_pearson[0], g0.pearson_chi2, atol=1e-10)
        npt.assert_allclose(
            rec.q2chi2[:, 0], 1.0 - rec.prechi2[:, 0] / g0.pearson_chi2, atol=1e-12
        )

    def test_intercept_chi2_equals_n_binomial(self):
        X, y, _ = simulate(37, 3, "binomial", 0.0, seed=7)
        plan = make_folds(37, 4, 1, seed=8)
        _, rec = cv_criteria(X, y, 2, plan)
        npt.assert_allclose(rec.chi2_pearson[0], 37.0, atol=1e-8)

    def test_q2cum_identity_gaussian(self):
        X, y, _ = simulate(30, 4, "gaussian", 0.1, seed=9)
        plan = make_folds(30, 5, 3, seed=10)
        _, rec = cv_criteria(X, y, 3, plan)
        for r in range(3):
            prod = np.cumprod(rec.press[r] / rec.rss[:3])
            npt.assert_allclose(1.0 - rec.q2cum[r], prod, atol=1e-10)

    def test_q2chi2cum_identity_binomial(self):
        X, y, _ = simulate(50, 5, "binomial", 0.15, seed=11)
        plan = make_folds(50, 5, 3, seed=12)
        _, rec = cv_criteria(X, y, 3, plan)
        for r in range(3):
            prod = np.cumprod(rec.prechi2[r] / rec.chi2_pearson[:3])
            npt.assert_allclose(1.0 - rec.q2chi2cum[r], prod, atol=1e-10)

    def test_no_leakage_bit_exact(self):
        # fitting rows never include the held-out rows, so poisoning rows
        # outside the training set must leave predictions bit-identical
        for family in ("gaussian", "binomial"):
            X, y, _ = simulate(40, 4, family, 0.1, seed=13)
            train = np.arange(0, 24)
            probe = np.arange(24, 32)
            poison_rows = np.arange(32, 40)
            preds_clean = fold_predictions(X, y, train, probe, 2)
            vals = X.values.copy()
            vals[poison_rows, :] = 1e9
            X_poisoned = as_masked(vals, X.mask)
            preds_poisoned = fold_predictions(X_poisoned, y, train, probe, 2)
            assert np.array_equal(preds_clean, preds_poisoned)

    def test_table_reports_first_repeat(self):
        X, y, _ = simulate(40, 4, "binomial", 0.0, seed=14)
        plan = make_folds(40, 4, 3, seed=15)
        table, rec = cv_criteria(X, y, 2, plan)
        row = table.rows["Miss Classed (4-CV)"]
        assert row[0] is None
        npt.assert_array_equal(row[1:], rec.cv_miss[0])

    def test_table_structure_binomial(self):
        X, y, _ = simulate(40, 4, "binomial", 0.0, seed=16)
        plan = make_folds(40, 4, 2, seed=17)
        table, _ = cv_criteria(X, y, 3, plan)
        labels = list(table.rows)
        assert labels[:4] == ["AIC", "BIC", "Miss Classed", "Significant pred."]
        assert labels[-1] == "χ² Pearson"
        assert all(len(v) == 4 for v in table.rows.values())
        # CSV parses back with one column per component count
        parsed = list(csv.reader(io.StringIO(table.to_csv_text())))
        assert parsed[0] == ["criterion", "0", "1", "2", "3"]
        assert len(parsed) == len(labels) + 1
        json.loads(table.to_json_text())

    def test_table_structure_gaussian(self):
        X, y, _ = simulate(40, 4, "gaussian", 0.0, seed=18)
        plan = make_folds(40, 4, 2, seed=19)
        table, _ = cv_criteria(X, y, 3, plan)
        assert "PRESS (4-CV)" in table.rows
        assert "Q² (4-CV)" in table.rows
        assert "Miss Classed" not in table.rows

    def test_hmax_beyond_fold_cap_rejected(self):
        X, y, _ = simulate(12, 10, "gaussian", 0.0, seed=20)
        plan = make_folds(12, 3, 1, seed=21)
        with pytest.raises(ConfigError, match="cap"):
            cv_criteria(X, y, 9, plan)

    def test_aic_bic_match_final_glm_deviance(self):
        X, y, _ = simulate(50, 4, "binomial", 0.0, seed=22)
        plan = make_folds(50, 5, 1, seed=23)
        _, rec = cv_criteria(X, y, 2, plan)
        g0 = fit_glm(np.empty((50, 0)), y)
        npt.assert_allclose(rec.aic[0], g0.deviance + 2, atol=1e-10)
        npt.assert_allclose(rec.bic[0], g0.deviance + np.log(50), atol=1e-10)


class TestSelectComponents:
    def test_unanimous_vote(self):
        rec = fixed_records(cv_miss=np.array([[58, 62, 56, 55, 56, 63, 64]] * 5, dtype=float))
        h, votes = select_components(rec, "cv_missclassed")
        assert h == 4
        assert votes.freq == {4: 1.0}

    def test_argmin_tie_goes_to_smaller_h(self):
        rec = fixed_records(cv_miss=np.array([[60, 55, 55, 58, 59, 60, 61]], dtype=float))
        h, _ = select_components(rec, "cv_missclassed")
        assert h == 2

    def test_reference_values_per_rule(self):
        rec = fixed_records()
        assert select_components(rec, "aic")[0] == 6
        assert select_components(rec, "bic")[0] == 4
        assert select_components(rec, "sig_pred")[0] == 2
        assert select_components(rec, "cv_missclassed")[0] == 4

    def test_aic_shift_invariance(self):
        rec = fixed_records()
        shifted = fixed_records(aic=rec.aic + 1234.5)
        assert select_components(rec, "aic")[0] == select_components(shifted, "aic")[0]

    def test_vote_distribution_normalized_and_modal(self):
        rec = fixed_records(
            cv_miss=np.array(
                [[58, 62, 56, 55, 56, 63, 64],
                 [55, 62, 56, 58, 56, 63, 64],
                 [58, 62, 56, 55, 56, 63, 64]],
                dtype=float,
            )
        )
        h, votes = select_components(rec, "cv_missclassed")
        assert abs(sum(votes.freq.values()) - 1.0) < 1e-12
        assert h == 4
        assert votes.freq[4] == max(votes.freq.values())

    def test_q2_threshold_rule_gaussian(self):
        # strong signal keeps early components above the cutoff
        X, y, _ = simulate(60, 3, "gaussian", 0.0, seed=24, noise_sd=0.05)
        plan = make_folds(60, 5, 4, seed=25)
        _, rec = cv_criteria(X, y, 2, plan)
        h, votes = select_components(rec, "q2_threshold")
        assert h >= 1
        assert abs(sum(votes.freq.values()) - 1.0) < 1e-12

    def test_q2chi2_threshold_zero_when_never_cleared(self):
        rec = fixed_records()
        h, votes = select_components(rec, "q2chi2_threshold")
        assert h == 0  # all chi-square ratios are negative in the fixture

    def test_unknown_rule(self):
        with pytest.raises(ConfigError, match="unknown selection rule"):
            select_components(fixed_records(), "magic")

    def test_rule_family_mismatch(self):
        X, y, _ = simulate(30, 3, "gaussian", 0.0, seed=26)
        plan = make_folds(30, 3, 1, seed=27)
        _, rec = cv_criteria(X, y, 2, plan)
        with pytest.raises(ConfigError, match="binomial"):
            select_components(rec, "cv_missclassed")
