from __future__ import annotations

import numpy as np
import pytest

from ssrl_engine.stats import (
    DegenerateDataError,
    bonferroni,
    cohens_d,
    one_way_anova,
    paired_t,
    two_way_anova,
    welch_t,
)

# Expected values below were computed offline with 40-digit arithmetic
# (mpmath: hand-rolled sums of squares, regularized incomplete beta for the
# F/t survival functions) and frozen before the implementation was written.

ANOVA1_GROUPS = [[1, 2, 3], [2, 3, 4], [5, 6, 7]]
ANOVA1_F = 13.0
ANOVA1_P = 0.006591796875

ANOVA2_VALUES = [3.1, 2.9, 4.2, 4.4, 5.0, 5.3, 3.8, 4.0, 5.5, 5.1, 7.2, 6.8]
ANOVA2_FA = ["lo"] * 6 + ["hi"] * 6
ANOVA2_FB = ["x", "x", "y", "y", "z", "z"] * 2
ANOVA2_EXPECTED = {
    "a": (106.13207547169795, 4.8868285220506877e-5),
    "b": (156.05660377358471, 6.7097856904086556e-6),
    "interaction": (6.1698113207547135, 0.03501729260632887),
}

WELCH_A = [4.1, 5.2, 6.3, 5.8, 4.9]
WELCH_B = [3.0, 3.8, 4.1, 3.3]
WELCH_T = 3.7912729543587222
WELCH_DF = 6.5511242342255079
WELCH_P = 0.0076859386084819623

PAIRED_X = [10.2, 9.8, 11.4, 10.9, 9.5, 10.1]
PAIRED_Y = [9.6, 9.9, 10.2, 10.4, 9.0, 9.3]
PAIRED_T = 3.3523919982740292
PAIRED_P = 0.020275737225488179

COHENS_D_AB = 2.3904647263743932

REL = 1e-9


def rel_ok(actual, expected):
    return actual == pytest.approx(expected, rel=REL)


class TestOneWayAnova:
    def test_identical_groups_give_zero_f(self):
        out = one_way_anova([[1, 2, 3], [1, 2, 3]])
        assert out.statistic == 0.0
        assert out.p == pytest.approx(1.0)

    def test_oracle_fixture(self):
        out = one_way_anova(ANOVA1_GROUPS)
        assert rel_ok(out.statistic, ANOVA1_F)
        assert out.df == (2.0, 6.0)
        assert rel_ok(out.p, ANOVA1_P)

    def test_two_groups_f_equals_pooled_t_squared(self):
        rng = np.random.default_rng(31)
        for _ in range(25):
            a = rng.normal(0, 1, size=rng.integers(3, 12))
            b = rng.normal(0.5, 1, size=rng.integers(3, 12))
            f = one_way_anova([a, b]).statistic
            # pooled-variance t
            na, nb = len(a), len(b)
            sp2 = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)
            t = (a.mean() - b.mean()) / np.sqrt(sp2 * (1 / na + 1 / nb))
            assert f == pytest.approx(t * t, rel=REL)

    def test_zero_within_variance_rejected(self):
        with pytest.raises(DegenerateDataError):
            one_way_anova([[1, 1], [2, 2]])

    def test_single_group_rejected(self):
        with pytest.raises(ValueError):
            one_way_anova([[1, 2, 3]])


class TestTwoWayAnova:
    def test_oracle_fixture(self):
        out = two_way_anova(ANOVA2_VALUES, ANOVA2_FA, ANOVA2_FB)
        for key, (f, p) in ANOVA2_EXPECTED.items():
            assert rel_ok(out[key].statistic, f), key
            assert rel_ok(out[key].p, p), key
        assert out["a"].df == (1.0, 6.0)
        assert out["b"].df == (2.0, 6.0)
        assert out["interaction"].df == (2.0, 6.0)

    def test_additive_cell_means_have_zero_interaction(self):
        # cell mean = a_effect + b_effect, replicated with symmetric noise
        values, fa, fb = [], [], []
        a_eff = {"lo": 0.0, "hi": 2.0}
        b_eff = {"x": 0.0, "y": 1.0, "z": 3.0}
        for ai, av in a_eff.items():
            for bi, bv in b_eff.items():
                for delta in (-0.1, 0.1):
                    values.append(av + bv + delta)
                    fa.append(ai)
                    fb.append(bi)
        out = two_way_anova(values, fa, fb)
        assert out["interaction"].statistic == pytest.approx(0.0, abs=1e-20)

    def test_all_equal_values_rejected(self):
        values = [1.0] * 12
        with pytest.raises(DegenerateDataError):
            two_way_anova(values, ANOVA2_FA, ANOVA2_FB)

    def test_unbalanced_design_rejected(self):
        with pytest.raises(DegenerateDataError):
            two_way_anova(ANOVA2_VALUES[:-1], ANOVA2_FA[:-1], ANOVA2_FB[:-1])


class TestWelchT:
    def test_oracle_fixture(self):
        out = welch_t(WELCH_A, WELCH_B)
        assert rel_ok(out.statistic, WELCH_T)
        assert rel_ok(out.df[0], WELCH_DF)
        assert rel_ok(out.p, WELCH_P)

    def test_matches_pooled_t_on_equal_variance_equal_size(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            n = int(rng.integers(4, 15))
            a = rng.normal(0, 1, size=n)
            b = rng.normal(1, 1, size=n)
            # equal sizes: Welch statistic equals the pooled statistic
            w = welch_t(a, b).statistic
            sp2 = (a.var(ddof=1) + b.var(ddof=1)) / 2
            t = (a.mean() - b.mean()) / np.sqrt(sp2 * 2 / n)
            assert w == pytest.approx(t, rel=REL)

    def test_zero_variance_rejected(self):
        with pytest.raises(DegenerateDataError):
            welch_t([1.0, 1.0], [2.0, 2.0])


class TestPairedT:
    def test_identical_samples_give_zero(self):
        out = paired_t([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert out.statistic == 0.0
        assert out.p == 1.0

    def test_oracle_fixture(self):
        out = paired_t(PAIRED_X, PAIRED_Y)
        assert rel_ok(out.statistic, PAIRED_T)
        assert out.df == (5.0,)
        assert rel_ok(out.p, PAIRED_P)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            paired_t([1.0, 2.0], [1.0])


class TestCohensD:
    def test_identical_samples(self):
        assert cohens_d([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_unit_shift_in_pooled_sd_units(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        pooled = np.sqrt((a.var(ddof=1) + a.var(ddof=1)) / 2)
        b = a + pooled
        assert cohens_d(a, b) == pytest.approx(-1.0, rel=REL)

    def test_oracle_fixture(self):
        assert rel_ok(cohens_d(WELCH_A, WELCH_B), COHENS_D_AB)

    def test_zero_pooled_sd_rejected(self):
        with pytest.raises(DegenerateDataError):
            cohens_d([1.0, 1.0], [2.0, 2.0])


class TestBonferroni:
    def test_direct_multiplication(self):
        assert bonferroni([0.01], m=6) == [0.06]

    def test_cap_at_one(self):
        assert bonferroni([0.5], m=6) == [1.0]

    def test_m_one_is_identity(self):
        assert bonferroni([0.3, 0.7], m=1) == [0.3, 0.7]

    def test_default_m_is_count(self):
        assert bonferroni([0.01, 0.02]) == [0.02, 0.04]

    def test_invalid_p_rejected(self):
        with pytest.raises(ValueError):
            bonferroni([1.5], m=2)
