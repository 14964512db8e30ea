"""Group-comparison statistics for batch session metrics.

One-way and balanced two-way fixed-effects ANOVA, Welch and paired t tests,
Cohen's d and Bonferroni adjustment. Sums of squares are computed here;
p-values come from the F/t survival functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as _sps


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class GroupComparison:
    kind: str
    statistic: float
    df: tuple[float, ...]
    p: float
    effect_size: float | None = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "statistic": self.statistic,
               "df": list(self.df), "p": self.p}
        if self.effect_size is not None:
            out["effect_size"] = self.effect_size
        return out


def _as_groups(groups) -> list[np.ndarray]:
    return [np.asarray(g, dtype=np.float64) for g in groups]


def one_way_anova(groups) -> GroupComparison:
    """Fixed-effects one-way ANOVA: F = MS_between / MS_within."""
    gs = _as_groups(groups)
    if len(gs) < 2:
        raise ValueError("need at least 2 groups")
    if any(len(g) < 2 for g in gs):
        raise ValueError("each group needs at least 2 values")
    n_total = sum(len(g) for g in gs)
    grand = float(np.concatenate(gs).mean())
    ss_between = sum(len(g) * (g.mean() - grand) ** 2 for g in gs)
    ss_within = sum(float(((g - g.mean()) ** 2).sum()) for g in gs)
    df1 = len(gs) - 1
    df2 = n_total - len(gs)
    if ss_within == 0.0:
        if ss_between == 0.0:
            raise DegenerateDataError("zero variance within and between groups")
        raise DegenerateDataError("zero within-group variance")
    f = (ss_between / df1) / (ss_within / df2)
    p = float(_sps.f.sf(f, df1, df2))
    return GroupComparison("anova1", float(f), (float(df1), float(df2)), p)


def two_way_anova(values, factor_a, factor_b) -> dict[str, GroupComparison]:
    """Balanced two-way fixed-effects ANOVA with interaction.

    Returns comparisons keyed "a", "b" and "interaction". The design must be
    balanced with at least 2 replicates per cell.
    """
    y = np.asarray(values, dtype=np.float64)
    fa = np.asarray(factor_a)
    fb = np.asarray(factor_b)
    if not (len(y) == len(fa) == len(fb)):
        raise ValueError("values and factors must have equal length")
    a_levels = sorted(set(fa.tolist()))
    b_levels = sorted(set(fb.tolist()))
    cells = {}
    for ai in a_levels:
        for bi in b_levels:
            cells[(ai, bi)] = y[(fa == ai) & (fb == bi)]
    counts = {k: len(v) for k, v in cells.items()}
    n = next(iter(counts.values()))
    if len(set(counts.values())) != 1:
        raise DegenerateDataError(f"unbalanced design: cell counts {counts}")
    if n < 2:
        raise DegenerateDataError("need >= 2 replicates per cell for an error term")

    a, b = len(a_levels), len(b_levels)
    grand = y.mean()
    ss_total = float(((y - grand) ** 2).sum())
    ss_a = sum(b * n * (y[fa == ai].mean() - grand) ** 2 for ai in a_levels)
    ss_b = sum(a * n * (y[fb == bi].mean() - grand) ** 2 for bi in b_levels)
    ss_cells = sum(n * (v.mean() - grand) ** 2 for v in cells.values())
    ss_ab = ss_cells - ss_a - ss_b
    ss_err = ss_total - ss_cells
    df_a, df_b = a - 1, b - 1
    df_ab = df_a * df_b
    df_err = a * b * (n - 1)
    if ss_err == 0.0:
        raise DegenerateDataError("zero residual variance")
    ms_err = ss_err / df_err

    def comp(kind, ss, df):
        f = (ss / df) / ms_err
        return GroupComparison(kind, float(f), (float(df), float(df_err)),
                               float(_sps.f.sf(f, df, df_err)))

    return {
        "a": comp("anova2_a", ss_a, df_a),
        "b": comp("anova2_b", ss_b, df_b),
        "interaction": comp("anova2_interaction", ss_ab, df_ab),
    }


def welch_t(a, b) -> GroupComparison:
    """Welch's unequal-variance t test with Welch-Satterthwaite df."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if len(x) < 2 or len(y) < 2:
        raise ValueError("need at least 2 values per sample")
    vx = x.var(ddof=1)
    vy = y.var(ddof=1)
    sx = vx / len(x)
    sy = vy / len(y)
    if sx + sy == 0.0:
        raise DegenerateDataError("zero variance in both samples")
    t = (x.mean() - y.mean()) / np.sqrt(sx + sy)
    df = (sx + sy) ** 2 / (sx ** 2 / (len(x) - 1) + sy ** 2 / (len(y) - 1))
    p = float(2.0 * _sps.t.sf(abs(t), df))
    return GroupComparison("welch_t", float(t), (float(df),), p,
                           effect_size=cohens_d(x, y))


def paired_t(a, b) -> GroupComparison:
    """Paired t test on element-wise differences."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("paired samples must have equal length")
    if len(x) < 2:
        raise ValueError("need at least 2 pairs")
    d = x - y
    sd = d.std(ddof=1)
    df = len(d) - 1
    if sd == 0.0:
        if d.mean() == 0.0:
            return GroupComparison("paired_t", 0.0, (float(df),), 1.0)
        raise DegenerateDataError("identical nonzero differences")
    t = d.mean() / (sd / np.sqrt(len(d)))
    p = float(2.0 * _sps.t.sf(abs(t), df))
    return GroupComparison("paired_t", float(t), (float(df),), p)


def cohens_d(a, b) -> float:
    """(mean(a) - mean(b)) / pooled sample sd."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if len(x) < 2 or len(y) < 2:
        raise ValueError("need at least 2 values per sample")
    pooled = np.sqrt(((len(x) - 1) * x.var(ddof=1) + (len(y) - 1) * y.var(ddof=1))
                     / (len(x) + len(y) - 2))
    if pooled == 0.0:
        if x.mean() == y.mean():
            return 0.0
        raise DegenerateDataError("zero pooled standard deviation")
    return float((x.mean() - y.mean()) / pooled)


def bonferroni(p_values, m: int | None = None) -> list[float]:
    """p' = min(1, m * p); m defaults to the number of comparisons."""
    ps = list(p_values)
    if any(p < 0.0 or p > 1.0 for p in ps):
        raise ValueError("p-values must lie in [0, 1]")
    if m is None:
        m = len(ps)
    if m < 1:
        raise ValueError("m must be >= 1")
    return [min(1.0, m * p) for p in ps]
