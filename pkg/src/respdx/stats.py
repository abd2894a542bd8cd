"""KS and t tests, plus KS-based feature ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DegenerateVarianceError


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    statistic: float
    p_value: float
    df: float | None
    n1: int
    n2: int


@dataclass(frozen=True)
class RankedFeature:
    name: str
    ks_statistic: float
    p_value: float
    rank: int
    selected: bool = False

    def to_json(self) -> dict:
        return {"name": self.name, "D": self.ks_statistic, "p": self.p_value,
                "rank": self.rank, "selected": self.selected}


@dataclass
class RankingReport:
    ranked: list[RankedFeature]
    warnings: list[dict] = field(default_factory=list)
    policy: dict = field(default_factory=dict)

    @property
    def selected(self) -> list[str]:
        return [r.name for r in self.ranked if r.selected]

    def to_json(self) -> dict:
        return {"features": [r.to_json() for r in self.ranked], "warnings": self.warnings,
                "policy": self.policy}


def _as_array(a, name):
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise ValueError(f"sample {name} is empty")
    return a


def ks_statistic(a, b) -> float:
    """sup |F_a - F_b| evaluated at every pooled sample point."""
    a = np.sort(_as_array(a, "a"))
    b = np.sort(_as_array(b, "b"))
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def kolmogorov_q(lam: float, terms: int = 200) -> float:
    """Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)."""
    if lam < 1e-3:
        return 1.0
    k = np.arange(1, terms + 1)
    q = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k * k * lam * lam))
    return float(min(1.0, max(0.0, q)))


def ks_exact_pvalue(d: float, n: int, m: int) -> float:
    """P(D >= d) under H0 by counting monotone lattice paths."""
    if d <= 0:
        return 1.0
    tol = 1e-12
    # count paths that stay strictly inside |i/n - j/m| < d
    inside = np.zeros(m + 1)
    for i in range(n + 1):
        row = np.zeros(m + 1)
        for j in range(m + 1):
            if abs(i / n - j / m) >= d - tol:
                continue
            if i == 0 and j == 0:
                row[j] = 1.0
                continue
            row[j] = (inside[j] if i > 0 else 0.0) + (row[j - 1] if j > 0 else 0.0)
        inside = row
    total = math.comb(n + m, n)
    return float(min(1.0, max(0.0, 1.0 - inside[m] / total)))


def ks_two_sample(a, b) -> TestResult:
    a = _as_array(a, "a")
    b = _as_array(b, "b")
    d = ks_statistic(a, b)
    n, m = a.size, b.size
    ne = n * m / (n + m)
    if ne <= 10:
        p = ks_exact_pvalue(d, n, m)
    else:
        sq = math.sqrt(ne)
        p = kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)
    return TestResult(d, p, None, n, m)


def t_two_sided_p(t: float, df: float) -> float:
    if not math.isfinite(t):
        return 0.0
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def t_two_sample(a, b) -> TestResult:
    """Pooled-variance Student t test."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = a.size, b.size
    if n1 < 2 or n2 < 2:
        raise ValueError("each group needs at least two observations")
    df = n1 + n2 - 2
    sp2 = ((n1 - 1) * a.var(ddof=1) + (n2 - 1) * b.var(ddof=1)) / df
    if sp2 <= 0:
        raise DegenerateVarianceError("pooled variance is zero")
    t = (a.mean() - b.mean()) / math.sqrt(sp2 * (1 / n1 + 1 / n2))
    return TestResult(float(t), t_two_sided_p(t, df), float(df), n1, n2)


def t_paired(diffs) -> TestResult:
    d = np.asarray(diffs, dtype=float)
    n = d.size
    if n < 2:
        raise ValueError("paired t test needs at least two differences")
    sd = d.std(ddof=1)
    mean = d.mean()
    if sd == 0 or sd <= 1e-14 * abs(mean):
        if mean == 0:
            return TestResult(0.0, 1.0, float(n - 1), n, n)
        raise DegenerateVarianceError("differences have zero variance")
    t = mean / (sd / math.sqrt(n))
    return TestResult(float(t), t_two_sided_p(t, n - 1), float(n - 1), n, n)


def impute_median(matrix: np.ndarray, medians: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fill NaNs column-wise; medians default to the column medians of ``matrix``."""
    x = np.array(matrix, dtype=float, copy=True)
    if medians is None:
        medians = np.full(x.shape[1], np.nan)
        for j in range(x.shape[1]):
            col = x[:, j]
            ok = col[np.isfinite(col)]
            if ok.size:
                medians[j] = np.median(ok)
    for j in range(x.shape[1]):
        bad = ~np.isfinite(x[:, j])
        x[bad, j] = medians[j]
    return x, medians


def rank_features(matrix, labels, names, alpha: float = 0.05,
                  min_selected: int = 8) -> RankingReport:
    """Rank columns by two-sample KS statistic between label groups.

    Missing values are imputed with the column median. Features with p < alpha
    are selected, topped up by rank to ``min_selected``.
    """
    x = np.asarray(matrix, dtype=float)
    y = np.asarray(labels).astype(int)
    warnings = []
    rows = []
    for j, name in enumerate(names):
        col = x[:, j]
        if not np.any(np.isfinite(col)):
            warnings.append({"feature": name, "reason": "all values null; excluded"})
            continue
        col = np.where(np.isfinite(col), col, np.median(col[np.isfinite(col)]))
        a, b = col[y == 1], col[y == 0]
        if a.size < 2 or b.size < 2:
            warnings.append({"feature": name, "reason": "fewer than two members in a group"})
            continue
        res = ks_two_sample(a, b)
        rows.append((name, res.statistic, res.p_value))
    rows.sort(key=lambda r: (-r[1], r[0]))
    ranked = []
    for k, (name, d, p) in enumerate(rows, start=1):
        ranked.append(RankedFeature(name, d, p, k, selected=(p < alpha or k <= min_selected)))
    return RankingReport(ranked, warnings, {"alpha": alpha, "min_selected": min_selected})
