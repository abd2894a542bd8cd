"""Optimal 1:1 covariate matching, balance diagnostics and average causal effects."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVarianceError
from .stats import t_paired

COVARIATES = ("age", "gender", "bmi")
BINARY = {"gender"}


@dataclass(frozen=True)
class Covariates:
    id: str
    age: float
    gender: int
    bmi: float

    def vector(self) -> np.ndarray:
        return np.array([self.age, self.gender, self.bmi], dtype=float)


@dataclass
class MatchedPairs:
    pairs: list[tuple[str, str]]
    total_distance: float
    unmatched_controls: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class CausalEffect:
    feature_name: str
    ace: float
    acep_percent: float | None
    t: float
    p: float
    n_pairs: int

    def to_json(self) -> dict:
        return {"feature": self.feature_name, "ace": self.ace, "acep_percent": self.acep_percent,
                "t": self.t, "p": self.p, "n_pairs": self.n_pairs}


def linear_assignment(cost) -> np.ndarray:
    """Minimum-cost assignment of every row to a distinct column (rows <= cols).

    Shortest-augmenting-path Hungarian method with row/column potentials;
    surplus columns behave like zero-cost dummy rows. Returns the column
    chosen for each row.
    """
    c = np.asarray(cost, dtype=float)
    n, m = c.shape
    if n > m:
        raise ValueError(f"need rows <= columns, got {n}x{m}")
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=int)  # owner[j] = 1-based row assigned to column j
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            cur = c[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    assign = np.full(n, -1, dtype=int)
    for j in range(1, m + 1):
        if owner[j]:
            assign[owner[j] - 1] = j - 1
    return assign


def covariate_scale(people: list[Covariates]) -> np.ndarray:
    X = np.array([p.vector() for p in people])
    sd = X.std(axis=0, ddof=1) if len(people) > 1 else np.ones(3)
    return np.where(sd > 0, sd, 1.0)


def distance_matrix(treated: list[Covariates], controls: list[Covariates], scale) -> np.ndarray:
    a = np.array([p.vector() for p in treated]) / scale
    b = np.array([p.vector() for p in controls]) / scale
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))


def optimal_match(treated: list[Covariates], controls: list[Covariates], scale=None) -> MatchedPairs:
    """Match each treated unit to a distinct control minimising total distance."""
    if not treated:
        raise ValueError("no treated units")
    if len(controls) < len(treated):
        raise ValueError(f"{len(controls)} controls cannot cover {len(treated)} treated units")
    if scale is None:
        scale = covariate_scale(list(treated) + list(controls))
    d = distance_matrix(treated, controls, np.asarray(scale, dtype=float))
    cols = linear_assignment(d)
    pairs = [(treated[i].id, controls[j].id) for i, j in enumerate(cols)]
    used = set(cols.tolist())
    unmatched = [c.id for j, c in enumerate(controls) if j not in used]
    return MatchedPairs(pairs, float(d[np.arange(len(treated)), cols].sum()), unmatched)


def greedy_match(treated, controls, scale) -> MatchedPairs:
    """Nearest available control, treated units taken in order."""
    d = distance_matrix(treated, controls, np.asarray(scale, dtype=float))
    free = np.ones(len(controls), dtype=bool)
    pairs, total = [], 0.0
    for i in range(len(treated)):
        j = int(np.argmin(np.where(free, d[i], np.inf)))
        free[j] = False
        total += d[i, j]
        pairs.append((treated[i].id, controls[j].id))
    return MatchedPairs(pairs, total, [c.id for j, c in enumerate(controls) if free[j]])


def smd(treated_vals, control_vals, binary: bool = False) -> float:
    a = np.asarray(treated_vals, dtype=float)
    b = np.asarray(control_vals, dtype=float)
    if binary:
        p1, p2 = a.mean(), b.mean()
        denom = math.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / 2.0)
        diff = abs(p1 - p2)
    else:
        if a.size < 2 or b.size < 2:
            raise ValueError("continuous SMD needs at least two values per group")
        denom = math.sqrt((a.var(ddof=1) + b.var(ddof=1)) / 2.0)
        diff = abs(a.mean() - b.mean())
    if denom == 0:
        if diff == 0:
            return 0.0
        raise DegenerateVarianceError("pooled standard deviation is zero")
    return float(diff / denom)


def balance_table(treated: list[Covariates], controls: list[Covariates]) -> dict:
    out = {}
    for k, name in enumerate(COVARIATES):
        a = [p.vector()[k] for p in treated]
        b = [p.vector()[k] for p in controls]
        out[name] = {"treated_mean": float(np.mean(a)), "control_mean": float(np.mean(b)),
                     "smd": smd(a, b, binary=name in BINARY)}
    return out


def ace(matched: MatchedPairs, values: dict[str, float], feature_name: str = "") -> CausalEffect:
    """Mean treated-minus-control difference over matched pairs, with paired t test.

    Pairs with a missing value on either side are skipped. When every pair
    differs by the same nonzero amount the t test is undefined: the raised
    ``DegenerateVarianceError`` carries the effect sizes in ``.partial``.
    """
    diffs, ctrl = [], []
    for t_id, c_id in matched.pairs:
        vt, vc = values.get(t_id), values.get(c_id)
        if vt is None or vc is None or not (math.isfinite(vt) and math.isfinite(vc)):
            continue
        diffs.append(vt - vc)
        ctrl.append(vc)
    if len(diffs) < 2:
        raise ValueError(f"{feature_name}: fewer than two complete pairs")
    diffs = np.array(diffs)
    effect = float(diffs.mean())
    ctrl_mean = float(np.mean(ctrl))
    scale = max(np.max(np.abs(ctrl)), abs(effect), 1e-300)
    acep = None if abs(ctrl_mean) < 1e-12 * scale else 100.0 * effect / ctrl_mean
    try:
        test = t_paired(diffs)
    except DegenerateVarianceError as exc:
        exc.partial = CausalEffect(feature_name, effect, acep, math.nan, math.nan, len(diffs))
        raise
    return CausalEffect(feature_name, effect, acep, test.statistic, test.p_value, len(diffs))
