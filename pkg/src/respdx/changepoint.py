"""PELT change-point detection with a Gaussian mean-and-variance cost."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError, NoChangePointError, SignalLengthError
from .session import BreathSession
from .signal import TimeSeries


class GaussianCost:
    """Negative log-likelihood of a segment under its own MLE mean and variance."""

    def __init__(self, x):
        x = np.asarray(x, dtype=float)
        self.n = x.size
        # centring keeps the running sums well conditioned; the cost is shift invariant
        xc = x - x.mean() if x.size else x
        self._x = xc
        self._s1 = np.concatenate([[0.0], np.cumsum(xc)])
        self._s2 = np.concatenate([[0.0], np.cumsum(xc * xc)])
        scale = float(np.var(xc)) if x.size else 0.0
        self.var_floor = max(scale, 1e-300) * 1e-12

    def __call__(self, start: int, stop: int) -> float:
        # two-pass variance; the prefix sums lose digits on near-constant segments
        m = stop - start
        seg = self._x[start:stop]
        var = max(float(np.mean((seg - seg.mean()) ** 2)), self.var_floor)
        return 0.5 * m * (math.log(2 * math.pi * var) + 1.0)


@dataclass(frozen=True)
class ChangePointResult:
    changepoints: tuple[int, ...]
    primary: int | None
    penalty_used: float
    cost_total: float
    min_seg: int = 1
    source: str = "pelt"  # or "protocol" when the phase annotation was used

    def to_json(self, sample_rate: float) -> dict:
        return {"changepoints_s": [c / sample_rate for c in self.changepoints],
                "primary_s": None if self.primary is None else self.primary / sample_rate,
                "penalty": self.penalty_used, "cost": self.cost_total, "source": self.source}


def default_penalty(n: int) -> float:
    return 3.0 * math.log(n)


def segmentation_cost(cost, bounds, penalty: float) -> float:
    edges = [0, *bounds, cost.n]
    return sum(cost(a, b) for a, b in zip(edges[:-1], edges[1:])) + penalty * len(bounds)


def _primary(cost, cps) -> int | None:
    """The change point whose removal (merging its two segments) raises the cost most."""
    if not cps:
        return None
    edges = [0, *cps, cost.n]
    gains = [cost(edges[k], edges[k + 2]) - cost(edges[k], c) - cost(c, edges[k + 2])
             for k, c in enumerate(cps)]
    return int(cps[int(np.argmax(gains))])


def pelt(series: TimeSeries | np.ndarray, penalty: float | None = None,
         min_seg: int = 1) -> ChangePointResult:
    """Exact minimiser of total segment cost + penalty per change point.

    Standard PELT pruning with K = 0 (the cost is a profile likelihood, so
    splitting a segment never increases it). A candidate marked prunable
    at time s is only discarded from s + min_seg on, which keeps the search
    exact under the minimum segment length.
    """
    x = np.asarray(series.samples if isinstance(series, TimeSeries) else series, dtype=float)
    n = x.size
    if min_seg < 1:
        raise InvalidSpecError("min_seg must be >= 1")
    if n < 2 * min_seg:
        raise SignalLengthError(f"series of {n} samples shorter than 2 * min_seg = {2 * min_seg}")
    if penalty is None:
        penalty = default_penalty(n)
    if not penalty > 0:
        raise InvalidSpecError(f"penalty must be > 0, got {penalty}")

    cost = GaussianCost(x)
    s1, s2, floor = cost._s1, cost._s2, cost.var_floor
    F = np.full(n + 1, math.inf)
    F[0] = -penalty
    last = np.zeros(n + 1, dtype=int)
    expire = np.full(n + 1, n + 2)
    cands = np.array([0])
    for s in range(min_seg, n + 1):
        t_new = s - min_seg
        if t_new >= min_seg and math.isfinite(F[t_new]):
            cands = np.append(cands, t_new)
        cands = cands[expire[cands] > s]
        m = s - cands
        mean = (s1[s] - s1[cands]) / m
        var = np.maximum((s2[s] - s2[cands]) / m - mean * mean, floor)
        seg = 0.5 * m * (np.log(2 * math.pi * var) + 1.0)
        vals = F[cands] + seg + penalty
        k = int(np.argmin(vals))
        F[s], last[s] = vals[k], cands[k]
        prune = (vals - penalty > F[s]) & (expire[cands] > n + 1)
        expire[cands[prune]] = s + min_seg
    cps = []
    s = n
    while s > 0:
        t = int(last[s])
        if t > 0:
            cps.append(t)
        s = t
    cps.reverse()
    total = segmentation_cost(cost, cps, penalty)
    return ChangePointResult(tuple(cps), _primary(cost, cps), float(penalty), float(total), min_seg)


CP_SIGNALS = ("raw", "filtered")


def detect_primary(session: BreathSession, penalty: float | None = None,
                   min_seg_s: float = 5.0, fallback: bool = True,
                   on: str = "raw") -> ChangePointResult:
    """Change-point search on a hold/deep session, with protocol fallback.

    ``on="raw"`` searches the unfiltered flux: the zero-phase band-pass
    spreads a breathing/hold transition over several seconds and drags
    the variance change away from the true onset.
    """
    if not session.test_kind.segmented:
        raise ValueError("segmentation is only defined for hold and deep sessions")
    if on not in CP_SIGNALS:
        raise InvalidSpecError(f"change-point signal must be one of {CP_SIGNALS}, got {on!r}")
    x = session.raw if on == "raw" else session.signal()
    min_seg = max(1, int(round(min_seg_s * x.sample_rate)))
    res = pelt(x, penalty, min_seg)
    if res.primary is None:
        boundary = session.phase_boundary() if fallback else None
        if boundary is None:
            raise NoChangePointError(f"no change point found in {session.session_id}")
        res = ChangePointResult(res.changepoints, boundary, res.penalty_used, res.cost_total,
                                min_seg, source="protocol")
    return res


def segment_session(session: BreathSession, result: ChangePointResult | None = None,
                    window_after_s: float = 30.0):
    """Split a hold/deep session into before, after and 30-s-after windows."""
    from .features import segment_windows

    if not session.test_kind.segmented:
        raise ValueError("segmentation is only defined for hold and deep sessions")
    if result is None:
        result = detect_primary(session)
    if result.primary is None:
        raise NoChangePointError(f"no change point for {session.session_id}")
    return segment_windows(session.signal(), result.primary, window_after_s)
