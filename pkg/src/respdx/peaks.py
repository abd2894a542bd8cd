"""Peak detection with topographic prominence and the peak-derived breath features."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientPeaksError
from .signal import TimeSeries


@dataclass(frozen=True)
class Peak:
    index: int
    height: float
    prominence: float
    width_samples: float
    left_base: int
    right_base: int


@dataclass(frozen=True)
class PeakFeatureSet:
    prom_mean: float
    prom_std: float
    width_mean: float  # seconds
    width_std: float
    rr_mean: float  # breaths / min
    rr_std: float | None  # None when fewer than three peaks


def local_maxima(x: np.ndarray) -> np.ndarray:
    """Indices of strict local maxima; flat tops report their (lower) midpoint."""
    n = x.size
    out = []
    i = 1
    while i < n - 1:
        if x[i - 1] < x[i]:
            j = i
            while j + 1 < n and x[j + 1] == x[i]:
                j += 1
            if j + 1 < n and x[j + 1] < x[i]:
                out.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    return np.asarray(out, dtype=int)


def _prominence(x: np.ndarray, i: int) -> tuple[float, int, int]:
    h = x[i]
    # left: scan to the first strictly higher sample, tracking the minimum
    j = i
    left_min, left_base = h, i
    while j > 0:
        j -= 1
        if x[j] > h:
            break
        if x[j] < left_min:
            left_min, left_base = x[j], j
    j = i
    right_min, right_base = h, i
    while j < x.size - 1:
        j += 1
        if x[j] > h:
            break
        if x[j] < right_min:
            right_min, right_base = x[j], j
    return h - max(left_min, right_min), left_base, right_base


def _width(x: np.ndarray, i: int, prominence: float, lb: int, rb: int) -> float:
    ref = x[i] - prominence / 2.0
    j = i
    while lb < j and ref < x[j]:
        j -= 1
    left = float(j)
    if x[j] < ref:
        left += (ref - x[j]) / (x[j + 1] - x[j])
    j = i
    while j < rb and ref < x[j]:
        j += 1
    right = float(j)
    if x[j] < ref:
        right -= (ref - x[j]) / (x[j - 1] - x[j])
    return right - left


def _enforce_distance(x: np.ndarray, idx: np.ndarray, distance: int) -> np.ndarray:
    if distance <= 1 or idx.size < 2:
        return idx
    keep = np.ones(idx.size, dtype=bool)
    # highest first; stable on ties so earlier peaks win
    order = np.argsort(-x[idx], kind="stable")
    for k in order:
        if not keep[k]:
            continue
        lo = k - 1
        while lo >= 0 and idx[k] - idx[lo] < distance:
            keep[lo] = False
            lo -= 1
        hi = k + 1
        while hi < idx.size and idx[hi] - idx[k] < distance:
            keep[hi] = False
            hi += 1
    return idx[keep]


def detect_peaks(series: TimeSeries, min_prominence: float = 0.0,
                 min_distance_s: float = 0.0) -> list[Peak]:
    """Local maxima passing a prominence floor, thinned greedily by height.

    Prominence is the height above the higher of the two minima bounding the
    peak's dominance interval; width is measured at half prominence with
    linear interpolation between samples.
    """
    if min_distance_s < 0:
        raise ValueError("min_distance_s must be >= 0")
    x = series.samples
    cand = local_maxima(x)
    info = {}
    kept = []
    for i in cand:
        prom, lb, rb = _prominence(x, int(i))
        if prom >= min_prominence:
            info[int(i)] = (prom, lb, rb)
            kept.append(int(i))
    idx = np.asarray(kept, dtype=int)
    idx = _enforce_distance(x, idx, int(math.ceil(min_distance_s * series.sample_rate)))
    peaks = []
    for i in idx:
        prom, lb, rb = info[int(i)]
        peaks.append(Peak(int(i), float(x[i]), float(prom), _width(x, int(i), prom, lb, rb), lb, rb))
    return peaks


def default_min_prominence(series: TimeSeries) -> float:
    q75, q25 = np.percentile(series.samples, [75, 25])
    return 0.25 * float(q75 - q25)


def detect_breaths(series: TimeSeries, min_distance_s: float = 1.0) -> list[Peak]:
    """Peak detection with the package defaults (IQR-scaled prominence floor)."""
    return detect_peaks(series, default_min_prominence(series), min_distance_s)


def peak_features(peaks: list[Peak], sample_rate: float) -> PeakFeatureSet:
    n = len(peaks)
    if n < 2:
        raise InsufficientPeaksError(f"need at least 2 peaks, got {n}")
    prom = np.array([p.prominence for p in peaks])
    width = np.array([p.width_samples for p in peaks]) / sample_rate
    idx = np.array([p.index for p in peaks], dtype=float)
    rates = 60.0 / (np.diff(idx) / sample_rate)
    rr_mean = float(rates.mean())
    rr_std = None
    if n >= 3:
        # 1/(N-2) normalisation over the N-1 interval rates
        rr_std = math.sqrt(float(np.sum((rates - rr_mean) ** 2)) / (n - 2))
    return PeakFeatureSet(
        prom_mean=float(prom.mean()),
        prom_std=float(prom.std(ddof=1)),
        width_mean=float(width.mean()),
        width_std=float(width.std(ddof=1)),
        rr_mean=rr_mean,
        rr_std=rr_std,
    )
