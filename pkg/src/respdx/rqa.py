"""Recurrence plots and recurrence quantification analysis.

Line statistics are computed with the main diagonal and the Theiler band
removed. Diagonal and vertical line-length histograms are counted over the
whole (symmetric) matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import InvalidSpecError, SignalLengthError
from .signal import TimeSeries


@dataclass(frozen=True)
class EmbeddingSpec:
    dimension: int = 3
    delay: int = 1

    def __post_init__(self):
        if self.dimension < 1 or self.delay < 1:
            raise InvalidSpecError("embedding dimension and delay must be >= 1")


@dataclass(frozen=True)
class RecurrenceMatrix:
    entries: np.ndarray  # bool, main diagonal set, Theiler band cleared
    threshold: float
    theiler_window: int
    degenerate: bool = False

    @property
    def n_points(self) -> int:
        return self.entries.shape[0]

    def recurrence_rate(self) -> float:
        n = self.n_points
        iu = np.triu_indices(n, self.theiler_window + 1)
        if iu[0].size == 0:
            return 0.0
        return float(self.entries[iu].mean())


@dataclass(frozen=True)
class RqaMetrics:
    det: float
    lmax: int
    ent: float
    tnd: float
    lam: float
    tt: float

    def as_dict(self) -> dict:
        return {"DET": self.det, "LMAX": float(self.lmax), "ENT": self.ent,
                "TND": self.tnd, "LAM": self.lam, "TT": self.tt}


def embed(series: TimeSeries | np.ndarray, spec: EmbeddingSpec) -> np.ndarray:
    x = np.asarray(series.samples if isinstance(series, TimeSeries) else series, dtype=float)
    m, tau = spec.dimension, spec.delay
    n_points = x.size - (m - 1) * tau
    if n_points < 10:
        raise SignalLengthError(
            f"{x.size} samples leave {n_points} embedded points (m={m}, tau={tau}); need >= 10")
    return np.stack([x[k * tau:k * tau + n_points] for k in range(m)], axis=1)


def autocorr_first_minimum(x: np.ndarray, fallback: int) -> int:
    """Lag of the first local minimum of the sample autocorrelation."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = x.size
    if n < 4 or not np.any(x):
        return max(1, fallback)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    ac = np.fft.irfft(f * np.conj(f), nfft)[:n]
    ac /= ac[0]
    for k in range(1, n - 1):
        if ac[k] < ac[k - 1] and ac[k] <= ac[k + 1]:
            return k
    return max(1, fallback)


def recurrence_matrix(embedded: np.ndarray, target_rate: float = 0.1,
                      theiler: int = 0) -> RecurrenceMatrix:
    """Threshold pairwise distances at the quantile giving ``target_rate``.

    The rate is measured over pairs outside the Theiler band; the realized
    rate matches the target to within one pair unless distances tie.
    """
    if not 0.01 < target_rate < 0.5:
        raise InvalidSpecError(f"target_rate must lie in (0.01, 0.5), got {target_rate}")
    v = np.asarray(embedded, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    n = v.shape[0]
    if theiler < 0 or theiler >= n - 1:
        raise InvalidSpecError(f"theiler window {theiler} invalid for {n} points")
    dist = squareform(pdist(v))
    iu = np.triu_indices(n, theiler + 1)
    d = dist[iu]
    k = max(1, int(math.ceil(target_rate * d.size)))
    eps = float(np.partition(d, k - 1)[k - 1])
    degenerate = bool(d.max() == d.min())
    r = dist <= eps
    band = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) <= theiler
    r[band] = False
    np.fill_diagonal(r, True)
    return RecurrenceMatrix(entries=r, threshold=eps, theiler_window=theiler, degenerate=degenerate)


def _run_lengths(rows: np.ndarray) -> np.ndarray:
    """Lengths of all runs of True along axis 1 of a 2-D boolean array."""
    if rows.size == 0:
        return np.zeros(0, dtype=int)
    padded = np.zeros((rows.shape[0], rows.shape[1] + 2), dtype=np.int8)
    padded[:, 1:-1] = rows
    flat = padded.ravel()
    d = np.diff(flat)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return ends - starts


def _diagonals(r: np.ndarray, first: int) -> np.ndarray:
    """Superdiagonals k >= first as rows, zero-padded to equal length."""
    n = r.shape[0]
    ks = np.arange(first, n)
    if ks.size == 0:
        return np.zeros((0, 0), dtype=bool)
    i = np.arange(n)
    cols = i[None, :] + ks[:, None]
    valid = cols < n
    out = np.zeros((ks.size, n), dtype=bool)
    out[valid] = r[np.broadcast_to(i, cols.shape)[valid], cols[valid]]
    return out


def line_histograms(matrix: RecurrenceMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and vertical line-length counts, index = length."""
    r = matrix.entries.copy()
    n = r.shape[0]
    np.fill_diagonal(r, False)
    upper = _diagonals(r, matrix.theiler_window + 1)
    diag_lengths = _run_lengths(upper)
    # symmetric matrix: each upper diagonal line has a mirror below
    diag_hist = 2 * np.bincount(diag_lengths, minlength=n + 1)
    vert_hist = np.bincount(_run_lengths(r.T), minlength=n + 1)
    return diag_hist, vert_hist


def _trend(matrix: RecurrenceMatrix) -> float:
    r = matrix.entries
    n = r.shape[0]
    n_tilde = n - max(10, int(math.ceil(0.1 * n)))
    first = matrix.theiler_window + 1
    ks = np.arange(first, n_tilde + 1)
    if ks.size < 2:
        return 0.0
    rr = np.array([np.diagonal(r, int(k)).mean() for k in ks])
    i = np.arange(1, ks.size + 1, dtype=float)
    centred = i - i.mean()
    return float(np.sum(centred * (rr - rr.mean())) / np.sum(centred ** 2))


def rqa_metrics(matrix: RecurrenceMatrix, l_min: int = 2, v_min: int = 2) -> RqaMetrics:
    if l_min < 2 or v_min < 2:
        raise InvalidSpecError("l_min and v_min must be >= 2")
    diag, vert = line_histograms(matrix)
    lengths = np.arange(diag.size)

    total_d = float(np.sum(lengths * diag))
    long_d = diag[l_min:]
    det = float(np.sum(lengths[l_min:] * long_d)) / total_d if total_d else 0.0
    nz = np.flatnonzero(diag)
    lmax = int(nz.max()) if nz.size else 0
    ent = 0.0
    if long_d.sum() > 0:
        p = long_d[long_d > 0] / long_d.sum()
        ent = float(-np.sum(p * np.log(p)))

    total_v = float(np.sum(lengths * vert))
    long_v = vert[v_min:]
    long_v_points = float(np.sum(lengths[v_min:] * long_v))
    lam = long_v_points / total_v if total_v else 0.0
    tt = long_v_points / float(long_v.sum()) if long_v.sum() else 0.0
    if matrix.degenerate:
        # fully recurrent plot (constant input): edge runs shorter than l_min are ignored
        det = lam = 1.0

    return RqaMetrics(det=det, lmax=lmax, ent=ent, tnd=_trend(matrix), lam=lam, tt=tt)


@dataclass(frozen=True)
class RqaConfig:
    dimension: int = 3
    delay: int | None = None  # None: first autocorrelation minimum
    target_rate: float = 0.1
    theiler: int | None = None  # None: (m - 1) * delay
    l_min: int = 2
    v_min: int = 2


def resolve_embedding(series: TimeSeries, cfg: RqaConfig) -> tuple[EmbeddingSpec, int]:
    delay = cfg.delay
    if delay is None:
        delay = autocorr_first_minimum(series.samples, int(round(series.sample_rate / 4)))
    # keep enough embedded points for the trend window
    max_delay = max(1, (len(series) - 20) // max(1, cfg.dimension - 1))
    delay = max(1, min(delay, max_delay))
    spec = EmbeddingSpec(cfg.dimension, delay)
    theiler = cfg.theiler if cfg.theiler is not None else (cfg.dimension - 1) * delay
    return spec, theiler


def analyze(series: TimeSeries, cfg: RqaConfig | None = None) -> tuple[RqaMetrics, RecurrenceMatrix, dict]:
    """Embed, threshold and summarise a series; returns metrics, matrix and resolved params."""
    cfg = cfg or RqaConfig()
    spec, theiler = resolve_embedding(series, cfg)
    emb = embed(series, spec)
    theiler = min(theiler, emb.shape[0] - 2)
    mat = recurrence_matrix(emb, cfg.target_rate, theiler)
    params = {"dimension": spec.dimension, "delay": spec.delay, "theiler": theiler,
              "target_rate": cfg.target_rate, "threshold": mat.threshold,
              "l_min": cfg.l_min, "v_min": cfg.v_min}
    return rqa_metrics(mat, cfg.l_min, cfg.v_min), mat, params


def sparse_pairs(matrix: RecurrenceMatrix) -> np.ndarray:
    """Upper-triangle recurrent (i, j) pairs, excluding the main diagonal."""
    iu = np.argwhere(np.triu(matrix.entries, 1))
    return iu
