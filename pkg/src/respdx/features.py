"""Time-domain, spectral and assembled per-session breath features."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from . import rqa
from .errors import InsufficientPeaksError, InvalidSpecError, SignalLengthError
from .peaks import detect_breaths, peak_features
from .session import BreathSession, TestKind
from .signal import TimeSeries

PEAK_NAMES = ["Prom{} mean", "Prom{} std", "Width{} mean", "Width{} std", "RR{} mean", "RR{} std"]
TIME_NAMES = ["Flux{} mean", "Flux{} std", "Peak2peak{}", "RSSQ{}"]
FREQ_NAMES = ["Band power{}", "PSD{} mean", "NPSD{}", "Mean freq{}", "Dom freq{}"]
RQA_NAMES = ["DET", "LMAX", "ENT", "TND", "LAM", "TT"]

MIN_SPECTRAL_SAMPLES = 64


def _fmt(templates, suffix):
    return [t.format(suffix) for t in templates]


def feature_names(kind: TestKind | str) -> list[str]:
    kind = TestKind(kind)
    if not kind.segmented:
        return _fmt(PEAK_NAMES, "") + _fmt(TIME_NAMES, "") + _fmt(FREQ_NAMES, "") + RQA_NAMES
    names = []
    for group in (PEAK_NAMES, TIME_NAMES):
        for s in ("BF", "AF", "30"):
            names += _fmt(group, s)
    for s in ("BF", "AF", "30", "All"):
        names += _fmt(FREQ_NAMES, s)
    return names + RQA_NAMES


@dataclass(frozen=True)
class TimeFeatureSet:
    mmd: float
    rssq: float
    flux_mean: float
    flux_std: float


@dataclass(frozen=True)
class FreqFeatureSet:
    band_power: float
    psd_mean: float
    npsd: float
    mean_freq_hz: float
    dom_freq_hz: float


@dataclass(frozen=True)
class PsdOptions:
    segments: int = 8
    overlap: float = 0.5
    window: str = "hamming"
    min_nfft: int = 256


@dataclass
class FeatureVector:
    session_id: str
    test_kind: TestKind
    features: dict[str, float | None] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"session_id": self.session_id, "test_kind": self.test_kind.value,
                "features": dict(self.features)}

    @classmethod
    def from_json(cls, d: dict) -> "FeatureVector":
        return cls(d["session_id"], TestKind(d["test_kind"]), dict(d["features"]))


def time_features(series: TimeSeries) -> TimeFeatureSet:
    x = series.samples
    if x.size == 0:
        raise SignalLengthError("time features need a nonempty series")
    return TimeFeatureSet(
        mmd=float(x.max() - x.min()),
        rssq=float(math.sqrt(np.sum(x * x))),
        flux_mean=float(x.mean()),
        flux_std=float(x.std(ddof=1)) if x.size > 1 else 0.0,
    )


def welch_psd(series: TimeSeries, opts: PsdOptions | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Welch density: K segments of length 2N/(K+1) at 50% overlap."""
    opts = opts or PsdOptions()
    n = len(series)
    nperseg = max(8, int(n / (1 + (opts.segments - 1) * (1 - opts.overlap))))
    nperseg = min(nperseg, n)
    noverlap = int(nperseg * opts.overlap)
    nfft = max(opts.min_nfft, 1 << (nperseg - 1).bit_length())
    return sps.welch(series.samples, fs=series.sample_rate, window=opts.window,
                     nperseg=nperseg, noverlap=noverlap, nfft=nfft,
                     detrend="constant", return_onesided=True, scaling="density")


def _integrate(f, p, lo, hi):
    mask = (f >= lo) & (f <= hi)
    if mask.sum() < 2:
        return 0.0
    return float(np.trapezoid(p[mask], f[mask]))


def spectral_features(series: TimeSeries, band_hz=(0.1, 0.5),
                      opts: PsdOptions | None = None) -> FreqFeatureSet:
    nyquist = series.sample_rate / 2.0
    lo, hi = band_hz
    if not (0 <= lo < hi <= nyquist):
        raise InvalidSpecError(f"band {band_hz} outside [0, {nyquist}] Hz")
    if len(series) < MIN_SPECTRAL_SAMPLES:
        raise SignalLengthError(f"spectral features need >= {MIN_SPECTRAL_SAMPLES} samples")
    f, p = welch_psd(series, opts)
    total = float(np.trapezoid(p, f))
    mean_freq = float(np.trapezoid(f * p, f) / total) if total > 0 else 0.0
    return FreqFeatureSet(
        band_power=_integrate(f, p, lo, hi),
        psd_mean=total,
        npsd=total / series.duration,
        mean_freq_hz=mean_freq,
        dom_freq_hz=float(f[int(np.argmax(p))]),
    )


@dataclass(frozen=True)
class FeatureOptions:
    band_hz: tuple[float, float] = (0.1, 0.5)
    psd: PsdOptions = field(default_factory=PsdOptions)
    rqa: rqa.RqaConfig = field(default_factory=rqa.RqaConfig)
    min_peak_distance_s: float = 1.0
    window_after_s: float = 30.0


def _peak_block(series: TimeSeries, opts: FeatureOptions) -> list[float | None]:
    if len(series) < 3:
        return [None] * 6
    peaks = detect_breaths(series, opts.min_peak_distance_s)
    if len(peaks) < 3:
        return [None] * 6
    try:
        pf = peak_features(peaks, series.sample_rate)
    except InsufficientPeaksError:
        return [None] * 6
    return [pf.prom_mean, pf.prom_std, pf.width_mean, pf.width_std, pf.rr_mean, pf.rr_std]


def _time_block(series: TimeSeries) -> list[float | None]:
    if len(series) < 2:
        return [None] * 4
    tf = time_features(series)
    return [tf.flux_mean, tf.flux_std, tf.mmd, tf.rssq]


def _freq_block(series: TimeSeries, opts: FeatureOptions) -> list[float | None]:
    if len(series) < MIN_SPECTRAL_SAMPLES:
        return [None] * 5
    ff = spectral_features(series, opts.band_hz, opts.psd)
    return [ff.band_power, ff.psd_mean, ff.npsd, ff.mean_freq_hz, ff.dom_freq_hz]


def segment_windows(series: TimeSeries, primary: int, window_after_s: float = 30.0):
    """Before / after / post-change-point window split at ``primary``."""
    n = len(series)
    if not 0 < primary < n:
        raise ValueError(f"change point {primary} outside (0, {n})")
    w = int(round(window_after_s * series.sample_rate))
    return series.slice(0, primary), series.slice(primary, n), series.slice(primary, primary + w)


def extract_vector(session: BreathSession, cp=None, opts: FeatureOptions | None = None,
                   rqa_result=None) -> FeatureVector:
    """Assemble the named feature vector for one session.

    ``cp`` is a change-point result (anything with a ``primary`` index) and is
    required for hold and deep sessions. ``rqa_result`` lets callers reuse an
    already computed ``rqa.analyze`` output.
    """
    opts = opts or FeatureOptions()
    x = session.signal()
    kind = session.test_kind
    if rqa_result is None:
        rqa_result = rqa.analyze(x, opts.rqa)
    rqa_vals = list(rqa_result[0].as_dict().values())

    if not kind.segmented:
        values = _peak_block(x, opts) + _time_block(x) + _freq_block(x, opts) + rqa_vals
    else:
        primary = getattr(cp, "primary", cp)
        if primary is None:
            raise ValueError(f"{kind.value} session {session.session_id} needs a change point")
        windows = segment_windows(x, int(primary), opts.window_after_s)
        values = []
        for w in windows:
            values += _peak_block(w, opts)
        for w in windows:
            values += _time_block(w)
        for w in (*windows, x):
            values += _freq_block(w, opts)
        values += rqa_vals

    names = feature_names(kind)
    assert len(names) == len(values)
    clean = {n: (None if v is None or not math.isfinite(v) else float(v)) for n, v in zip(names, values)}
    return FeatureVector(session.session_id, kind, clean)
