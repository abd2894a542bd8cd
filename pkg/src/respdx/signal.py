"""Time-series container, Butterworth band-pass design and zero-phase filtering."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import InvalidSpecError, SignalLengthError


@dataclass(frozen=True)
class TimeSeries:
    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise InvalidSpecError(f"sample_rate must be positive and finite, got {self.sample_rate}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain NaN or Inf")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    def slice(self, start: int, stop: int) -> "TimeSeries":
        start = max(0, start)
        stop = min(len(self), stop)
        return TimeSeries(self.samples[start:stop], self.sample_rate,
                          self.start_time + start / self.sample_rate)


@dataclass(frozen=True)
class FilterSpec:
    order: int = 5
    low_cut_hz: float = 0.1
    high_cut_hz: float = 0.5

    def validate(self, sample_rate: float) -> None:
        if self.order < 1:
            raise InvalidSpecError(f"filter order must be >= 1, got {self.order}")
        nyquist = sample_rate / 2.0
        if not (0 < self.low_cut_hz < self.high_cut_hz < nyquist):
            raise InvalidSpecError(
                f"need 0 < low ({self.low_cut_hz}) < high ({self.high_cut_hz}) "
                f"< Nyquist ({nyquist}) Hz")


@dataclass(frozen=True)
class FilterCoefficients:
    """Cascaded second-order sections, rows of ``[b0, b1, b2, a0, a1, a2]``."""

    sos: np.ndarray
    sample_rate: float
    spec: FilterSpec = field(default_factory=FilterSpec)

    @property
    def padlen(self) -> int:
        # three times the order of the realized digital filter
        return 3 * 2 * self.sos.shape[0]


def design_bandpass(spec: FilterSpec, sample_rate: float) -> FilterCoefficients:
    """Butterworth band-pass via bilinear transform with pre-warped band edges."""
    spec.validate(sample_rate)
    sos = sps.butter(spec.order, [spec.low_cut_hz, spec.high_cut_hz], btype="bandpass",
                     output="sos", fs=sample_rate)
    sos.setflags(write=False)
    return FilterCoefficients(sos=sos, sample_rate=float(sample_rate), spec=spec)


def frequency_response(coeffs: FilterCoefficients, freqs_hz) -> np.ndarray:
    """Complex H(e^{jw}) evaluated directly from the section polynomials."""
    w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=float) / coeffs.sample_rate
    z1 = np.exp(-1j * w)
    z2 = z1 * z1
    h = np.ones_like(z1)
    for b0, b1, b2, a0, a1, a2 in coeffs.sos:
        h = h * (b0 + b1 * z1 + b2 * z2) / (a0 + a1 * z1 + a2 * z2)
    return h


def filter_zero_phase(series: TimeSeries, coeffs: FilterCoefficients) -> TimeSeries:
    if not math.isclose(series.sample_rate, coeffs.sample_rate, rel_tol=1e-9):
        raise InvalidSpecError(
            f"coefficients designed for {coeffs.sample_rate} Hz, series is {series.sample_rate} Hz")
    padlen = coeffs.padlen
    if len(series) <= padlen:
        raise SignalLengthError(f"series of {len(series)} samples is too short; need > {padlen}")
    y = sps.sosfiltfilt(np.array(coeffs.sos), np.array(series.samples), padtype="odd", padlen=padlen)
    return TimeSeries(y, series.sample_rate, series.start_time)


def preprocess(series: TimeSeries, spec: FilterSpec | None = None) -> TimeSeries:
    """Design the band-pass for the series' rate and apply it forward-backward."""
    return filter_zero_phase(series, design_bandpass(spec or FilterSpec(), series.sample_rate))


def read_signal_csv(path: str | Path, rel_tol: float = 1e-6) -> TimeSeries:
    """Read a ``t,flux`` CSV; the time column must be a uniform grid."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != ["t", "flux"]:
            raise ValueError(f"{path}: expected header 't,flux', got {','.join(header)}")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if len(rows) < 2:
        raise SignalLengthError(f"{path}: need at least two samples")
    t = np.array([r[0] for r in rows])
    x = np.array([r[1] for r in rows])
    steps = np.diff(t)
    step = (t[-1] - t[0]) / (t.size - 1)
    if step <= 0 or np.any(np.abs(steps - step) > rel_tol * step):
        raise ValueError(f"{path}: non-uniform or non-monotonic sampling")
    return TimeSeries(x, 1.0 / step, float(t[0]))


def write_signal_csv(series: TimeSeries, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "flux"])
        for t, v in zip(series.times, series.samples):
            w.writerow([repr(float(t)), repr(float(v))])
