import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from respdx.errors import InvalidSpecError, SignalLengthError
from respdx.signal import (FilterSpec, TimeSeries, design_bandpass, filter_zero_phase, frequency_response,
                           preprocess, read_signal_csv, write_signal_csv)

FS = 10.0


def tone(freq, seconds, fs=FS, amp=1.0):
    t = np.arange(int(seconds * fs)) / fs
    return TimeSeries(amp * np.sin(2 * np.pi * freq * t), fs)


def central_amplitude(x):
    n = x.size
    mid = x[n // 4: 3 * n // 4]
    return 0.5 * (mid.max() - mid.min())


def db(h):
    return 20 * math.log10(abs(h))


def test_timeseries_rejects_bad_input():
    with pytest.raises(ValueError):
        TimeSeries(np.array([1.0, np.nan]), FS)
    with pytest.raises(InvalidSpecError):
        TimeSeries(np.zeros(4), 0.0)
    with pytest.raises(InvalidSpecError):
        TimeSeries(np.zeros(4), math.inf)


def test_timeseries_is_read_only():
    x = TimeSeries(np.arange(5.0), FS)
    with pytest.raises(ValueError):
        x.samples[0] = 3.0


def test_passband_centre_within_half_db():
    coeffs = design_bandpass(FilterSpec(), FS)
    h = frequency_response(coeffs, [math.sqrt(0.1 * 0.5)])[0]
    assert db(h) >= -0.5


def test_stopband_attenuation():
    coeffs = design_bandpass(FilterSpec(), FS)
    h = frequency_response(coeffs, [0.05, 1.0])
    assert db(h[0]) <= -20 and db(h[1]) <= -20


def test_dc_blocked_exactly():
    coeffs = design_bandpass(FilterSpec(), FS)
    assert abs(frequency_response(coeffs, [0.0])[0]) == 0.0


def test_frequency_response_matches_reference_evaluation():
    from scipy.signal import sosfreqz

    coeffs = design_bandpass(FilterSpec(), FS)
    f = np.linspace(0.01, 4.99, 37)
    _, h = sosfreqz(coeffs.sos, worN=f, fs=FS)
    np.testing.assert_allclose(frequency_response(coeffs, f), h, rtol=1e-9, atol=1e-12)


def test_design_rejects_cut_at_or_above_nyquist():
    with pytest.raises(InvalidSpecError):
        design_bandpass(FilterSpec(), 0.8)


def test_design_rejects_bad_order_and_band():
    with pytest.raises(InvalidSpecError):
        design_bandpass(FilterSpec(order=0), FS)
    with pytest.raises(InvalidSpecError):
        design_bandpass(FilterSpec(5, 0.5, 0.1), FS)


def test_design_is_bit_identical():
    a = design_bandpass(FilterSpec(), FS).sos
    b = design_bandpass(FilterSpec(), FS).sos
    assert a.tobytes() == b.tobytes()


def test_constant_series_is_removed():
    y = preprocess(TimeSeries(np.full(600, 5.0), FS))
    assert np.max(np.abs(y.samples)) < 1e-3 * 5.0


def test_passband_tone_keeps_amplitude():
    y = preprocess(tone(0.25, 300))
    assert central_amplitude(y.samples) == pytest.approx(1.0, rel=0.05)


def test_low_tone_attenuated_20db():
    y = preprocess(tone(0.05, 600))
    assert db(central_amplitude(y.samples)) <= -20


def test_output_shape_and_rate():
    x = tone(0.3, 60)
    y = preprocess(x)
    assert len(y) == len(x) and y.sample_rate == x.sample_rate


def test_too_short_series_raises():
    coeffs = design_bandpass(FilterSpec(), FS)
    with pytest.raises(SignalLengthError):
        filter_zero_phase(TimeSeries(np.zeros(coeffs.padlen), FS), coeffs)


def test_rate_mismatch_raises():
    coeffs = design_bandpass(FilterSpec(), FS)
    with pytest.raises(InvalidSpecError):
        filter_zero_phase(tone(0.3, 60, fs=20.0), coeffs)


def test_zero_phase_lag():
    x = tone(0.25, 200)
    y = preprocess(x).samples
    n = x.samples.size
    a, b = x.samples[n // 4: 3 * n // 4], y[n // 4: 3 * n // 4]
    lags = range(-20, 21)
    corr = [np.dot(a[20:-20], np.roll(b, k)[20:-20]) for k in lags]
    assert list(lags)[int(np.argmax(corr))] == 0


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_linearity(alpha, beta, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal(400), rng.standard_normal(400)
    f = lambda s: preprocess(TimeSeries(s, FS)).samples
    lhs = f(alpha * u + beta * v)
    rhs = alpha * f(u) + beta * f(v)
    core = slice(50, 350)
    scale = max(1.0, np.max(np.abs(rhs[core])))
    assert np.max(np.abs(lhs[core] - rhs[core])) <= 1e-9 * scale


def test_csv_round_trip(tmp_path):
    x = TimeSeries(np.random.default_rng(0).standard_normal(50), 10.0, 2.0)
    p = tmp_path / "s.csv"
    write_signal_csv(x, p)
    y = read_signal_csv(p)
    np.testing.assert_array_equal(y.samples, x.samples)
    assert y.sample_rate == pytest.approx(10.0, rel=1e-9)
    assert y.start_time == 2.0


def test_csv_rejects_non_uniform_time(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,flux\n0,1\n0.1,2\n0.25,3\n0.3,4\n")
    with pytest.raises(ValueError):
        read_signal_csv(p)


def test_csv_rejects_wrong_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time,value\n0,1\n0.1,2\n")
    with pytest.raises(ValueError):
        read_signal_csv(p)
