import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from respdx import synth
from respdx.changepoint import (GaussianCost, default_penalty, detect_primary, pelt, segment_session,
                                segmentation_cost)
from respdx.errors import InvalidSpecError, NoChangePointError, SignalLengthError
from respdx.features import segment_windows
from respdx.signal import TimeSeries, preprocess


def oracle_cost(x):
    floor = max(float(np.var(x)), 1e-300) * 1e-12
    return lambda a, b: oracles.gaussian_segment_cost(x[a:b], floor)


def step_series(seed=0):
    rng = np.random.default_rng(seed)
    x = 0.5 * rng.standard_normal(1000)
    x[500:] += 10.0
    return x


def test_step_primary():
    x = step_series()
    res = pelt(x)
    assert abs(res.primary - 500) <= 3
    assert abs(res.primary - oracles.best_single_split(x, 1, np.var(x) * 1e-12)) <= 3


def test_iid_series_has_no_change_points():
    for seed in range(5):
        x = np.random.default_rng(seed).standard_normal(1000)
        res = pelt(x, default_penalty(x.size))
        assert res.changepoints == () and res.primary is None


@settings(max_examples=60)
@given(st.integers(0, 2**31), st.integers(4, 40), st.integers(1, 4), st.floats(0.5, 20.0))
def test_pelt_matches_full_dp(seed, n, min_seg, penalty):
    if n < 2 * min_seg:
        return
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) * rng.choice([0.2, 1.0, 3.0], size=n) + rng.choice([0.0, 4.0], size=n)
    res = pelt(x, penalty, min_seg)
    best, cps = oracles.full_dp(n, oracle_cost(x), penalty, min_seg)
    assert res.cost_total == pytest.approx(best, rel=1e-9, abs=1e-9)
    bounds = [0, *res.changepoints, n]
    assert all(b - a >= min_seg for a, b in zip(bounds, bounds[1:]))
    if not math.isclose(segmentation_cost(GaussianCost(x), cps, penalty), best, rel_tol=1e-12):
        return
    assert list(res.changepoints) == cps or math.isclose(
        segmentation_cost(GaussianCost(x), cps, penalty), res.cost_total, rel_tol=1e-9)


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.floats(-1e3, 1e3))
def test_invariant_to_constant_shift(seed, c):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.standard_normal(60), 3 + 2 * rng.standard_normal(60)])
    assert pelt(x, None, 5).changepoints == pelt(x + c, None, 5).changepoints


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.lists(st.floats(0.5, 60.0), min_size=2, max_size=5))
def test_penalty_monotonicity(seed, penalties):
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.standard_normal(50), 2 + rng.standard_normal(50), 3 * rng.standard_normal(50)])
    counts = [len(pelt(x, p, 3).changepoints) for p in sorted(penalties)]
    assert counts == sorted(counts, reverse=True)


def test_primary_is_largest_removal_gain():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.standard_normal(100), 1.0 + rng.standard_normal(100), 8 + rng.standard_normal(100)])
    res = pelt(x, None, 10)
    assert len(res.changepoints) == 2
    assert abs(res.primary - 200) <= 3


def test_argument_errors():
    with pytest.raises(SignalLengthError):
        pelt(np.zeros(9), min_seg=5)
    with pytest.raises(InvalidSpecError):
        pelt(np.zeros(20), penalty=0.0)
    with pytest.raises(InvalidSpecError):
        pelt(np.zeros(20), min_seg=0)


def hold_onset_session(seed):
    protocol = synth.Protocol("hold", [("normal", 180.0), ("hold", 120.0)])
    s = synth.generate_session(synth.HEALTHY, protocol, seed=seed)
    s.filtered = preprocess(s.raw)
    return s


@pytest.mark.parametrize("seed", range(5))
def test_hold_onset_located(seed):
    s = hold_onset_session(seed)
    res = detect_primary(s)
    assert res.source == "pelt"
    assert abs(res.primary / s.sample_rate - 180.0) <= 2.0
    before, after, thirty = segment_session(s, res)
    assert len(before) == res.primary and len(before) + len(after) == len(s.raw)
    assert len(thirty) == 300


def test_thirty_window_clipped_near_end():
    x = TimeSeries(np.zeros(3000), 10.0)
    _, after, thirty = segment_windows(x, 2900)
    assert len(after) == 100 and len(thirty) == 100


def test_normal_session_rejected():
    s = synth.generate_session(synth.HEALTHY, synth.Protocol.normal(), seed=0)
    with pytest.raises(ValueError):
        detect_primary(s)
    with pytest.raises(ValueError):
        segment_session(s)


def test_protocol_fallback():
    # a flat recording has no change point; the annotated boundary takes over
    s = synth.generate_session(synth.HEALTHY, synth.Protocol.hold(), seed=0)
    s.raw = TimeSeries(np.random.default_rng(0).standard_normal(len(s.raw)), s.sample_rate)
    res = detect_primary(s)
    assert res.source == "protocol" and res.primary == s.phase_boundary()
    with pytest.raises(NoChangePointError):
        detect_primary(s, fallback=False)


def test_json_dump():
    res = pelt(step_series(), None, 50)
    d = res.to_json(10.0)
    assert set(d) == {"changepoints_s", "primary_s", "penalty", "cost", "source"}
    assert d["penalty"] == pytest.approx(3 * math.log(1000))
