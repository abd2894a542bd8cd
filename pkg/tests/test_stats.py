import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from respdx.errors import DegenerateVarianceError
from respdx.stats import (kolmogorov_q, ks_exact_pvalue, ks_statistic, ks_two_sample, rank_features,
                          t_paired, t_two_sample, t_two_sided_p)

samples = st.lists(st.integers(-20, 20).map(float), min_size=1, max_size=15)


def test_ks_examples():
    r = ks_two_sample([1, 2, 3], [1, 2, 3])
    assert r.statistic == 0.0 and r.p_value == 1.0
    assert ks_statistic([1, 2], [3, 4]) == 1.0
    assert ks_statistic([1, 3, 5], [2, 4, 6]) == pytest.approx(1 / 3, abs=1e-15)


def test_ks_rejects_empty():
    with pytest.raises(ValueError):
        ks_two_sample([], [1.0])


@given(samples, samples)
def test_ks_statistic_matches_enumeration(a, b):
    d = ks_statistic(a, b)
    assert d == pytest.approx(oracles.ks_by_enumeration(a, b), abs=1e-12)
    assert 0.0 <= d <= 1.0
    assert (d == 0) == (oracles.ks_by_enumeration(a, b) == 0)


@given(samples, samples)
def test_ks_invariant_to_monotone_transform(a, b):
    f = lambda v: [math.exp(x / 5.0) + 3 * x for x in v]
    assert ks_statistic(f(a), f(b)) == ks_statistic(a, b)


@settings(max_examples=40)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**31))
def test_exact_p_matches_path_enumeration(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(n), rng.standard_normal(m)
    d = ks_statistic(a, b)
    assert ks_exact_pvalue(d, n, m) == pytest.approx(oracles.ks_exact_p_by_paths(d, n, m), abs=1e-12)


def test_small_samples_use_exact_p():
    a, b = [1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]
    r = ks_two_sample(a, b)
    # only 2 of the 70 interleavings separate the samples completely
    assert r.p_value == pytest.approx(2 / 70, abs=1e-15)


@given(st.floats(0.05, 3.0))
def test_kolmogorov_q_matches_series(lam):
    assert kolmogorov_q(lam) == pytest.approx(oracles.kolmogorov_tail_by_series(lam), abs=1e-6)


def test_large_sample_p_uses_corrected_lambda():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal(40), rng.standard_normal(30) + 0.5
    r = ks_two_sample(a, b)
    ne = 40 * 30 / 70
    lam = (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * r.statistic
    assert r.p_value == pytest.approx(oracles.kolmogorov_tail_by_series(lam), abs=1e-6)


def test_t_two_sample_examples():
    r = t_two_sample([1, 2, 3], [4, 5, 6])
    assert r.statistic == pytest.approx(-3.674, abs=5e-4) and r.df == 4
    assert r.p_value == pytest.approx(0.0213, abs=5e-5)
    assert r.p_value == pytest.approx(oracles.student_t_two_sided_p(r.statistic, 4), abs=1e-6)
    r = t_two_sample([1, 2, 3], [1, 2, 3])
    assert r.statistic == 0.0 and r.p_value == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DegenerateVarianceError):
        t_two_sample([0, 0, 0], [0, 0, 0])


def test_paired_examples():
    r = t_paired([1, 2, 3])
    assert r.statistic == pytest.approx(3.4641, abs=5e-5) and r.df == 2
    assert r.p_value == pytest.approx(0.0742, abs=5e-5)
    assert r.p_value == pytest.approx(oracles.student_t_two_sided_p(r.statistic, 2), abs=1e-6)
    r = t_paired([0.0, 0.0, 0.0])
    assert r.statistic == 0.0 and r.p_value == 1.0
    with pytest.raises(DegenerateVarianceError):
        t_paired([1, 1, 1])


@given(st.floats(-30, 30), st.integers(1, 60))
def test_t_p_matches_integration(t, df):
    assert t_two_sided_p(t, df) == pytest.approx(oracles.student_t_two_sided_p(t, df), abs=1e-6)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=12), st.lists(st.floats(-50, 50), min_size=2, max_size=12))
def test_t_two_sample_antisymmetric(a, b):
    try:
        ab = t_two_sample(a, b)
    except DegenerateVarianceError:
        return
    ba = t_two_sample(b, a)
    assert ba.statistic == pytest.approx(-ab.statistic, rel=1e-12, abs=1e-12)
    assert ba.p_value == pytest.approx(ab.p_value, rel=1e-12, abs=1e-15)
    assert 0.0 <= ab.p_value <= 1.0


def ranking_table(seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat([1, 0], 30)
    same = rng.standard_normal(60)
    shifted = rng.standard_normal(60) + 3.0 * labels
    const = np.ones(60)
    return np.column_stack([same, shifted, const]), labels, ["same", "shifted", "const"]


def test_rank_features_examples():
    x, y, names = ranking_table()
    report = rank_features(x, y, names)
    ranked = report.ranked
    assert ranked[0].name == "shifted"
    assert ranked[-1].name == "const" and ranked[-1].ks_statistic == 0.0
    assert sorted(r.rank for r in ranked) == [1, 2, 3]
    # fewer than 8 features: all are retained by the top-up rule
    assert report.selected == ["shifted", "same", "const"]


def test_selection_threshold_and_top_up():
    rng = np.random.default_rng(4)
    y = np.repeat([1, 0], 40)
    cols = [rng.standard_normal(80) + (2.0 * y if k < 10 else 0.0) for k in range(20)]
    report = rank_features(np.column_stack(cols), y, [f"f{k:02d}" for k in range(20)], min_selected=8)
    assert len(report.selected) >= 10
    assert all(r.p_value < 0.05 or r.rank <= 8 for r in report.ranked if r.selected)
    report = rank_features(np.column_stack(cols[10:]), y, [f"g{k}" for k in range(10)])
    assert len(report.selected) >= 8


def test_all_null_column_is_excluded_with_warning():
    x, y, names = ranking_table()
    x[:, 0] = np.nan
    report = rank_features(x, y, names)
    assert [r.name for r in report.ranked] == ["shifted", "const"]
    assert report.warnings[0]["feature"] == "same"


def test_ties_broken_by_name():
    y = np.repeat([1, 0], 5)
    col = np.arange(10.0)
    report = rank_features(np.column_stack([col, col]), y, ["b", "a"])
    assert [r.name for r in report.ranked] == ["a", "b"]


def test_ranking_json():
    x, y, names = ranking_table()
    d = rank_features(x, y, names).to_json()
    assert set(d["features"][0]) == {"name", "D", "p", "rank", "selected"}
