import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reorderopt.domain import PlanningParams
from reorderopt.ingest import Order, OrderLedger
from reorderopt.synthetic import Scenario, generate
from reorderopt.uncertainty import (ConfigurationError, EmpiricalDistribution, build_u_sq, build_u_st,
                                    build_uncertainty_set, clip_df, clip_residuals, draw, percentile, smooth_df,
                                    stream, usw_initial_length, usw_window)


def test_percentile_nearest_rank():
    d = EmpiricalDistribution([0, 1, 3, 3, 5, 6], "DF")
    assert percentile(d, 0.5) == 3
    assert percentile(d, 1.0) == 6
    assert percentile(d, 0.0) == 0
    assert percentile(d, 0.51) == 3
    assert percentile(d, 0.67) == 5
    with pytest.raises(ValueError):
        percentile(d, 1.1)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40), st.floats(0, 1))
def test_percentile_is_a_sample_and_monotone(xs, p):
    v = percentile(xs, p)
    assert v in xs
    assert percentile(xs, min(1.0, p + 0.1)) >= v


def test_distribution_label_constraints():
    with pytest.raises(ValueError):
        EmpiricalDistribution([], "MM")
    with pytest.raises(ValueError):
        EmpiricalDistribution([1.0], "SQ")
    with pytest.raises(ValueError):
        EmpiricalDistribution([1.5], "ST")
    with pytest.raises(ValueError):
        EmpiricalDistribution([0.0], "XX")


def test_usw_initial_length():
    assert usw_initial_length(6) == 30
    assert usw_initial_length(30) == 44


def test_usw_window_modes():
    p = PlanningParams("a", 6, 1, 0, 0, 1, 1, 0.9, 30)
    assert usw_window(100, (100, 190), p) == (70, 100)
    assert usw_window(130, (100, 190), p) == (70, 130)
    assert usw_window(150, (10, 100), p, mode="training") == (10, 100)
    with pytest.raises(ConfigurationError):
        usw_window(99, (100, 190), p)
    with pytest.raises(ConfigurationError):
        usw_window(100, (100, 190), p, mode="other")


def oracle_clip(xs, n):
    thr = statistics.median(xs) + n * statistics.stdev(xs)
    return [min(x, thr) for x in xs]


def test_clip_examples():
    assert clip_df([1, 2, 3, 100], 5).tolist() == [1, 2, 3, 100]
    capped = clip_df([1, 2, 3, 100], 1)
    assert capped[:3].tolist() == [1, 2, 3]
    assert capped[3] == pytest.approx(51.5068, abs=1e-4)
    assert clip_residuals([0, 0, 0, 100], 1).tolist() == [0, 0, 0, 50]
    assert clip_residuals([-100, 0, 0, 0], 1).tolist() == [-100, 0, 0, 0]
    assert clip_residuals([7.0], 1).tolist() == [7.0]


@given(st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=2, max_size=30), st.floats(0.1, 6))
def test_clip_matches_oracle_and_only_lowers(xs, n):
    out = clip_residuals(xs, n)
    assert np.allclose(out, oracle_clip(xs, n), rtol=1e-9, atol=1e-9)
    assert np.all(out <= np.asarray(xs))


def test_smooth_examples():
    assert smooth_df([0, 6, 0], 2).tolist() == [3, 2, 3]
    assert smooth_df([0, 6, 0], 1).tolist() == [0, 6, 0]
    assert smooth_df([4, 4, 4, 4], 4).tolist() == [4, 4, 4, 4]
    assert smooth_df([3], 6).tolist() == [3]


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=20), st.integers(1, 30))
def test_smooth_matches_truncated_window_oracle(xs, d):
    h = d // 2
    want = [np.mean(xs[max(0, i - h) : i + h + 1]) for i in range(len(xs))]
    assert np.allclose(smooth_df(xs, d), want, atol=1e-9)


def test_degenerate_when_no_delivered_orders():
    ledger = OrderLedger([Order("o", 50, 10.0)])
    assert build_u_st(ledger, (0, 10)).samples.tolist() == [0]
    assert build_u_sq(ledger, (0, 10)).samples.tolist() == [0]


def test_delay_and_shortfall_samples():
    ledger = OrderLedger([Order("a", 3, 10.0, 5, 8.0), Order("b", 4, 10.0, 4, 12.0), Order("c", 20, 5.0, 21, 5.0)])
    assert sorted(build_u_st(ledger, (0, 10)).samples.tolist()) == [0, 2]
    assert sorted(build_u_sq(ledger, (0, 10)).samples.tolist()) == [-2, 0]


def test_stream_deterministic_and_distinct():
    a = stream(1, "sku", 5, 0, "DF").random(4)
    assert np.array_equal(a, stream(1, "sku", 5, 0, "DF").random(4))
    for other in (stream(2, "sku", 5, 0, "DF"), stream(1, "sku2", 5, 0, "DF"), stream(1, "sku", 6, 0, "DF"),
                  stream(1, "sku", 5, 1, "DF"), stream(1, "sku", 5, 0, "MM")):
        assert not np.array_equal(a, other.random(4))


def test_draw_from_support():
    d = EmpiricalDistribution([1.0, 2.0, 3.0], "MM")
    xs = draw(d, stream(0, "s", 0, 0, "MM"), size=200)
    assert set(xs.tolist()) == {1.0, 2.0, 3.0}


def test_build_uncertainty_set_zero_noise():
    ds = generate(Scenario(n_days=80, demand_sd=2.0, horizon=20), seed=1)
    a = ds.span[0]
    uset, st_ = build_uncertainty_set(ds, (a + 30, a + 80), stp=1.0)
    assert st_ == 0
    for d in (uset.u_mm, uset.u_sq, uset.u_st, uset.u_df):
        assert d.is_zero


def test_build_uncertainty_set_stp_maps_to_delay_percentile():
    ds = generate(Scenario(n_days=120, delay_probs=(0.5, 0.3, 0.2), noise_sd=1.0), seed=2)
    a = ds.span[0]
    uset, st_ = build_uncertainty_set(ds, (a + 40, a + 120), stp=1.0)
    assert st_ == int(uset.u_st.samples.max())
    _, st0 = build_uncertainty_set(ds, (a + 40, a + 120), stp=0.0)
    assert st0 == int(uset.u_st.samples.min())
    with pytest.raises(ConfigurationError):
        build_uncertainty_set(ds, (a + 40, a + 500), stp=0.5)
