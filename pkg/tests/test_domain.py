import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reorderopt.domain import (DailySeries, PlanningParams, ReorderParams, Trajectory, date_of, day_of,
                               holding_cost, iso, level_set, service_level)

floats = st.floats(-1e6, 1e6, allow_nan=False)


def traj(values, start=0):
    return Trajectory.from_arrays(start, values)


def test_day_roundtrip():
    d = day_of("2020-04-01")
    assert iso(d) == "2020-04-01"
    assert date_of(d) == dt.date(2020, 4, 1)
    assert day_of(dt.date(2020, 4, 2)) - d == 1


def test_planning_params_validation():
    PlanningParams("a", 3, 1, 0, 0, 1, 1, 0.9, 10)
    with pytest.raises(ValueError):
        PlanningParams("a", 3, 4, 0, 0, 1, 1, 0.9, 10)  # ELT > LT
    with pytest.raises(ValueError):
        PlanningParams("a", 11, 1, 0, 0, 1, 1, 0.9, 10)  # LT > H
    with pytest.raises(ValueError):
        PlanningParams("a", 3, 1, 0, 0, 0, 1, 0.9, 10)  # RV = 0
    with pytest.raises(ValueError):
        PlanningParams("a", 3, 1, 0, 0, 1, 1, 0.9, 10, seeding_window=11)
    assert PlanningParams("a", 3, 1, 0, 0, 1, 1, 0.9, 10).seeding_window == 3


def test_reorder_params_non_negative():
    with pytest.raises(ValueError):
        ReorderParams(-1, 0)
    with pytest.raises(ValueError):
        ReorderParams(0, -1)


def test_daily_series_window_and_bounds():
    s = DailySeries(10, [1, 2, 3])
    assert s.span == (10, 13)
    assert s.window(11, 13).tolist() == [2, 3]
    assert s.at(12) == 3
    with pytest.raises(IndexError):
        s.window(9, 11)
    with pytest.raises(IndexError):
        s.at(13)
    with pytest.raises(ValueError):
        s.values[0] = 5


def test_trajectory_alignment_checked():
    with pytest.raises(ValueError):
        Trajectory(0, DailySeries(0, [1, 2]), DailySeries(0, [0]), DailySeries(0, [0, 0]), DailySeries(0, [0, 0]))


def test_service_level_examples():
    assert service_level(traj([5, 3, 0, -1, 2])) == 0.8
    assert service_level(traj([1, 2, 3])) == 1.0
    assert service_level(traj([-1, -2])) == 0.0
    assert service_level(traj([5, 3, 0, -1, 2], start=4), (7, 9)) == 0.5


def test_service_level_range_errors():
    t = traj([1, 2, 3])
    with pytest.raises(IndexError):
        service_level(t, (1, 1))
    with pytest.raises(IndexError):
        service_level(t, (0, 4))


def test_holding_cost_examples():
    assert holding_cost(traj([2, 2]), 1) == 4
    assert holding_cost(traj([-5, 3]), 2) == 6
    assert holding_cost(traj([7, -1, 3]), 0) == 0


@given(st.lists(floats, min_size=1, max_size=30), st.floats(1e-3, 1e3))
def test_level_set_scale_invariant(xs, c):
    x = np.array(xs)
    assert np.array_equal(level_set(x), level_set(c * x))


@given(st.lists(floats, min_size=1, max_size=30), st.floats(0, 1e6))
def test_service_level_monotone_under_lift(xs, h):
    assert service_level(traj(np.array(xs) + h)) >= service_level(traj(xs))


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=30), st.floats(0, 100), st.floats(0, 100))
def test_holding_cost_linear_in_rate(xs, a, b):
    t = traj(xs)
    assert holding_cost(t, a + b) == pytest.approx(holding_cost(t, a) + holding_cost(t, b), rel=1e-9, abs=1e-6)


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=30), st.floats(0, 1e3))
def test_holding_cost_monotone_in_inventory(xs, h):
    assert holding_cost(traj(np.array(xs) + h), 1.5) >= holding_cost(traj(xs), 1.5)
