import csv
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reorderopt.domain import day_of
from reorderopt.ingest import (ForecastMatrix, IngestError, Order, SchemaError, ValidationError, densify,
                               load_dataset, load_fleet, write_fleet)
from reorderopt.synthetic import Scenario, generate


@pytest.fixture(scope="module")
def dataset():
    return generate(Scenario(n_days=40, horizon=10, lead_time=3, expedited_lead_time=1, noise_sd=1.0,
                             movement_sd=1.0, delay_probs=(0.6, 0.4), shortfall_prob=0.3, shortfall_frac=0.5),
                    seed=4)


@pytest.fixture
def data_dir(tmp_path, dataset):
    write_fleet(str(tmp_path), [dataset])
    return str(tmp_path)


def rewrite(path, fn):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = fn(rows)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def test_roundtrip_identity(data_dir, dataset):
    back = load_dataset(data_dir, dataset.sku_id)
    assert back.params == dataset.params
    assert back.span == dataset.span
    assert back.forecasts == dataset.forecasts
    assert back.orders == dataset.orders
    for name in ("actual_inventory", "consumption", "misc_movements", "blocked_movements"):
        assert np.array_equal(getattr(back, name).values, getattr(dataset, name).values)
    assert back.actual_ssv == dataset.actual_ssv


def test_span_matches_min_max_dates(data_dir, dataset):
    back = load_dataset(data_dir, dataset.sku_id)
    assert back.span == (day_of("2021-01-01"), day_of("2021-01-01") + 40)


def test_missing_file_named(data_dir):
    os.remove(os.path.join(data_dir, "orders.csv"))
    with pytest.raises(IngestError, match="orders.csv"):
        load_fleet(data_dir)


def test_missing_column_is_schema_error(data_dir):
    rewrite(os.path.join(data_dir, "consumption.csv"), lambda rows: [r[:2] for r in rows])
    with pytest.raises(SchemaError, match="qty"):
        load_fleet(data_dir)


def test_bad_value_cites_row(data_dir):
    def corrupt(rows):
        rows[3][2] = "abc"
        return rows
    rewrite(os.path.join(data_dir, "inventory.csv"), corrupt)
    with pytest.raises(SchemaError, match="row 4"):
        load_fleet(data_dir)


def test_duplicate_forecast_rejected(data_dir):
    rewrite(os.path.join(data_dir, "forecasts.csv"), lambda rows: rows + [rows[1]])
    with pytest.raises(SchemaError, match="duplicate"):
        load_fleet(data_dir)


def test_forecast_target_before_origin_rejected(data_dir):
    def corrupt(rows):
        rows[1][1], rows[1][2] = "2021-01-05", "2021-01-04"
        return rows
    rewrite(os.path.join(data_dir, "forecasts.csv"), corrupt)
    with pytest.raises(ValidationError):
        load_fleet(data_dir)


def test_order_with_qty_but_no_date_rejected(data_dir):
    def corrupt(rows):
        header = rows[0]
        rows[1][header.index("actual_date")] = ""
        rows[1][header.index("actual_qty")] = "3"
        return rows
    rewrite(os.path.join(data_dir, "orders.csv"), corrupt)
    with pytest.raises(ValidationError):
        load_fleet(data_dir)


def test_elt_above_lt_rejected(data_dir):
    def corrupt(rows):
        header = rows[0]
        rows[1][header.index("expedited_lead_time")] = "9"
        return rows
    rewrite(os.path.join(data_dir, "sku_master.csv"), corrupt)
    with pytest.raises(ValidationError, match="row 2"):
        load_fleet(data_dir)


def test_unknown_sku(data_dir):
    with pytest.raises(IngestError):
        load_dataset(data_dir, "nope")


def test_gaps_densified_with_zeros(data_dir, dataset):
    rewrite(os.path.join(data_dir, "consumption.csv"), lambda rows: rows[:5] + rows[6:])
    back = load_dataset(data_dir, dataset.sku_id)
    assert back.consumption.values[4] == 0.0
    assert back.consumption.values[3] == dataset.consumption.values[3]


def test_order_pairing_rule():
    with pytest.raises(ValidationError):
        Order("o", 0, 5.0, actual_qty=3.0)
    with pytest.raises(ValidationError):
        Order("o", 0, 0.0)


def test_forecast_lookup_falls_back_to_earlier_origin():
    fm = ForecastMatrix({(0, 5): 7.0, (2, 5): 9.0, (3, 6): 1.0})
    assert fm.value(2, 5) == 9.0
    assert fm.value(4, 5) == 9.0
    assert fm.value(1, 5) == 7.0
    assert fm.value(0, 6) == 0.0
    assert fm.row(3, 4, hold_last=True).tolist() == [0.0, 0.0, 9.0, 1.0]


def test_densify_examples():
    assert densify({2: 5}, (0, 4)).values.tolist() == [0, 0, 5, 0]
    assert densify({}, (0, 3)).values.tolist() == [0, 0, 0]
    assert densify({0: 1, 1: 2}, (0, 2)).values.tolist() == [1, 2]
    with pytest.raises(IndexError):
        densify({5: 1}, (0, 2))


@given(st.dictionaries(st.integers(0, 49), st.floats(-1e6, 1e6, allow_nan=False), max_size=50))
def test_densify_preserves_sum(m):
    assert densify(m, (0, 50)).values.sum() == pytest.approx(sum(m.values()), abs=1e-6)
