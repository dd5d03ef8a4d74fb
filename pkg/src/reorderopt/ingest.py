"""Flat-file ingestion of ERP-style history into per-SKU datasets.

Expected layout of a data directory (UTF-8 CSV, header row, ISO dates)::

    sku_master.csv   sku_id, lead_time, expedited_lead_time, ptf, moq,
                     rounding_value, holding_cost, order_cost, target_sl,
                     horizon, forecast_cadence, actual_ssv, actual_st
    inventory.csv    sku_id, date, qty
    consumption.csv  sku_id, date, qty
    movements.csv    sku_id, date, misc_qty, blocked_qty
    forecasts.csv    sku_id, origin_date, target_date, qty
    orders.csv       sku_id, order_id, planned_date, planned_qty,
                     actual_date, actual_qty
"""
from __future__ import annotations

import bisect
import csv
import os
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from .domain import DailySeries, Day, PlanningParams, Window, day_of, iso


class IngestError(Exception):
    pass


class SchemaError(IngestError):
    pass


class ValidationError(IngestError):
    pass


FILES = {
    "sku_master.csv": ["sku_id", "lead_time", "expedited_lead_time", "ptf", "moq", "rounding_value",
                       "holding_cost", "order_cost", "target_sl", "horizon", "forecast_cadence",
                       "actual_ssv", "actual_st"],
    "inventory.csv": ["sku_id", "date", "qty"],
    "consumption.csv": ["sku_id", "date", "qty"],
    "movements.csv": ["sku_id", "date", "misc_qty", "blocked_qty"],
    "forecasts.csv": ["sku_id", "origin_date", "target_date", "qty"],
    "orders.csv": ["sku_id", "order_id", "planned_date", "planned_qty", "actual_date", "actual_qty"],
}
OPTIONAL_COLUMNS = {"orders.csv": {"actual_date", "actual_qty"}, "sku_master.csv": {"order_cost"}}


class ForecastMatrix:
    """Demand forecasts keyed by ``(origin, target)``.

    Lookups fall back to the nearest earlier origin that forecast the same
    target; a target nobody forecast reads as 0.
    """

    def __init__(self, entries: Mapping[Tuple[Day, Day], float], cadence: int = 1):
        if cadence < 1:
            raise ValueError("forecast cadence must be >= 1")
        self.cadence = cadence
        self.entries: Dict[Tuple[Day, Day], float] = {}
        by_target: Dict[Day, List[Tuple[Day, float]]] = defaultdict(list)
        for (origin, target), qty in entries.items():
            if target < origin:
                raise ValidationError(f"forecast target {iso(target)} precedes origin {iso(origin)}")
            if qty < 0:
                raise ValidationError(f"negative forecast for ({iso(origin)}, {iso(target)})")
            self.entries[(origin, target)] = float(qty)
            by_target[target].append((origin, float(qty)))
        self._by_target = {}
        for target, pairs in by_target.items():
            pairs.sort()
            self._by_target[target] = ([o for o, _ in pairs], [q for _, q in pairs])

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, ForecastMatrix) and self.cadence == other.cadence and self.entries == other.entries

    def lookup(self, origin: Day, target: Day) -> Optional[float]:
        hit = self._by_target.get(target)
        if hit is None:
            return None
        origins, qtys = hit
        idx = bisect.bisect_right(origins, origin) - 1
        if idx < 0:
            return None
        return qtys[idx]

    def value(self, origin: Day, target: Day) -> float:
        v = self.lookup(origin, target)
        return 0.0 if v is None else v

    def row(self, origin: Day, length: int, hold_last: bool = False) -> np.ndarray:
        """Forecast made at ``origin`` for ``[origin, origin + length)``.

        With ``hold_last`` a target nobody forecast repeats the previous
        day's value instead of reading 0.
        """
        out = np.zeros(length)
        prev = 0.0
        for i in range(length):
            v = self.lookup(origin, origin + i)
            if v is None:
                v = prev if hold_last else 0.0
            out[i] = v
            prev = v
        return out

    def origins(self) -> List[Day]:
        return sorted({o for o, _ in self.entries})


@dataclass(frozen=True)
class Order:
    order_id: str
    planned_date: Day
    planned_qty: float
    actual_date: Optional[Day] = None
    actual_qty: Optional[float] = None

    def __post_init__(self):
        if self.planned_qty <= 0:
            raise ValidationError(f"order {self.order_id}: planned_qty must be > 0")
        if (self.actual_date is None) != (self.actual_qty is None):
            raise ValidationError(f"order {self.order_id}: actual_date and actual_qty must be given together")
        if self.actual_qty is not None and self.actual_qty < 0:
            raise ValidationError(f"order {self.order_id}: actual_qty must be >= 0")

    @property
    def has_actuals(self) -> bool:
        return self.actual_date is not None


@dataclass(frozen=True)
class OrderLedger:
    orders: Tuple[Order, ...] = ()

    def planned_in(self, window: Window) -> List[Order]:
        a, b = window
        return [o for o in self.orders if a <= o.planned_date < b]

    def planned_arrivals(self, start: Day, length: int) -> np.ndarray:
        out = np.zeros(length)
        for o in self.orders:
            i = o.planned_date - start
            if 0 <= i < length:
                out[i] += o.planned_qty
        return out


@dataclass(frozen=True)
class SkuDataset:
    params: PlanningParams
    actual_inventory: DailySeries
    consumption: DailySeries
    misc_movements: DailySeries
    blocked_movements: DailySeries
    forecasts: ForecastMatrix
    orders: OrderLedger
    span: Window
    actual_ssv: float = 0.0
    actual_st: int = 0

    def __post_init__(self):
        for name in ("actual_inventory", "consumption", "misc_movements", "blocked_movements"):
            s = getattr(self, name)
            if s.span != self.span:
                raise ValidationError(f"{self.sku_id}: {name} does not cover the dataset span")
        h = self.params.horizon
        for o in self.orders.orders:
            if not self.span[0] <= o.planned_date < self.span[1] + h:
                raise ValidationError(
                    f"{self.sku_id}: order {o.order_id} planned {iso(o.planned_date)} outside span + horizon")
        for (origin, target) in self.forecasts.entries:
            if target - origin >= h:
                raise ValidationError(
                    f"{self.sku_id}: forecast ({iso(origin)}, {iso(target)}) beyond horizon {h}")

    @property
    def sku_id(self) -> str:
        return self.params.sku_id

    @property
    def movements(self) -> np.ndarray:
        return self.misc_movements.values + self.blocked_movements.values


def densify(series: Mapping[Day, float], span: Window) -> DailySeries:
    """Dense series over ``span`` with absent days filled by 0."""
    a, b = span
    if b < a:
        raise IndexError(f"invalid span [{a}, {b})")
    out = np.zeros(b - a)
    for day, qty in series.items():
        if not a <= day < b:
            raise IndexError(f"day {iso(day)} outside span [{iso(a)}, {iso(b)})")
        out[day - a] = qty
    return DailySeries(a, out)


# --- CSV reading -----------------------------------------------------------------

def _read_csv(root: str, name: str):
    path = os.path.join(root, name)
    if not os.path.exists(path):
        raise IngestError(f"missing input file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = set(FILES[name]) - OPTIONAL_COLUMNS.get(name, set())
        missing = required - set(header)
        if missing:
            raise SchemaError(f"{name}: missing columns {sorted(missing)}")
        # line 1 is the header
        return [(i + 2, row) for i, row in enumerate(reader)]


def _field(name, line, row, key, conv, optional=False):
    raw = row.get(key)
    if raw is None or raw.strip() == "":
        if optional:
            return None
        raise SchemaError(f"{name} row {line}: missing value for {key!r}")
    try:
        return conv(raw.strip())
    except ValueError as exc:
        raise SchemaError(f"{name} row {line}: bad {key!r} value {raw!r} ({exc})") from None


def _int(s: str) -> int:
    f = float(s)
    if f != int(f):
        raise ValueError("expected a whole number")
    return int(f)


def _read_tables(root: str, skus: Optional[Iterable[str]] = None):
    wanted = None if skus is None else set(skus)
    tables = {}
    for name in FILES:
        rows = _read_csv(root, name)
        if wanted is not None:
            rows = [(ln, r) for ln, r in rows if (r.get("sku_id") or "").strip() in wanted]
        tables[name] = rows
    return tables


def _daily(name, rows, key, seen_key="date"):
    out: Dict[str, Dict[Day, float]] = defaultdict(dict)
    for line, row in rows:
        sku = _field(name, line, row, "sku_id", str)
        day = _field(name, line, row, seen_key, day_of)
        if day in out[sku]:
            raise SchemaError(f"{name} row {line}: duplicate row for ({sku}, {iso(day)})")
        out[sku][day] = _field(name, line, row, key, float)
    return out


def _build_datasets(tables) -> Dict[str, SkuDataset]:
    master = {}
    for line, row in tables["sku_master.csv"]:
        n = "sku_master.csv"
        sku = _field(n, line, row, "sku_id", str)
        if sku in master:
            raise SchemaError(f"{n} row {line}: duplicate sku {sku!r}")
        try:
            params = PlanningParams(
                sku_id=sku,
                lead_time=_field(n, line, row, "lead_time", _int),
                expedited_lead_time=_field(n, line, row, "expedited_lead_time", _int),
                planning_time_fence=_field(n, line, row, "ptf", _int),
                min_order_qty=_field(n, line, row, "moq", float),
                rounding_value=_field(n, line, row, "rounding_value", float),
                holding_cost=_field(n, line, row, "holding_cost", float),
                order_cost=_field(n, line, row, "order_cost", float, optional=True) or 0.0,
                target_service_level=_field(n, line, row, "target_sl", float),
                horizon=_field(n, line, row, "horizon", _int),
                forecast_cadence=_field(n, line, row, "forecast_cadence", _int, optional=True) or 1,
            )
        except ValueError as exc:
            raise ValidationError(f"{n} row {line}: {exc}") from None
        master[sku] = (
            params,
            _field(n, line, row, "actual_ssv", float, optional=True) or 0.0,
            _field(n, line, row, "actual_st", _int, optional=True) or 0,
        )

    inventory = _daily("inventory.csv", tables["inventory.csv"], "qty")
    consumption = _daily("consumption.csv", tables["consumption.csv"], "qty")
    misc = _daily("movements.csv", tables["movements.csv"], "misc_qty")
    blocked = _daily("movements.csv", tables["movements.csv"], "blocked_qty")

    forecasts: Dict[str, Dict[Tuple[Day, Day], float]] = defaultdict(dict)
    for line, row in tables["forecasts.csv"]:
        n = "forecasts.csv"
        sku = _field(n, line, row, "sku_id", str)
        key = (_field(n, line, row, "origin_date", day_of), _field(n, line, row, "target_date", day_of))
        if key in forecasts[sku]:
            raise SchemaError(f"{n} row {line}: duplicate forecast ({sku}, {iso(key[0])}, {iso(key[1])})")
        qty = _field(n, line, row, "qty", float)
        if key[1] < key[0]:
            raise ValidationError(f"{n} row {line}: target_date precedes origin_date")
        forecasts[sku][key] = qty

    orders: Dict[str, List[Order]] = defaultdict(list)
    seen_orders = set()
    for line, row in tables["orders.csv"]:
        n = "orders.csv"
        sku = _field(n, line, row, "sku_id", str)
        oid = _field(n, line, row, "order_id", str)
        if (sku, oid) in seen_orders:
            raise SchemaError(f"{n} row {line}: duplicate order ({sku}, {oid})")
        seen_orders.add((sku, oid))
        try:
            orders[sku].append(Order(
                order_id=oid,
                planned_date=_field(n, line, row, "planned_date", day_of),
                planned_qty=_field(n, line, row, "planned_qty", float),
                actual_date=_field(n, line, row, "actual_date", day_of, optional=True),
                actual_qty=_field(n, line, row, "actual_qty", float, optional=True),
            ))
        except ValidationError as exc:
            raise ValidationError(f"{n} row {line}: {exc}") from None

    out = {}
    for sku, (params, actual_ssv, actual_st) in master.items():
        days = [d for src in (inventory, consumption, misc) for d in src.get(sku, {})]
        if not days:
            raise ValidationError(f"{sku}: no daily inventory/consumption/movement rows")
        span = (min(days), max(days) + 1)
        out[sku] = SkuDataset(
            params=params,
            actual_inventory=densify(inventory.get(sku, {}), span),
            consumption=densify(consumption.get(sku, {}), span),
            misc_movements=densify(misc.get(sku, {}), span),
            blocked_movements=densify(blocked.get(sku, {}), span),
            forecasts=ForecastMatrix(forecasts.get(sku, {}), params.forecast_cadence),
            orders=OrderLedger(tuple(sorted(orders.get(sku, []), key=lambda o: (o.planned_date, o.order_id)))),
            span=span,
            actual_ssv=actual_ssv,
            actual_st=actual_st,
        )
    return out


def load_fleet(root: str, skus: Optional[Iterable[str]] = None) -> Dict[str, SkuDataset]:
    """Load every SKU in ``sku_master.csv`` (or only ``skus``)."""
    fleet = _build_datasets(_read_tables(root, skus))
    if skus is not None:
        missing = [s for s in skus if s not in fleet]
        if missing:
            raise IngestError(f"sku(s) not in sku_master.csv: {missing}")
    return fleet


def load_dataset(root: str, sku_id: str) -> SkuDataset:
    return load_fleet(root, [sku_id])[sku_id]


# --- CSV writing -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_fleet(root: str, datasets: Iterable[SkuDataset]) -> None:
    """Write datasets in the layout :func:`load_fleet` reads."""
    os.makedirs(root, exist_ok=True)
    datasets = list(datasets)
    rows = {name: [] for name in FILES}
    for ds in datasets:
        p = ds.params
        rows["sku_master.csv"].append([
            p.sku_id, p.lead_time, p.expedited_lead_time, p.planning_time_fence, _fmt(p.min_order_qty),
            _fmt(p.rounding_value), _fmt(p.holding_cost), _fmt(p.order_cost), _fmt(p.target_service_level),
            p.horizon, p.forecast_cadence, _fmt(ds.actual_ssv), ds.actual_st])
        for i in range(ds.span[1] - ds.span[0]):
            d = iso(ds.span[0] + i)
            rows["inventory.csv"].append([p.sku_id, d, _fmt(ds.actual_inventory.values[i])])
            rows["consumption.csv"].append([p.sku_id, d, _fmt(ds.consumption.values[i])])
            rows["movements.csv"].append(
                [p.sku_id, d, _fmt(ds.misc_movements.values[i]), _fmt(ds.blocked_movements.values[i])])
        for (o, t), q in sorted(ds.forecasts.entries.items()):
            rows["forecasts.csv"].append([p.sku_id, iso(o), iso(t), _fmt(q)])
        for od in ds.orders.orders:
            rows["orders.csv"].append([
                p.sku_id, od.order_id, iso(od.planned_date), _fmt(od.planned_qty),
                "" if od.actual_date is None else iso(od.actual_date),
                "" if od.actual_qty is None else _fmt(od.actual_qty)])
    for name, header in FILES.items():
        with open(os.path.join(root, name), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows[name])
