"""Seeded synthetic SKU histories for tests and experiment scripts.

The "actual" history is produced by running the same MRP daily with a fixed
safety stock, then letting reality deviate from the plan: demand differs
from the forecast, suppliers deliver late or short, and miscellaneous
movements add noise. Everything is drawn from one ``numpy`` generator so a
scenario is fully determined by its seed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .backtest import daily_replay
from .domain import DailySeries, Day, PlanningParams, ReorderParams, day_of
from .ingest import ForecastMatrix, Order, OrderLedger, SkuDataset


@dataclass(frozen=True)
class Scenario:
    """Knobs of one synthetic SKU.

    ``demand_sd``, ``noise_sd`` and ``bias`` may be given per day to make the
    uncertainty change over time; scalars apply uniformly.
    """

    sku_id: str = "SKU0"
    start: Day = day_of("2021-01-01")
    n_days: int = 240
    lead_time: int = 7
    expedited_lead_time: int = 2
    ptf: int = 0
    moq: float = 0.0
    rounding_value: float = 1.0
    holding_cost: float = 1.0
    order_cost: float = 0.0
    target_sl: float = 0.95
    horizon: int = 30
    demand_mean: float = 10.0
    demand_sd: object = 0.0  # true demand variability
    flat_forecast: bool = False  # forecast the mean demand instead of tracking actual demand
    noise_sd: object = 0.0  # forecast error sd (forecast = actual + bias + noise)
    bias: object = 0.0
    zero_forecast: bool = False
    movement_sd: float = 0.0
    delay_probs: Sequence[float] = (1.0,)  # P(delay = k days)
    shortfall_prob: float = 0.0
    shortfall_frac: float = 0.0
    actual_ssv: float = 20.0
    integer: bool = True

    def params(self) -> PlanningParams:
        return PlanningParams(
            sku_id=self.sku_id, lead_time=self.lead_time, expedited_lead_time=self.expedited_lead_time,
            planning_time_fence=self.ptf, min_order_qty=self.moq, rounding_value=self.rounding_value,
            holding_cost=self.holding_cost, target_service_level=self.target_sl, horizon=self.horizon,
            order_cost=self.order_cost,
        )


def _per_day(v, n: int) -> np.ndarray:
    """Scalar broadcast to ``n`` days, or a per-day array padded with its last value."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    return np.concatenate([arr[:n], np.full(max(0, n - arr.size), arr[-1])])


def generate(sc: Scenario, seed: int = 0) -> SkuDataset:
    rng = np.random.default_rng(seed)
    p = sc.params()
    n, h = sc.n_days, sc.horizon
    total = n + h

    demand = sc.demand_mean + _per_day(sc.demand_sd, total) * rng.standard_normal(total)
    demand = np.maximum(demand, 0.0)
    if sc.integer:
        demand = np.round(demand)
    noise = _per_day(sc.noise_sd, total)
    bias = _per_day(sc.bias, total)
    level = np.full(total, sc.demand_mean) if sc.flat_forecast else demand
    fc_target = level + bias + noise * rng.standard_normal(total)
    fc_target = np.maximum(fc_target, 0.0)
    if sc.integer:
        fc_target = np.round(fc_target)
    if sc.zero_forecast:
        fc_target = np.zeros(total)

    # forecasts are origin-independent: every origin sees the same value per target
    entries = {}
    for o in range(n):
        for i in range(h):
            entries[(sc.start + o, sc.start + o + i)] = float(fc_target[o + i])
    forecasts = ForecastMatrix(entries, p.forecast_cadence)

    movements = sc.movement_sd * rng.standard_normal(n)
    if sc.integer:
        movements = np.round(movements)
    probs = np.asarray(sc.delay_probs, dtype=np.float64)
    probs = probs / probs.sum()

    policy_rp = ReorderParams(sc.actual_ssv, 0)

    def perturb(i, qty, kind):
        delay = int(rng.choice(len(probs), p=probs))
        got = qty
        if rng.random() < sc.shortfall_prob:
            got = qty * (1.0 - sc.shortfall_frac)
            if sc.integer:
                got = float(np.floor(got))
        return delay, got

    x0 = sc.actual_ssv + sc.demand_mean * sc.lead_time
    run = daily_replay(x0, n, p, lambda i, st: fc_target[i : i + h], demand[:n], movements,
                       lambda i, _open: policy_rp, perturb=perturb)
    x = run.inventory
    orders: List[Order] = []
    for o in run.orders:
        oid = f"{sc.sku_id}-{len(orders):05d}"
        if o.arrival + o.delay < n:
            orders.append(Order(oid, sc.start + o.arrival, o.qty, sc.start + o.arrival + o.delay, o.received))
        else:
            orders.append(Order(oid, sc.start + o.arrival, o.qty))
    # orders still open at the end of the history keep only their plan
    for d in range(n, n + h):
        if run.planned[d] > 0:
            orders.append(Order(f"{sc.sku_id}-{len(orders):05d}", sc.start + d, float(run.planned[d])))

    span = (sc.start, sc.start + n)
    return SkuDataset(
        params=p,
        actual_inventory=DailySeries(sc.start, x),
        consumption=DailySeries(sc.start, demand[:n]),
        misc_movements=DailySeries(sc.start, movements),
        blocked_movements=DailySeries.zeros(sc.start, n),
        forecasts=forecasts,
        orders=OrderLedger(tuple(orders)),
        span=span,
        actual_ssv=sc.actual_ssv,
        actual_st=0,
    )


def fleet(n_skus: int, seed: int = 0, base: Optional[Scenario] = None, **overrides) -> Dict[str, SkuDataset]:
    """``n_skus`` SKUs with lead times, demand levels and noise varied per SKU."""
    base = replace(base or Scenario(), **overrides)
    rng = np.random.default_rng(seed)
    out = {}
    for k in range(n_skus):
        lt = int(rng.integers(3, 11))
        sc = replace(
            base,
            sku_id=f"SKU{k:03d}",
            lead_time=lt,
            expedited_lead_time=int(rng.integers(0, lt)),
            demand_mean=float(rng.integers(5, 30)),
            noise_sd=float(rng.uniform(0.5, 4.0)),
            movement_sd=float(rng.choice([0.0, 1.0])),
            holding_cost=float(rng.choice([0.5, 1.0, 2.0])),
            actual_ssv=float(rng.integers(10, 60)),
        )
        out[sc.sku_id] = generate(sc, seed=int(rng.integers(0, 2**31)))
    return out
