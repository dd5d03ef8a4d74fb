"""Simplified Safety-Stock MRP with order-cancellation pre-pass.

Arrivals are indexed by arrival day relative to the planning date ``t``:
index ``i`` is day ``t + i``. Placement of a standard order is implicitly
``LT`` days before its arrival index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import EPS, DailySeries, Day, PlanningParams, ReorderParams


@dataclass(frozen=True)
class MrpInput:
    x_t: float
    forecast: DailySeries
    std_arrivals: DailySeries
    exp_arrivals: DailySeries
    params: PlanningParams
    reorder: ReorderParams

    def __post_init__(self):
        h = self.params.horizon
        for name in ("forecast", "std_arrivals", "exp_arrivals"):
            if len(getattr(self, name)) != h:
                raise ValueError(f"{name} must have length H={h}")

    @classmethod
    def build(cls, x_t, forecast, params, reorder, std_arrivals=None, exp_arrivals=None,
              start: Day = 0) -> "MrpInput":
        h = params.horizon

        def series(v):
            arr = np.zeros(h) if v is None else np.asarray(v, dtype=np.float64)
            return DailySeries(start, arr)

        return cls(float(x_t), series(forecast), series(std_arrivals), series(exp_arrivals), params, reorder)


@dataclass(frozen=True)
class MrpOutput:
    std_arrivals: DailySeries
    exp_arrivals: DailySeries
    projected: DailySeries  # length H + 1, projected[0] == x_t
    cancelled: DailySeries  # SA quantity removed by the cancellation pass


def order_quantity(deficit: float, moq: float, rv: float) -> float:
    """Lot-sized standard order covering ``deficit``: ``MO + k * RV`` with k >= 0."""
    # EPS guards against float noise turning an exact multiple into one extra lot.
    k = max(math.ceil((deficit - moq) / rv - EPS), 0)
    return k * rv + moq


def cancel_orders(x_t: float, std_arrivals, exp_arrivals, forecast, lead_time: int,
                  ptf: int, ssv: float) -> np.ndarray:
    """Trim surplus standard arrivals in ``(PTF, LT]``, walking backward from LT."""
    sa = np.array(std_arrivals, dtype=np.float64)
    ea = np.asarray(exp_arrivals, dtype=np.float64)
    fc = np.asarray(forecast, dtype=np.float64)
    k = min(lead_time, len(sa) - 1)
    while k > ptf:
        surplus = x_t + sa[: k + 1].sum() + ea[: k + 1].sum() - fc[: k + 1].sum() - ssv
        if surplus <= 0:
            k -= 1
            continue
        if surplus > sa[k]:
            sa[k] = 0.0
        else:
            sa[k] = sa[k] - surplus
        k -= 1
    return sa


def mrp_arrays(x_t: float, forecast: np.ndarray, sa_in: np.ndarray, ea_in: np.ndarray,
               params: PlanningParams, ssv: float):
    """Array core of :func:`run_mrp`; returns ``(SA, EA, projected, cancelled)``."""
    h = params.horizon
    lt = params.lead_time
    elt = params.expedited_lead_time
    moq = params.min_order_qty
    rv = params.rounding_value

    sa = cancel_orders(x_t, sa_in, ea_in, forecast, lt, params.planning_time_fence, ssv)
    cancelled = np.asarray(sa_in, dtype=np.float64) - sa
    ea = np.array(ea_in, dtype=np.float64)
    fc = forecast
    x = np.empty(h + 1)
    x[0] = x_t

    for i in range(min(elt, h)):
        x[i + 1] = x[i] + sa[i] + ea[i] - fc[i]

    for i in range(elt, min(lt, h)):
        nxt = x[i] + sa[i] + ea[i] - fc[i]
        if nxt < -EPS:
            ea[i] += -nxt
        x[i + 1] = x[i] + sa[i] + ea[i] - fc[i]

    for i in range(lt, h):
        nxt = x[i] + sa[i] + ea[i] - fc[i]
        if nxt < ssv - EPS:
            sa[i] += order_quantity(ssv - nxt, moq, rv)
        x[i + 1] = x[i] + sa[i] + ea[i] - fc[i]

    return sa, ea, x, cancelled


def run_mrp(inp: MrpInput) -> MrpOutput:
    sa, ea, x, cancelled = mrp_arrays(
        inp.x_t,
        inp.forecast.values,
        inp.std_arrivals.values,
        inp.exp_arrivals.values,
        inp.params,
        inp.reorder.ssv,
    )
    start = inp.forecast.start
    return MrpOutput(
        DailySeries(start, sa),
        DailySeries(start, ea),
        DailySeries(start, x),
        DailySeries(start, cancelled),
    )


def apply_safety_time(forecast_row, st: int, tail=None) -> np.ndarray:
    """Present demand ``st`` days early.

    Demand for day ``i`` moves to day ``i - st``; whatever falls before day 0
    accumulates on day 0. ``tail`` supplies demand for the ``st`` days past
    the end of the row (zeros when omitted).
    """
    if st < 0:
        raise ValueError("safety time must be >= 0")
    row = np.asarray(forecast_row, dtype=np.float64)
    n = len(row)
    if st == 0 or n == 0:
        return row.copy()
    ext = np.zeros(n + st)
    ext[:n] = row
    if tail is not None:
        tail = np.asarray(tail, dtype=np.float64)[:st]
        ext[n : n + len(tail)] = tail
    out = ext[st : st + n].copy()
    out[0] += ext[:st].sum()
    return out
