"""Calendar-indexed value types shared across the engine.

Days are plain integer ordinals counted from ``EPOCH``; every lead time and
window is a whole number of days.
"""
from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

Day = int
Window = Tuple[Day, Day]

EPOCH = _dt.date(1970, 1, 1)

# Absolute tolerance for the MRP reorder triggers and level-set comparisons.
EPS = 1e-9


def day_of(value: _dt.date | str) -> Day:
    if isinstance(value, str):
        value = _dt.date.fromisoformat(value.strip())
    return (value - EPOCH).days


def date_of(day: Day) -> _dt.date:
    return EPOCH + _dt.timedelta(days=int(day))


def iso(day: Day) -> str:
    return date_of(day).isoformat()


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("series values must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PlanningParams:
    """Static per-SKU planning data consumed by the MRP and the optimizer."""

    sku_id: str
    lead_time: int
    expedited_lead_time: int
    planning_time_fence: int
    min_order_qty: float
    rounding_value: float
    holding_cost: float
    target_service_level: float
    horizon: int
    order_cost: float = 0.0
    seeding_window: int | None = None
    forecast_cadence: int = 1

    def __post_init__(self):
        if self.seeding_window is None:
            object.__setattr__(self, "seeding_window", self.lead_time)
        if self.lead_time <= 0:
            raise ValueError(f"{self.sku_id}: lead_time must be > 0")
        if not 0 <= self.expedited_lead_time <= self.lead_time <= self.horizon:
            raise ValueError(f"{self.sku_id}: need 0 <= ELT <= LT <= horizon")
        if self.planning_time_fence < 0:
            raise ValueError(f"{self.sku_id}: planning_time_fence must be >= 0")
        if self.min_order_qty < 0:
            raise ValueError(f"{self.sku_id}: min_order_qty must be >= 0")
        if self.rounding_value <= 0:
            raise ValueError(f"{self.sku_id}: rounding_value must be > 0")
        if self.holding_cost < 0 or self.order_cost < 0:
            raise ValueError(f"{self.sku_id}: costs must be >= 0")
        if not 0.0 <= self.target_service_level <= 1.0:
            raise ValueError(f"{self.sku_id}: target_service_level must be in [0, 1]")
        if not 0 <= self.seeding_window <= self.horizon:
            raise ValueError(f"{self.sku_id}: seeding_window must be in [0, horizon]")
        if self.forecast_cadence < 1:
            raise ValueError(f"{self.sku_id}: forecast_cadence must be >= 1")


@dataclass(frozen=True)
class ReorderParams:
    ssv: float
    st: int

    def __post_init__(self):
        if self.ssv < 0 or self.st < 0:
            raise ValueError("reorder parameters must be non-negative")


@dataclass(frozen=True)
class DailySeries:
    """Dense day-indexed series covering ``[start, start + len(values))``."""

    start: Day
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    @classmethod
    def zeros(cls, start: Day, length: int) -> "DailySeries":
        return cls(start, np.zeros(length))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> Day:
        return self.start + len(self.values)

    @property
    def span(self) -> Window:
        return (self.start, self.end)

    def covers(self, window: Window) -> bool:
        return self.start <= window[0] and window[1] <= self.end

    def at(self, day: Day) -> float:
        if not self.start <= day < self.end:
            raise IndexError(f"day {day} outside series span {self.span}")
        return float(self.values[day - self.start])

    def window(self, a: Day, b: Day) -> np.ndarray:
        """Values for days in ``[a, b)``; the window must be inside the span."""
        if not (self.start <= a <= b <= self.end):
            raise IndexError(f"window [{a}, {b}) outside series span {self.span}")
        return self.values[a - self.start : b - self.start]

    def slice(self, a: Day, b: Day) -> "DailySeries":
        return DailySeries(a, self.window(a, b))


@dataclass(frozen=True)
class Trajectory:
    """Inventory path with the flows that produced it.

    ``inventory[i]`` is the stock on hand at the start of day ``start + i``;
    the flows of day ``i`` move it to ``inventory[i + 1]``.
    """

    start: Day
    inventory: DailySeries
    std_arrivals: DailySeries
    exp_arrivals: DailySeries
    consumption: DailySeries
    movements: DailySeries = field(default=None)

    def __post_init__(self):
        if self.movements is None:
            object.__setattr__(self, "movements", DailySeries.zeros(self.start, len(self.inventory)))
        n = len(self.inventory)
        for s in (self.std_arrivals, self.exp_arrivals, self.consumption, self.movements):
            if s.start != self.start or len(s) != n:
                raise ValueError("trajectory series must share start and length")

    @classmethod
    def from_arrays(cls, start: Day, inventory, std_arrivals=None, exp_arrivals=None,
                    consumption=None, movements=None) -> "Trajectory":
        n = len(inventory)
        z = np.zeros(n)

        def mk(v):
            return DailySeries(start, z if v is None else v)

        return cls(start, mk(inventory), mk(std_arrivals), mk(exp_arrivals), mk(consumption), mk(movements))

    def __len__(self) -> int:
        return len(self.inventory)

    @property
    def span(self) -> Window:
        return self.inventory.span

    def balance_residual(self) -> np.ndarray:
        """Violation of the stock balance identity, one entry per day transition."""
        x = self.inventory.values
        flow = (self.std_arrivals.values + self.exp_arrivals.values
                - self.consumption.values + self.movements.values)
        return x[1:] - (x[:-1] + flow[:-1])


def level_set(x) -> np.ndarray:
    """1 where inventory is non-negative, else 0."""
    return (np.asarray(x, dtype=np.float64) >= 0.0).astype(np.float64)


def fraction_nonnegative(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("service level over an empty window is undefined")
    return float(level_set(values).sum() / values.size)


def service_level(traj: Trajectory, window: Window | None = None) -> float:
    """Fraction of days in ``window`` whose inventory is non-negative."""
    if window is None:
        window = traj.span
    a, b = window
    if b <= a:
        raise IndexError(f"empty service-level window [{a}, {b})")
    return fraction_nonnegative(traj.inventory.window(a, b))


def holding_cost(traj: Trajectory | Sequence[float], rate: float) -> float:
    """Holding cost of a path; days with negative stock cost nothing."""
    x = traj.inventory.values if isinstance(traj, Trajectory) else np.asarray(traj, dtype=np.float64)
    return float(np.maximum(x, 0.0).sum() * rate)
