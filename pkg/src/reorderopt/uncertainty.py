"""Empirical uncertainty distributions sampled from a trailing history window.

Four residual sources are modelled, each as an equally-weighted list of
historical points:

* ``MM`` - daily sum of miscellaneous and blocked movements (inflow positive)
* ``SQ`` - per-order supplier shortfall, ``min(actual - planned, 0)``
* ``ST`` - per-order supplier delay in days, ``max(actual - planned, 0)``
* ``DF`` - daily forecast error, smoothed forecast minus actual consumption
"""
from __future__ import annotations

import csv
import logging
import math
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import EPS, DailySeries, Day, PlanningParams, Window, iso
from .ingest import ForecastMatrix, OrderLedger, SkuDataset

log = logging.getLogger(__name__)

LABELS = ("MM", "SQ", "ST", "DF")
_TAG_CODES = {"DF": 1, "MM": 2, "ST": 3, "SQ": 4, "OS": 5}

DEFAULT_N_C = 5.0
DEFAULT_N_U = 1.0
DEFAULT_B_USW = 14
DEFAULT_L_MIN = 30


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class EmpiricalDistribution:
    samples: np.ndarray
    label: str

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64).ravel()
        if s.size == 0:
            raise ValueError(f"empty {self.label} distribution")
        if self.label not in LABELS:
            raise ValueError(f"unknown distribution label {self.label!r}")
        if self.label == "SQ" and np.any(s > 0):
            raise ValueError("SQ samples must be <= 0")
        if self.label == "ST" and (np.any(s < 0) or np.any(s != np.round(s))):
            raise ValueError("ST samples must be non-negative whole days")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.samples == 0))


@dataclass(frozen=True)
class UncertaintySet:
    u_mm: EmpiricalDistribution
    u_sq: EmpiricalDistribution
    u_st: EmpiricalDistribution
    u_df: EmpiricalDistribution
    usw: Window

    @classmethod
    def zero(cls, usw: Window = (0, 1)) -> "UncertaintySet":
        return cls(*(EmpiricalDistribution([0.0], lab) for lab in LABELS), usw=usw)


# --- sampling ----------------------------------------------------------------------

def percentile(dist: EmpiricalDistribution | Sequence[float], p: float) -> float:
    """Nearest-rank percentile: sorted sample at 1-based rank ``ceil(p * n)``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"percentile level {p} outside [0, 1]")
    s = dist.samples if isinstance(dist, EmpiricalDistribution) else np.asarray(dist, dtype=np.float64)
    if s.size == 0:
        raise ValueError("percentile of an empty distribution")
    rank = max(1, math.ceil(p * s.size - EPS))
    return float(np.sort(s)[min(rank, s.size) - 1])


def stream(seed: int, sku_id: str, t: Day, r: int, tag: str) -> np.random.Generator:
    """Independent generator for one (seed, sku, sampling day, realization, purpose) tuple."""
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(sku_id.encode("utf-8")), int(t) + (1 << 31),
           int(r), _TAG_CODES[tag]]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def draw(dist: EmpiricalDistribution, rng: np.random.Generator, size=None):
    """Uniform draw with replacement from the historical points."""
    idx = rng.integers(0, len(dist), size=size)
    return dist.samples[idx] if size is not None else float(dist.samples[idx])


# --- uncertainty sampling window -------------------------------------------------

def usw_initial_length(lead_time: int, b_usw: int = DEFAULT_B_USW, l_min: int = DEFAULT_L_MIN) -> int:
    return max(l_min, lead_time + b_usw)


def usw_window(t: Day, period: Window, params: PlanningParams, b_usw: int = DEFAULT_B_USW,
               l_min: int = DEFAULT_L_MIN, mode: str = "validation") -> Window:
    """History window feeding the distributions at sampling day ``t``.

    In training mode this is the whole training ``period``. In validation mode
    the window ends at ``t`` and starts a fixed initial length before the
    period's first sampling day, so it grows as ``t`` advances.
    """
    if mode == "training":
        a, b = period
    elif mode == "validation":
        if t < period[0]:
            raise ConfigurationError(f"sampling day {iso(t)} precedes period start {iso(period[0])}")
        a, b = period[0] - usw_initial_length(params.lead_time, b_usw, l_min), t
    else:
        raise ConfigurationError(f"unknown USW mode {mode!r}")
    if b <= a:
        raise ConfigurationError("uncertainty sampling window is empty")
    return (a, b)


# --- clipping and smoothing ------------------------------------------------------

def _upper_clip(values: np.ndarray, n: float) -> np.ndarray:
    if n <= 0:
        raise ValueError("clipping multiplier must be > 0")
    if values.size < 2:
        return values.copy()
    threshold = np.median(values) + n * np.std(values, ddof=1)
    return np.minimum(values, threshold)


def _as_array(series):
    return series.values if isinstance(series, DailySeries) else np.asarray(series, dtype=np.float64)


def _like(series, values):
    return DailySeries(series.start, values) if isinstance(series, DailySeries) else values


def clip_df(series, n_c: float = DEFAULT_N_C):
    """Cap forecast values above ``median + n_c * std``; lower tail untouched."""
    return _like(series, _upper_clip(_as_array(series), n_c))


def clip_residuals(samples, n_u: float = DEFAULT_N_U):
    """Cap residuals above ``median + n_u * std``; lower tail untouched."""
    return _like(samples, _upper_clip(_as_array(samples), n_u))


def smooth_df(series, d: int = 1):
    """Centred moving average over ``[i - d/2, i + d/2]``.

    The window is truncated at the series edges and averaged over the days it
    actually covers.
    """
    if d < 1:
        raise ValueError("cadence must be >= 1")
    x = _as_array(series)
    half = d // 2
    if half == 0 or x.size == 0:
        return _like(series, x.copy())
    kernel = np.ones(2 * half + 1)
    # full convolution then trim, since mode="same" grows series shorter than the kernel
    sums = np.convolve(x, kernel)[half : half + x.size]
    counts = np.convolve(np.ones_like(x), kernel)[half : half + x.size]
    return _like(series, sums / counts)


# --- builders ----------------------------------------------------------------------

def _degenerate(label: str, what: str, usw: Window) -> EmpiricalDistribution:
    log.warning("no %s in USW [%s, %s); using degenerate {0} %s distribution",
                what, iso(usw[0]), iso(usw[1]), label)
    return EmpiricalDistribution([0.0], label)


def build_u_mm(dataset: SkuDataset, usw: Window, n_u: float = DEFAULT_N_U) -> EmpiricalDistribution:
    a, b = usw
    raw = dataset.misc_movements.window(a, b) + dataset.blocked_movements.window(a, b)
    return EmpiricalDistribution(clip_residuals(raw, n_u), "MM")


def _orders_with_actuals(ledger: OrderLedger, usw: Window):
    return [o for o in ledger.planned_in(usw) if o.has_actuals]


def build_u_sq(ledger: OrderLedger, usw: Window) -> EmpiricalDistribution:
    orders = _orders_with_actuals(ledger, usw)
    if not orders:
        return _degenerate("SQ", "delivered orders", usw)
    return EmpiricalDistribution([min(o.actual_qty - o.planned_qty, 0.0) for o in orders], "SQ")


def build_u_st(ledger: OrderLedger, usw: Window) -> EmpiricalDistribution:
    orders = _orders_with_actuals(ledger, usw)
    if not orders:
        return _degenerate("ST", "delivered orders", usw)
    return EmpiricalDistribution([max(o.actual_date - o.planned_date, 0) for o in orders], "ST")


def extract_df_1d(forecasts: ForecastMatrix, usw: Window, lead_time: int, st: int) -> DailySeries:
    """For each day in the window, the forecast issued ``LT + ST`` days earlier."""
    a, b = usw
    offset = lead_time + st
    return DailySeries(a, [forecasts.value(tau - offset, tau) for tau in range(a, b)])


def build_u_df(dataset: SkuDataset, usw: Window, lead_time: int, st: int, d: int = 1,
               n_c: float = DEFAULT_N_C, n_u: float = DEFAULT_N_U) -> EmpiricalDistribution:
    raw = extract_df_1d(dataset.forecasts, usw, lead_time, st)
    smoothed = smooth_df(clip_df(raw.values, n_c), d)
    residual = smoothed - dataset.consumption.window(*usw)
    return EmpiricalDistribution(clip_residuals(residual, n_u), "DF")


def build_uncertainty_set(dataset: SkuDataset, usw: Window, stp: float, n_c: float = DEFAULT_N_C,
                          n_u: float = DEFAULT_N_U) -> tuple[UncertaintySet, int]:
    """All four distributions for one window, plus the safety time ``stp`` maps to.

    The forecast residuals depend on the safety time, so delays are built
    first and their percentile fixes the forecast offset.
    """
    if not dataset.consumption.covers(usw):
        raise ConfigurationError(
            f"{dataset.sku_id}: USW [{iso(usw[0])}, {iso(usw[1])}) not covered by data")
    p = dataset.params
    u_st = build_u_st(dataset.orders, usw)
    st = int(round(percentile(u_st, stp)))
    uset = UncertaintySet(
        u_mm=build_u_mm(dataset, usw, n_u),
        u_sq=build_u_sq(dataset.orders, usw),
        u_st=u_st,
        u_df=build_u_df(dataset, usw, p.lead_time, st, p.forecast_cadence, n_c, n_u),
        usw=usw,
    )
    return uset, st


def dump_uncertainties(uset: UncertaintySet, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "sample"])
        for label, dist in zip(LABELS, (uset.u_mm, uset.u_sq, uset.u_st, uset.u_df)):
            for s in dist.samples:
                w.writerow([label, repr(float(s))])
