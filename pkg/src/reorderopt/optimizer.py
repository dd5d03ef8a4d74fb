"""Reorder-parameter inference at one sampling day.

One MRP run per candidate SSV produces the base plan; ``N_r`` inventory
realizations are then obtained by perturbing that plan with draws from the
empirical distributions (batched realizations). The k-iteration lifts the
SSV by the inventory deficit until enough realizations meet the service
target over the scoring window.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .domain import EPS, DailySeries, Day, PlanningParams, ReorderParams, Trajectory
from .ingest import SkuDataset
from .mrp import MrpOutput, apply_safety_time, mrp_arrays
from .uncertainty import UncertaintySet, draw, percentile, stream


@dataclass(frozen=True)
class ForwardSimConfig:
    n_realizations: int = 100
    slp: float = 0.5
    stp: float = 0.0
    sl_min: Optional[float] = None  # defaults to the SKU's target service level
    max_iterations: int = 10
    horizon: Optional[int] = None  # defaults to the SKU's horizon
    seeding: Optional[int] = None  # defaults to the SKU's seeding window
    aggregation_percentile: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("slp", "stp", "aggregation_percentile"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.sl_min is not None and not 0.0 <= self.sl_min <= 1.0:
            raise ValueError("sl_min must be in [0, 1]")

    def target(self, params: PlanningParams) -> float:
        return params.target_service_level if self.sl_min is None else self.sl_min

    def resolve(self, params: PlanningParams) -> PlanningParams:
        """Planning params with this config's horizon/seeding overrides applied."""
        if self.horizon is None and self.seeding is None:
            return params
        h = params.horizon if self.horizon is None else self.horizon
        ts = params.seeding_window if self.seeding is None else self.seeding
        return replace(params, horizon=h, seeding_window=min(ts, h))


@dataclass(frozen=True)
class SamplingSlice:
    """What the optimizer sees of a SKU at sampling day ``t``."""

    t: Day
    params: PlanningParams
    forecast: np.ndarray  # forecast issued at t for [t, t + H + tail)

    @classmethod
    def from_dataset(cls, dataset: SkuDataset, t: Day, params: PlanningParams | None = None,
                     tail: int = 0) -> "SamplingSlice":
        params = params or dataset.params
        row = dataset.forecasts.row(t, params.horizon + tail, hold_last=True)
        return cls(t, params, row)

    def row(self, st: int) -> Tuple[np.ndarray, np.ndarray]:
        """(raw forecast, safety-time-shifted forecast), both of length H."""
        h = self.params.horizon
        raw = self.forecast[:h]
        tail = self.forecast[h : h + st]
        if len(tail) < st:
            fill = raw[-1] if h else 0.0
            tail = np.concatenate([tail, np.full(st - len(tail), fill)])
        return raw, apply_safety_time(raw, st, tail)


@dataclass(frozen=True)
class RealizationDraws:
    """Per-day residual draws, shape ``(N_r, H)``, fixed for one sampling day.

    Drawing by day index rather than by order keeps the same random numbers
    attached to each arrival day across SSV candidates.
    """

    df: np.ndarray
    mm: np.ndarray
    st: np.ndarray
    sq: np.ndarray

    @classmethod
    def sample(cls, uset: UncertaintySet, n: int, horizon: int, seed: int, sku_id: str,
               t: Day) -> "RealizationDraws":
        out = {}
        for tag, dist in (("DF", uset.u_df), ("MM", uset.u_mm), ("ST", uset.u_st), ("SQ", uset.u_sq)):
            arr = np.empty((n, horizon))
            for r in range(n):
                arr[r] = draw(dist, stream(seed, sku_id, t, r, tag), size=horizon)
            out[tag.lower()] = arr
        out["st"] = out["st"].astype(np.int64)
        return cls(**out)

    @property
    def n(self) -> int:
        return self.df.shape[0]


@dataclass(frozen=True)
class RealizationBundle:
    t: Day
    inventory: np.ndarray  # (N_r, H)
    arrivals: np.ndarray  # (N_r, H) sampled order arrivals
    consumption: np.ndarray  # (N_r, H)
    movements: np.ndarray  # (N_r, H), inflow positive
    base: MrpOutput
    seeded_arrivals: DailySeries
    x0: float

    @property
    def n_realizations(self) -> int:
        return self.inventory.shape[0]

    @property
    def trajectories(self) -> List[Trajectory]:
        zero = np.zeros(self.inventory.shape[1])
        return [
            Trajectory.from_arrays(self.t, self.inventory[r], self.arrivals[r], zero,
                                   self.consumption[r], self.movements[r])
            for r in range(self.n_realizations)
        ]


def steady_state_x0(ssv: float, forecast, seeded_arrivals, lead_time: int) -> float:
    """Initial stock that lands exactly on ``ssv`` at day LT given the seeded arrivals."""
    fc = np.asarray(forecast, dtype=np.float64)
    seeded = np.asarray(seeded_arrivals, dtype=np.float64)
    if len(seeded) < lead_time:
        seeded = np.concatenate([seeded, np.zeros(lead_time - len(seeded))])
    return float(ssv + fc[:lead_time].sum() - seeded[:lead_time].sum())


def perturb_arrivals(base_arrivals: np.ndarray, draws: RealizationDraws) -> np.ndarray:
    """Delay and shorten every base arrival per realization; late spill past H is dropped."""
    n, h = draws.n, len(base_arrivals)
    out = np.zeros((n, h))
    days = np.nonzero(base_arrivals > 0)[0]
    if days.size == 0:
        return out
    land = days[None, :] + draws.st[:, days]
    qty = np.maximum(base_arrivals[days][None, :] + draws.sq[:, days], 0.0)
    rows = np.broadcast_to(np.arange(n)[:, None], land.shape)
    keep = land < h
    np.add.at(out, (rows[keep], land[keep]), qty[keep])
    return out


def forward_simulate(sl: SamplingSlice, ssv: float, st: int, seeded_arrivals, draws: RealizationDraws
                     ) -> RealizationBundle:
    """One MRP run from the steady-state start, then ``N_r`` perturbed realizations."""
    p = sl.params
    h = p.horizon
    raw, shifted = sl.row(st)
    seeded = np.zeros(h)
    ts = min(len(seeded_arrivals), p.seeding_window, h)
    seeded[:ts] = np.asarray(seeded_arrivals, dtype=np.float64)[:ts]

    x0 = steady_state_x0(ssv, shifted, seeded, p.lead_time)
    sa, ea, proj, cancelled = mrp_arrays(x0, shifted, seeded, np.zeros(h), p, ssv)
    base = MrpOutput(DailySeries(sl.t, sa), DailySeries(sl.t, ea), DailySeries(sl.t, proj),
                     DailySeries(sl.t, cancelled))

    consumption = raw[None, :] - draws.df
    movements = draws.mm
    arrivals = perturb_arrivals(sa + ea, draws)
    flow = arrivals - consumption + movements
    inv = np.empty_like(flow)
    inv[:, 0] = x0
    inv[:, 1:] = x0 + np.cumsum(flow[:, :-1], axis=1)
    return RealizationBundle(sl.t, inv, arrivals, consumption, movements, base,
                             DailySeries(sl.t, seeded[:ts]), x0)


def scoring_window(params: PlanningParams, st: int) -> Tuple[int, int]:
    """Day offsets ``[LT, min(2 LT + ST, H))`` over which the service target is checked."""
    lt, h = params.lead_time, params.horizon
    return lt, min(2 * lt + st, h)


def _required_days(sl_min: float, w: int) -> int:
    return min(w, max(0, math.ceil(sl_min * w - EPS)))


def realization_deficits(values: np.ndarray, sl_min: float) -> np.ndarray:
    """Smallest uniform lift per realization that meets ``sl_min`` on its window.

    ``values`` has shape ``(N_r, W)``. With ``m`` negative days allowed, the
    lift is the negated ``(m + 1)``-th smallest value, floored at 0.
    """
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n, w = values.shape
    if w == 0:
        raise ValueError("empty scoring window")
    required = _required_days(sl_min, w)
    if required == 0:
        return np.zeros(n)
    allowed = w - required
    pivot = np.partition(values, allowed, axis=1)[:, allowed]
    h = np.maximum(-pivot, 0.0)
    # float residue from re-summing a lifted path should not trigger another lift
    tol = EPS * max(1.0, float(np.abs(values).max()))
    h[h <= tol] = 0.0
    return h


def inventory_deficit(bundle_or_values, slp: float, sl_min: float, window: Tuple[int, int] | None = None
                      ) -> float:
    """Lift needed so that a fraction ``slp`` of realizations meets ``sl_min``.

    Returns the nearest-rank ``slp``-percentile of the per-realization lifts;
    0 exactly when the stopping condition already holds.
    """
    values = bundle_or_values.inventory if isinstance(bundle_or_values, RealizationBundle) else bundle_or_values
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if window is not None:
        a, b = window
        if b <= a:
            raise ValueError(f"empty scoring window [{a}, {b})")
        values = values[:, a:b]
    return percentile(realization_deficits(values, sl_min), slp)


def slp_attained(values: np.ndarray, sl_min: float) -> float:
    """Fraction of realizations whose service level over the window meets ``sl_min``."""
    values = np.atleast_2d(values)
    ok = (values >= 0).sum(axis=1) >= _required_days(sl_min, values.shape[1])
    return float(ok.mean())


@dataclass
class KIterationResult:
    reorder: ReorderParams
    bundle: RealizationBundle
    converged: bool
    iterations: int
    trace: List[Tuple[int, float, float, float]] = field(default_factory=list)

    def __iter__(self):
        yield self.reorder
        yield self.bundle


def k_iteration(sl: SamplingSlice, uset: UncertaintySet, cfg: ForwardSimConfig, prev_arrivals=None,
                draws: RealizationDraws | None = None) -> KIterationResult:
    p = sl.params
    st = int(round(percentile(uset.u_st, cfg.stp)))
    if prev_arrivals is None:
        prev_arrivals = np.zeros(p.seeding_window)
    if draws is None:
        draws = RealizationDraws.sample(uset, cfg.n_realizations, p.horizon, cfg.seed, p.sku_id, sl.t)
    sl_min = cfg.target(p)
    a, b = scoring_window(p, st)
    if b <= a:
        raise ValueError(f"{p.sku_id}: empty scoring window, horizon {p.horizon} <= lead time {p.lead_time}")

    ssv = 0.0
    trace = []
    for k in range(cfg.max_iterations):
        bundle = forward_simulate(sl, ssv, st, prev_arrivals, draws)
        scored = bundle.inventory[:, a:b]
        h = inventory_deficit(scored, cfg.slp, sl_min)
        trace.append((k, ssv, h, slp_attained(scored, sl_min)))
        if h == 0.0:
            return KIterationResult(ReorderParams(ssv, st), bundle, True, k + 1, trace)
        ssv += h
    return KIterationResult(ReorderParams(ssv, st), bundle, False, cfg.max_iterations, trace)


def dump_trace(result: KIterationResult, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "ssv", "h", "slp_attained"])
        for k, ssv, h, att in result.trace:
            w.writerow([k, repr(ssv), repr(h), repr(att)])
