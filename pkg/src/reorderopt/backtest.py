"""Receding-horizon replay of the recommended policy against history.

At every sampling day the distributions are rebuilt and the k-iteration
produces new (SSV, ST); between sampling days the parameters are held. The
MRP runs daily on the nominal simulated inventory, which consumes actual
demand and actual movements, and the orders it commits are then perturbed
``N_os`` times to give the final simulated inventory realizations.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .domain import (Day, PlanningParams, ReorderParams, Trajectory, Window, holding_cost,
                     iso, level_set, service_level)
from .ingest import SkuDataset, ValidationError
from .mrp import mrp_arrays
from .optimizer import (ForwardSimConfig, KIterationResult, RealizationDraws, SamplingSlice, k_iteration)
from .uncertainty import (DEFAULT_B_USW, DEFAULT_L_MIN, DEFAULT_N_C, DEFAULT_N_U, UncertaintySet,
                          build_uncertainty_set, draw, stream, usw_initial_length, usw_window)


@dataclass(frozen=True)
class ModelParams:
    n_c: float = DEFAULT_N_C
    n_u: float = DEFAULT_N_U
    b_usw: int = DEFAULT_B_USW
    l_min_usw: int = DEFAULT_L_MIN


@dataclass(frozen=True)
class BacktestConfig:
    period: Window
    frequency: int = 30
    n_os: int = 10
    hyper: Tuple[float, float] = (0.5, 0.0)  # (slp, stp)
    fwd: ForwardSimConfig = field(default_factory=ForwardSimConfig)
    model: ModelParams = field(default_factory=ModelParams)
    mode: str = "validation"
    usw_period: Optional[Window] = None  # training mode: the whole training period
    operation_step: bool = True

    def __post_init__(self):
        a, b = self.period
        if b <= a:
            raise ValueError("backtest period is empty")
        if not 1 <= self.frequency:
            raise ValueError("frequency must be >= 1")
        if self.frequency > b - a:
            raise ValueError("frequency exceeds the period length")
        if self.n_os < 1:
            raise ValueError("n_os must be >= 1")
        if self.mode not in ("validation", "training"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def forward(self) -> ForwardSimConfig:
        slp, stp = self.hyper
        return replace(self.fwd, slp=slp, stp=stp)


@dataclass(frozen=True)
class SimOrder:
    placed: Day
    arrival: Day
    qty: float
    kind: str  # "seed", "std" or "exp"
    delay: int = 0
    received: Optional[float] = None


@dataclass(frozen=True)
class SavingsTerms:
    """Numerators and the shared denominator of the three savings ratios."""

    inv: float
    ss: float
    ss_op: float
    denom: float

    def ratios(self) -> Tuple[float, float, float]:
        if self.denom == 0:
            raise ZeroDivisionError("actual inventory holding cost is zero; savings undefined")
        return self.inv / self.denom, self.ss / self.denom, self.ss_op / self.denom


@dataclass(frozen=True)
class MetricsReport:
    r_ad: float
    s_inv_bar: float
    s_ss_bar: float
    s_ss_op: float
    service_levels: Dict[str, float]
    targets: Dict[str, float]

    def to_dict(self) -> dict:
        return {
            "r_ad": self.r_ad,
            "s_inv_bar": self.s_inv_bar,
            "s_ss_bar": self.s_ss_bar,
            "s_ss_op": self.s_ss_op,
            "service_levels": dict(sorted(self.service_levels.items())),
            "targets": dict(sorted(self.targets.items())),
        }


@dataclass
class SamplingStep:
    t: Day
    reorder: ReorderParams
    uset: UncertaintySet
    result: KIterationResult


@dataclass
class BacktestResult:
    sku_id: str
    period: Window
    recommendations: List[Tuple[Day, ReorderParams]]
    daily_ssv: np.ndarray
    daily_st: np.ndarray
    nominal: Trajectory
    simulated: List[Trajectory]
    median_index: int
    costs: np.ndarray  # per simulated realization
    service_level: float  # of the median realization over the scored days
    sl_window: Window
    target: float
    orders: List[SimOrder]
    steps: List[SamplingStep]
    actual_inventory: np.ndarray
    actual_ssv: float
    op_reorder: Optional[ReorderParams]
    terms: Optional[SavingsTerms]
    metrics: Optional[MetricsReport]

    @property
    def median_trajectory(self) -> Trajectory:
        return self.simulated[self.median_index]

    @property
    def median_cost(self) -> float:
        return float(self.costs[self.median_index])

    @property
    def converged(self) -> bool:
        return all(s.result.converged for s in self.steps)


# --- metrics ---------------------------------------------------------------------

def adherence_rate(sls: Sequence[float], targets: Sequence[float]) -> float:
    """Share of SKUs whose service level reaches its target."""
    sls = np.asarray(sls, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if sls.shape != targets.shape:
        raise ValueError("service levels and targets differ in length")
    if sls.size == 0:
        raise ValueError("adherence rate over zero SKUs")
    return float(level_set(sls - targets).sum() / sls.size)


def savings_terms(actual_inv, sim_inv, actual_ssv, sim_ssv, rate: float, actual_ssv_op: float,
                  sim_ssv_op: float) -> SavingsTerms:
    """Holding-cost savings of the simulation vs. actuals over aligned days.

    Inventory enters as holding cost, so negative stock counts as zero.
    """
    xa = np.maximum(np.asarray(actual_inv, dtype=np.float64), 0.0)
    xs = np.maximum(np.asarray(sim_inv, dtype=np.float64), 0.0)
    ssa = np.broadcast_to(np.asarray(actual_ssv, dtype=np.float64), xa.shape)
    sss = np.broadcast_to(np.asarray(sim_ssv, dtype=np.float64), xa.shape)
    if xs.shape != xa.shape:
        raise ValueError("actual and simulated inventory are not aligned")
    n_t = xa.size
    return SavingsTerms(
        inv=float(((xa - xs) * rate).sum()),
        ss=float(((ssa - sss) * rate).sum()),
        ss_op=float(n_t * (actual_ssv_op - sim_ssv_op) * rate),
        denom=float((xa * rate).sum()),
    )


def savings(actual_inv, sim_inv, actual_ssv, sim_ssv, rate: float, actual_ssv_op: float | None = None,
            sim_ssv_op: float | None = None) -> Tuple[float, float, float]:
    """``(s_inv_bar, s_ss_bar, s_ss_op)``; operation-date SSVs default to the last path values."""
    if actual_ssv_op is None:
        actual_ssv_op = float(np.atleast_1d(actual_ssv)[-1])
    if sim_ssv_op is None:
        sim_ssv_op = float(np.atleast_1d(sim_ssv)[-1])
    return savings_terms(actual_inv, sim_inv, actual_ssv, sim_ssv, rate, actual_ssv_op, sim_ssv_op).ratios()


def fleet_metrics(results: Sequence[BacktestResult]) -> MetricsReport:
    """Fleet-level metrics; savings pool numerators and denominators over SKUs."""
    results = list(results)
    if not results:
        raise ValueError("no backtest results")
    sls = {r.sku_id: r.service_level for r in results}
    targets = {r.sku_id: r.target for r in results}
    keys = sorted(sls)
    r_ad = adherence_rate([sls[k] for k in keys], [targets[k] for k in keys])
    terms = [r.terms for r in results]
    denom = math.fsum(t.denom for t in terms)
    if denom == 0:
        raise ZeroDivisionError("fleet actual inventory holding cost is zero; savings undefined")
    return MetricsReport(
        r_ad=r_ad,
        s_inv_bar=math.fsum(t.inv for t in terms) / denom,
        s_ss_bar=math.fsum(t.ss for t in terms) / denom,
        s_ss_op=math.fsum(t.ss_op for t in terms) / denom,
        service_levels=sls,
        targets=targets,
    )


# --- the loop --------------------------------------------------------------------

def _usw(cfg: BacktestConfig, t: Day, params: PlanningParams) -> Window:
    m = cfg.model
    if cfg.mode == "training":
        return usw_window(t, cfg.usw_period or cfg.period, params, m.b_usw, m.l_min_usw, "training")
    return usw_window(t, (cfg.period[0], cfg.period[1]), params, m.b_usw, m.l_min_usw, "validation")


def check_coverage(dataset: SkuDataset, cfg: BacktestConfig, params: PlanningParams) -> None:
    a, b = cfg.period
    if cfg.mode == "training":
        first = (cfg.usw_period or cfg.period)[0]
        last = max(b, (cfg.usw_period or cfg.period)[1])
    else:
        first = a - usw_initial_length(params.lead_time, cfg.model.b_usw, cfg.model.l_min_usw)
        last = b
    lo, hi = dataset.span
    if first < lo or last > hi:
        raise ValidationError(
            f"{dataset.sku_id}: data span [{iso(lo)}, {iso(hi)}) does not cover "
            f"[{iso(first)}, {iso(last)}) needed for the run")


def sampling_step(dataset: SkuDataset, t: Day, params: PlanningParams, cfg: BacktestConfig,
                  prev_arrivals) -> SamplingStep:
    fwd = cfg.forward
    usw = _usw(cfg, t, params)
    uset, st = build_uncertainty_set(dataset, usw, fwd.stp, cfg.model.n_c, cfg.model.n_u)
    sl = SamplingSlice.from_dataset(dataset, t, params)
    draws = RealizationDraws.sample(uset, fwd.n_realizations, params.horizon, fwd.seed, params.sku_id, t)
    result = k_iteration(sl, uset, fwd, prev_arrivals, draws)
    return SamplingStep(t, result.reorder, uset, result)


def recommend_live(dataset: SkuDataset, cfg: BacktestConfig, today: Day) -> KIterationResult:
    """Single k-iteration at ``today`` seeded with the open orders due within the seeding window."""
    params = cfg.fwd.resolve(dataset.params)
    live = replace(cfg, period=(today, today + 1), frequency=1, mode="validation", operation_step=False)
    _check_live(dataset, live, params, today)
    prev = dataset.orders.planned_arrivals(today, params.seeding_window)
    return sampling_step(dataset, today, params, live, prev).result


def _check_live(dataset: SkuDataset, cfg: BacktestConfig, params: PlanningParams, today: Day) -> None:
    first = today - usw_initial_length(params.lead_time, cfg.model.b_usw, cfg.model.l_min_usw)
    lo, hi = dataset.span
    if first < lo or today > hi:
        raise ValidationError(
            f"{dataset.sku_id}: data span [{iso(lo)}, {iso(hi)}) does not cover the USW ending {iso(today)}")


@dataclass
class Replay:
    """State of one daily MRP replay over ``n`` days starting at offset 0."""

    inventory: np.ndarray  # (n,) stock at the start of each day
    std_arrivals: np.ndarray  # (n,) standard quantity received each day
    exp_arrivals: np.ndarray  # (n,) expedited quantity received each day
    planned: np.ndarray  # (n + H,) planned arrivals by day, net of cancellations
    open_arrivals: np.ndarray  # (n + H,) planned plus in-transit, as seen after the last day
    orders: List[SimOrder]
    ssv: np.ndarray
    st: np.ndarray
    n_placed: int


def daily_replay(x0: float, n: int, params: PlanningParams, forecast_row, consumption, movements,
                 policy, seed_arrivals=None, perturb=None) -> Replay:
    """Run the MRP once per day and commit what it decides for today.

    ``forecast_row(i, st)`` gives the (already shifted) forecast of day ``i``;
    ``policy(i, open_arrivals)`` returns the reorder parameters to use on day
    ``i`` given the open arrivals over ``[i, i + H)``. Cancellations inside
    ``(PTF, LT]``, the new standard order at index LT and the new expedited
    order at index ELT are committed; other tentative orders are re-planned
    the next day. When an order's planned day comes, ``perturb(i, qty, kind)``
    may return ``(delay, received)``: the quantity then stays visible to the
    MRP as in transit until it lands.
    """
    h, lt, elt = params.horizon, params.lead_time, params.expedited_lead_time
    size = n + h + 1
    pipe_std = np.zeros(size)
    pipe_exp = np.zeros(size)
    transit_std = np.zeros(size + h)
    transit_exp = np.zeros(size + h)
    if seed_arrivals is not None:
        seed = np.asarray(seed_arrivals, dtype=np.float64)[:size]
        pipe_std[: len(seed)] += seed
    placed_on = {}  # (kind, arrival offset) -> placement offset, None for seeded orders
    orders: List[SimOrder] = []
    x = np.empty(n + 1)
    x[0] = x0
    ssv_path = np.empty(n)
    st_path = np.empty(n, dtype=np.int64)
    n_placed = 0

    def open_arrivals(i, length):
        return (pipe_std[i : i + length] + pipe_exp[i : i + length]
                + transit_std[i : i + length] + transit_exp[i : i + length])

    for i in range(n):
        rp = policy(i, open_arrivals(i, h))
        ssv_path[i], st_path[i] = rp.ssv, rp.st

        # orders planned for today either land now or slip into transit
        for pipe, transit, kind in ((pipe_std, transit_std, "std"), (pipe_exp, transit_exp, "exp")):
            qty = pipe[i]
            if qty <= 0:
                continue
            pipe[i] = 0.0
            delay, got = (0, qty) if perturb is None else perturb(i, qty, kind)
            transit[i + delay] += got
            placed = placed_on.get((kind, i))
            orders.append(SimOrder(-1 if placed is None else placed, i, float(qty),
                                   "seed" if placed is None and kind == "std" else kind, delay, float(got)))

        shifted = forecast_row(i, rp.st)
        sa_in = pipe_std[i : i + h].copy()
        ea_in = pipe_exp[i : i + h] + transit_std[i : i + h] + transit_exp[i : i + h]
        sa, ea, _, cancelled = mrp_arrays(x[i], shifted, sa_in, ea_in, params, rp.ssv)
        pipe_std[i : i + h] -= cancelled
        if lt < h and sa[lt] > pipe_std[i + lt] + 1e-12:
            pipe_std[i + lt] = sa[lt]
            placed_on[("std", i + lt)] = i
            n_placed += 1
        if elt < min(lt, h) and ea[elt] > ea_in[elt] + 1e-12:
            pipe_exp[i + elt] += ea[elt] - ea_in[elt]
            placed_on[("exp", i + elt)] = i
            n_placed += 1
        if elt == 0 and pipe_exp[i] > 0:
            # same-day expedite lands today
            qty = pipe_exp[i]
            pipe_exp[i] = 0.0
            delay, got = (0, qty) if perturb is None else perturb(i, qty, "exp")
            transit_exp[i + delay] += got
            orders.append(SimOrder(i, i, float(qty), "exp", delay, float(got)))

        x[i + 1] = x[i] + transit_std[i] + transit_exp[i] - consumption[i] + movements[i]

    planned = pipe_std[: n + h] + pipe_exp[: n + h]
    return Replay(x[:n], transit_std[:n].copy(), transit_exp[:n].copy(), planned,
                  open_arrivals(n, h), orders, ssv_path, st_path, n_placed)


def run_backtest(dataset: SkuDataset, cfg: BacktestConfig) -> BacktestResult:
    params = cfg.fwd.resolve(dataset.params)
    check_coverage(dataset, cfg, params)
    p0, p1 = cfg.period
    n = p1 - p0
    lt = params.lead_time
    ts = params.seeding_window

    consumption = dataset.consumption.window(p0, p1)
    movements = dataset.misc_movements.window(p0, p1) + dataset.blocked_movements.window(p0, p1)
    seeds = dataset.orders.planned_arrivals(p0, ts)
    x0 = dataset.actual_inventory.at(p0)
    slices = {}

    def forecast_row(i, st):
        if i not in slices:
            slices.clear()
            slices[i] = SamplingSlice.from_dataset(dataset, p0 + i, params)
        return slices[i].row(st)[1]

    steps: List[SamplingStep] = []

    def policy(i, open_arr):
        if i % cfg.frequency == 0:
            steps.append(sampling_step(dataset, p0 + i, params, cfg, open_arr[:ts]))
        return steps[-1].reorder

    nominal_run = daily_replay(x0, n, params, forecast_row, consumption, movements, policy, seeds)
    recs = [(s.t, s.reorder) for s in steps]
    step_of_day = np.arange(n) // cfg.frequency
    schedule = [s.reorder for s in steps]

    def fixed(i, _open):
        return schedule[step_of_day[i]]

    simulated = []
    n_placed = []
    for r in range(cfg.n_os):
        rng = stream(cfg.fwd.seed, params.sku_id, p0, r, "OS")

        def perturb(i, qty, kind, rng=rng):
            uset = steps[step_of_day[i]].uset
            delay = int(draw(uset.u_st, rng))
            return delay, max(qty + draw(uset.u_sq, rng), 0.0)

        run = daily_replay(x0, n, params, forecast_row, consumption, movements, fixed, seeds, perturb)
        simulated.append(Trajectory.from_arrays(p0, run.inventory, run.std_arrivals, run.exp_arrivals,
                                                consumption, movements))
        n_placed.append(run.n_placed)

    costs = np.array([holding_cost(tr, params.holding_cost) for tr in simulated])
    costs = costs + np.array(n_placed) * params.order_cost
    median_index = _percentile_index(costs, cfg.fwd.aggregation_percentile)

    sl_window = (p0 + lt, p1) if lt < n else (p0, p1)
    sl_value = service_level(simulated[median_index], sl_window)
    target = cfg.fwd.target(params)

    op_reorder = None
    if cfg.operation_step:
        op_reorder = sampling_step(dataset, p1, params, cfg, nominal_run.open_arrivals[:ts]).reorder

    daily_ssv = nominal_run.ssv
    actual = dataset.actual_inventory.window(p0, p1)
    terms = metrics = None
    if cfg.mode == "validation":
        sim_op = op_reorder.ssv if op_reorder is not None else float(daily_ssv[-1])
        terms = savings_terms(actual, simulated[median_index].inventory.values, dataset.actual_ssv,
                              daily_ssv, params.holding_cost, dataset.actual_ssv, sim_op)
        if terms.denom > 0:
            s_inv, s_ss, s_op = terms.ratios()
        else:
            s_inv = s_ss = s_op = float("nan")
        metrics = MetricsReport(
            r_ad=adherence_rate([sl_value], [target]),
            s_inv_bar=s_inv, s_ss_bar=s_ss, s_ss_op=s_op,
            service_levels={params.sku_id: sl_value}, targets={params.sku_id: target},
        )

    nominal = Trajectory.from_arrays(p0, nominal_run.inventory, nominal_run.std_arrivals,
                                     nominal_run.exp_arrivals, consumption, movements)
    orders = [replace(o, placed=(o.placed + p0 if o.placed >= 0 else o.arrival + p0), arrival=o.arrival + p0)
              for o in nominal_run.orders]
    return BacktestResult(
        sku_id=params.sku_id, period=cfg.period, recommendations=recs, daily_ssv=daily_ssv,
        daily_st=nominal_run.st, nominal=nominal, simulated=simulated, median_index=median_index,
        costs=costs, service_level=sl_value, sl_window=sl_window, target=target, orders=orders,
        steps=steps, actual_inventory=np.array(actual), actual_ssv=dataset.actual_ssv,
        op_reorder=op_reorder, terms=terms, metrics=metrics,
    )


def _percentile_index(values: np.ndarray, p: float) -> int:
    """Index of the nearest-rank ``p``-percentile element (stable on ties)."""
    order = np.argsort(values, kind="stable")
    rank = max(1, math.ceil(p * len(values) - 1e-9))
    return int(order[min(rank, len(values)) - 1])


# --- outputs ---------------------------------------------------------------------

def write_recommendations(path: str, rows: Sequence[Tuple[Day, str, ReorderParams]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "sku", "ssv", "st"])
        for day, sku, rp in rows:
            w.writerow([iso(day), sku, repr(float(rp.ssv)), int(rp.st)])


def write_trajectory(path: str, result: BacktestResult, dataset: SkuDataset) -> None:
    p0, p1 = result.period
    inv = np.array([t.inventory.values for t in result.simulated])
    p5 = np.percentile(inv, 5, axis=0)
    p95 = np.percentile(inv, 95, axis=0)
    med = result.median_trajectory.inventory.values
    planned = result.nominal.std_arrivals.values + result.nominal.exp_arrivals.values
    actual_arr = np.zeros(p1 - p0)
    for o in dataset.orders.orders:
        if o.has_actuals and p0 <= o.actual_date < p1:
            actual_arr[o.actual_date - p0] += o.actual_qty
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "actual_inv", "sim_median", "sim_p5", "sim_p95", "planned_arrivals",
                    "actual_arrivals"])
        for i in range(p1 - p0):
            w.writerow([iso(p0 + i), repr(float(result.actual_inventory[i])), repr(float(med[i])),
                        repr(float(p5[i])), repr(float(p95[i])), repr(float(planned[i])),
                        repr(float(actual_arr[i]))])


def write_metrics(path: str, fleet: MetricsReport, per_sku: Dict[str, MetricsReport]) -> None:
    doc = fleet.to_dict()
    doc["per_sku"] = {k: per_sku[k].to_dict() for k in sorted(per_sku)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
