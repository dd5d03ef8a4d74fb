"""Grid search of the (SLP, STP) hyper-parameters over a training period."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, replace
from typing import List, Sequence, Tuple

from .backtest import BacktestConfig, run_backtest
from .domain import Window, iso
from .ingest import SkuDataset

log = logging.getLogger(__name__)

DEFAULT_SLP = (0.5, 0.7, 0.9, 0.925, 0.95)


@dataclass(frozen=True)
class HyperGrid:
    slp_candidates: Tuple[float, ...] = DEFAULT_SLP
    stp_candidates: Tuple[float, ...] = (0.0,)

    def __post_init__(self):
        for name in ("slp_candidates", "stp_candidates"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must be non-empty")
            if any(not 0.0 <= v <= 1.0 for v in vals):
                raise ValueError(f"{name} values must lie in [0, 1]")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, vals)

    def cells(self) -> List[Tuple[float, float]]:
        return [(s, t) for s in self.slp_candidates for t in self.stp_candidates]


@dataclass(frozen=True)
class Cell:
    slp: float
    stp: float
    median_cost: float
    median_sl: float
    feasible: bool


@dataclass(frozen=True)
class TrainReport:
    sku_id: str
    period: Window
    target: float
    cells: Tuple[Cell, ...]
    chosen: Tuple[float, float]
    infeasible: bool = False

    def to_dict(self) -> dict:
        return {
            "sku_id": self.sku_id,
            "period": [iso(self.period[0]), iso(self.period[1])],
            "target": self.target,
            "cells": [asdict(c) for c in self.cells],
            "chosen": {"slp": self.chosen[0], "stp": self.chosen[1]},
            "infeasible": self.infeasible,
        }

    def dump(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load_choice(path: str) -> Tuple[float, float]:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return float(doc["chosen"]["slp"]), float(doc["chosen"]["stp"])


def choose(cells: Sequence[Cell]) -> Tuple[Tuple[float, float], bool]:
    """Cheapest feasible cell, ties to lower SLP then lower STP.

    With no feasible cell the most conservative one is returned and flagged.
    """
    feasible = [c for c in cells if c.feasible]
    if not feasible:
        worst = max(cells, key=lambda c: (c.slp, c.stp))
        return (worst.slp, worst.stp), True
    best = min(feasible, key=lambda c: (c.median_cost, c.slp, c.stp))
    return (best.slp, best.stp), False


def train(dataset: SkuDataset, grid: HyperGrid, cfg: BacktestConfig, training_period: Window) -> TrainReport:
    """Backtest every grid cell over the training period and pick the best one.

    Distributions are sampled from the whole training period in every cell.
    """
    base = replace(cfg, period=training_period, mode="training", usw_period=training_period,
                   operation_step=False)
    cells = []
    target = None
    for slp, stp in grid.cells():
        res = run_backtest(dataset, replace(base, hyper=(slp, stp)))
        target = res.target
        cells.append(Cell(slp, stp, res.median_cost, res.service_level, res.service_level >= res.target))
    chosen, infeasible = choose(cells)
    if infeasible:
        log.warning("%s: no grid cell meets the service target %.3f; using (%.3f, %.3f)",
                    dataset.sku_id, target, *chosen)
    return TrainReport(dataset.sku_id, training_period, target, tuple(cells), chosen, infeasible)
