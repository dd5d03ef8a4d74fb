"""Simulation-optimization of safety-stock MRP reorder parameters."""
from .domain import DailySeries, PlanningParams, ReorderParams, Trajectory, holding_cost, service_level
from .mrp import MrpInput, MrpOutput, cancel_orders, run_mrp
from .optimizer import ForwardSimConfig, k_iteration
from .backtest import BacktestConfig, recommend_live, run_backtest

__all__ = [
    "DailySeries", "PlanningParams", "ReorderParams", "Trajectory", "holding_cost", "service_level",
    "MrpInput", "MrpOutput", "cancel_orders", "run_mrp", "ForwardSimConfig", "k_iteration",
    "BacktestConfig", "recommend_live", "run_backtest",
]
