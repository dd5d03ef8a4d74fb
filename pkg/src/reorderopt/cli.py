"""Command-line entry point: train, validate, recommend, simulate-mrp, sensitivity.

Configuration is a YAML file; any key can be overridden by a flag and flags
win. Logs go to stderr, results to files in the output directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import yaml

from .backtest import (BacktestConfig, BacktestResult, ModelParams, fleet_metrics, recommend_live, run_backtest,
                       write_metrics, write_recommendations, write_trajectory)
from .domain import Day, ReorderParams, Window, day_of, iso
from .ingest import IngestError, SkuDataset, ValidationError, load_fleet
from .mrp import MrpInput, run_mrp
from .optimizer import ForwardSimConfig, SamplingSlice, dump_trace
from .trainer import DEFAULT_SLP, HyperGrid, TrainReport, train
from .uncertainty import dump_uncertainties

log = logging.getLogger("reorderopt")

SENSITIVITY_AXES = ("n_c", "n_u", "slp_list", "b_usw", "N_r")


class ConfigError(Exception):
    pass


# --- configuration ---------------------------------------------------------------

_SCHEMA = {
    "data": str, "out": str, "seed": int, "skus": object, "jobs": int, "diagnostics": bool,
    "periods": {"training": list, "validation": list, "operation": str},
    "grid": {"slp": list, "stp": list},
    "hyper": {"slp": float, "stp": float},
    "model": {"n_c": float, "n_u": float, "b_usw": int, "l_min_usw": int, "n_r": int, "n_os": int,
              "frequency": int, "max_iterations": int, "aggregation_percentile": float},
}


@dataclass
class RunConfig:
    data: str = "data"
    out: str = "out"
    seed: int = 0
    skus: Optional[List[str]] = None
    jobs: int = 1
    diagnostics: bool = False
    training: Optional[Window] = None
    validation: Optional[Window] = None
    operation: Optional[Day] = None
    grid: HyperGrid = field(default_factory=HyperGrid)
    hyper: Optional[Tuple[float, float]] = None
    model: ModelParams = field(default_factory=ModelParams)
    n_r: int = 100
    n_os: int = 10
    frequency: int = 30
    max_iterations: int = 10
    aggregation_percentile: float = 0.5

    def forward(self) -> ForwardSimConfig:
        return ForwardSimConfig(n_realizations=self.n_r, max_iterations=self.max_iterations,
                                aggregation_percentile=self.aggregation_percentile, seed=self.seed)

    def backtest(self, period: Window, hyper: Tuple[float, float]) -> BacktestConfig:
        return BacktestConfig(period=period, frequency=min(self.frequency, period[1] - period[0]),
                              n_os=self.n_os, hyper=hyper, fwd=self.forward(), model=self.model)

    def check(self) -> None:
        if self.training and self.validation and self.training[1] > self.validation[0]:
            raise ConfigError("training period must end on or before the validation start")
        if self.validation and self.operation is not None and self.operation != self.validation[1]:
            raise ConfigError("operation date must be the day right after the validation period")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


def _compose(text: str, source: str):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{where}: {getattr(exc, 'problem', None) or exc}") from None
    return node


def _walk(node, schema, source: str, path: str = ""):
    """Typed dict from a YAML node, reporting unknown keys and bad types by line."""
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{source}:{node.start_mark.line + 1}: expected a mapping{' for ' + path if path else ''}")
    out = {}
    for key_node, val_node in node.value:
        key = key_node.value
        line = key_node.start_mark.line + 1
        if key not in schema:
            raise ConfigError(f"{source}:{line}: unknown key {path + key!r}")
        kind = schema[key]
        if isinstance(kind, dict):
            out[key] = _walk(val_node, kind, source, path + key + ".")
            continue
        value = yaml.safe_load(yaml.serialize(val_node))
        try:
            if kind is list:
                if not isinstance(value, list):
                    raise TypeError
            elif kind is bool:
                if not isinstance(value, bool):
                    raise TypeError
            elif kind is str:
                value = str(value)
            elif kind is not object:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise TypeError
                if kind is int and value != int(value):
                    raise TypeError
                value = kind(value)
        except TypeError:
            raise ConfigError(f"{source}:{line}: {path + key} must be {kind.__name__}") from None
        out[key] = (value, line)
    return out


def _period(pair, source, line) -> Window:
    if len(pair) != 2:
        raise ConfigError(f"{source}:{line}: a period is [start, end]")
    try:
        a, b = day_of(str(pair[0])), day_of(str(pair[1]))
    except ValueError as exc:
        raise ConfigError(f"{source}:{line}: {exc}") from None
    if b <= a:
        raise ConfigError(f"{source}:{line}: period end must follow its start")
    return (a, b)


def load_config(path: Optional[str]) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    node = _compose(text, path)
    if node is None:
        return cfg
    doc = _walk(node, _SCHEMA, path)
    base = os.path.dirname(os.path.abspath(path))

    for key in ("seed", "jobs", "diagnostics"):
        if key in doc:
            setattr(cfg, key, doc[key][0])
    for key in ("data", "out"):
        if key in doc:
            v = doc[key][0]
            setattr(cfg, key, v if os.path.isabs(v) else os.path.join(base, v))
    if "skus" in doc:
        v, line = doc["skus"]
        if v == "all":
            cfg.skus = None
        elif isinstance(v, list):
            cfg.skus = [str(s) for s in v]
        else:
            raise ConfigError(f"{path}:{line}: skus must be 'all' or a list")
    periods = doc.get("periods", {})
    if "training" in periods:
        cfg.training = _period(periods["training"][0], path, periods["training"][1])
    if "validation" in periods:
        cfg.validation = _period(periods["validation"][0], path, periods["validation"][1])
    if "operation" in periods:
        v, line = periods["operation"]
        try:
            cfg.operation = day_of(v)
        except ValueError as exc:
            raise ConfigError(f"{path}:{line}: {exc}") from None
    grid = doc.get("grid", {})
    if grid:
        try:
            cfg.grid = HyperGrid(
                tuple(_frac(v) for v in grid["slp"][0]) if "slp" in grid else DEFAULT_SLP,
                tuple(_frac(v) for v in grid["stp"][0]) if "stp" in grid else (0.0,),
            )
        except ValueError as exc:
            line = min(item[1] for item in grid.values())
            raise ConfigError(f"{path}:{line}: {exc}") from None
    hyper = doc.get("hyper", {})
    if hyper:
        if set(hyper) != {"slp", "stp"}:
            raise ConfigError(f"{path}:{min(i[1] for i in hyper.values())}: hyper needs both slp and stp")
        cfg.hyper = (hyper["slp"][0], hyper["stp"][0])
    model = doc.get("model", {})
    mp = {k: model[k][0] for k in ("n_c", "n_u", "b_usw", "l_min_usw") if k in model}
    cfg.model = replace(cfg.model, **mp)
    for key in ("n_r", "n_os", "frequency", "max_iterations", "aggregation_percentile"):
        if key in model:
            setattr(cfg, key, model[key][0])
    return cfg


def _frac(v) -> float:
    """Accept fractions or percentages (``92.5`` means 0.925)."""
    v = float(v)
    return v / 100.0 if v > 1.0 else v


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    for key in ("data", "out", "seed", "jobs"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "skus", None):
        cfg.skus = [s.strip() for s in args.skus.split(",") if s.strip()]
    if getattr(args, "slp", None) is not None or getattr(args, "stp", None) is not None:
        if args.slp is None or args.stp is None:
            raise ConfigError("--slp and --stp must be given together")
        cfg.hyper = (_frac(args.slp), _frac(args.stp))
    for key in ("n_r", "n_os", "frequency"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "diagnostics", False):
        cfg.diagnostics = True
    cfg.check()
    return cfg


# --- fleet execution -------------------------------------------------------------

def _map(fn: Callable, items: Sequence, jobs: int) -> List:
    """Apply ``fn`` to every item; results come back in input order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _guard(fn, *args):
    """Run one SKU's work, turning exceptions into an error string."""
    try:
        return fn(*args), None
    except Exception as exc:  # noqa: BLE001 - one bad SKU must not abort the fleet
        return None, f"{type(exc).__name__}: {exc}"


def _load(cfg: RunConfig) -> Dict[str, SkuDataset]:
    try:
        return load_fleet(cfg.data, cfg.skus)
    except IngestError as exc:
        raise ConfigError(str(exc)) from None


def _write_errors(out: str, errors: Dict[str, str]) -> None:
    path = os.path.join(out, "errors.json")
    if errors:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(dict(sorted(errors.items())), fh, indent=2)
            fh.write("\n")
        for sku, msg in sorted(errors.items()):
            log.error("%s: %s", sku, msg)
    elif os.path.exists(path):
        os.remove(path)


def _hyper_for(cfg: RunConfig, sku: str) -> Tuple[float, float]:
    if cfg.hyper is not None:
        return cfg.hyper
    path = os.path.join(cfg.out, f"train_report_{sku}.json")
    if not os.path.exists(path):
        raise ConfigError(f"no hyper-parameters for {sku}: run 'train' first or pass --slp and --stp")
    return TrainReport.load_choice(path)


# --- train -----------------------------------------------------------------------

def _train_one(job):
    ds, cfg = job
    bt = cfg.backtest(cfg.training, (cfg.grid.slp_candidates[0], cfg.grid.stp_candidates[0]))
    return _guard(train, ds, cfg.grid, bt, cfg.training)


def cmd_train(cfg: RunConfig) -> int:
    if cfg.training is None:
        raise ConfigError("periods.training is required for train")
    fleet = _load(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    skus = sorted(fleet)
    results = _map(_train_one, [(fleet[s], cfg) for s in skus], cfg.jobs)
    errors = {}
    for sku, (report, err) in zip(skus, results):
        if err:
            errors[sku] = err
            continue
        report.dump(os.path.join(cfg.out, f"train_report_{sku}.json"))
        log.info("%s: chose slp=%.3f stp=%.3f%s", sku, *report.chosen,
                 " (no feasible cell)" if report.infeasible else "")
    _write_errors(cfg.out, errors)
    return 1 if errors else 0


# --- validate --------------------------------------------------------------------

def _validate_one(job):
    ds, cfg = job
    return _guard(lambda: run_backtest(ds, cfg.backtest(cfg.validation, _hyper_for(cfg, ds.sku_id))))


def _write_diagnostics(out: str, res: BacktestResult) -> None:
    for step in res.steps:
        tag = f"{res.sku_id}_{iso(step.t)}"
        dump_uncertainties(step.uset, os.path.join(out, f"uncertainties_{tag}.csv"))
        dump_trace(step.result, os.path.join(out, f"kiter_{tag}.csv"))


def run_validation(cfg: RunConfig, fleet: Dict[str, SkuDataset]):
    skus = sorted(fleet)
    results = _map(_validate_one, [(fleet[s], cfg) for s in skus], cfg.jobs)
    ok, errors = {}, {}
    for sku, (res, err) in zip(skus, results):
        if err:
            errors[sku] = err
        else:
            ok[sku] = res
    return ok, errors


def cmd_validate(cfg: RunConfig) -> int:
    if cfg.validation is None:
        raise ConfigError("periods.validation is required for validate")
    fleet = _load(cfg)
    if cfg.hyper is None:
        for sku in sorted(fleet):
            _hyper_for(cfg, sku)
    os.makedirs(cfg.out, exist_ok=True)
    ok, errors = run_validation(cfg, fleet)
    rows = []
    for sku in sorted(ok):
        res = ok[sku]
        rows.extend((d, sku, rp) for d, rp in res.recommendations)
        if res.op_reorder is not None:
            rows.append((res.period[1], sku, res.op_reorder))
        write_trajectory(os.path.join(cfg.out, f"trajectory_{sku}.csv"), res, fleet[sku])
        if cfg.diagnostics:
            _write_diagnostics(cfg.out, res)
    write_recommendations(os.path.join(cfg.out, "recommendations.csv"), rows)
    scored = [r for r in ok.values() if r.terms is not None and r.terms.denom > 0]
    if scored:
        write_metrics(os.path.join(cfg.out, "metrics.json"), fleet_metrics(scored),
                      {r.sku_id: r.metrics for r in scored})
    else:
        log.error("no SKU produced scoreable metrics")
    _write_errors(cfg.out, errors)
    return 1 if errors else 0


# --- recommend -------------------------------------------------------------------

def _recommend_one(job):
    """``(reorder, error, skipped)`` for one SKU; missing history is a skip, not an error."""
    ds, cfg, today = job
    try:
        bt = cfg.backtest((today, today + 1), _hyper_for(cfg, ds.sku_id))
        return recommend_live(ds, bt, today).reorder, None, False
    except ValidationError as exc:
        return None, str(exc), True
    except Exception as exc:  # noqa: BLE001
        return None, f"{type(exc).__name__}: {exc}", False


def cmd_recommend(cfg: RunConfig, today: Optional[Day]) -> int:
    if today is None:
        today = cfg.operation if cfg.operation is not None else (cfg.validation[1] if cfg.validation else None)
    if today is None:
        raise ConfigError("recommend needs --today or periods.validation")
    fleet = _load(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    skus = sorted(fleet)
    results = _map(_recommend_one, [(fleet[s], cfg, today) for s in skus], cfg.jobs)
    rows, errors = [], {}
    for sku, (rp, err, skipped) in zip(skus, results):
        if err is None:
            rows.append((today, sku, rp))
        elif skipped:
            log.warning("%s: skipped, %s", sku, err)
        else:
            errors[sku] = err
    write_recommendations(os.path.join(cfg.out, "recommendations.csv"), rows)
    _write_errors(cfg.out, errors)
    return 1 if errors else 0


# --- simulate-mrp ----------------------------------------------------------------

def cmd_simulate_mrp(cfg: RunConfig, sku: str, date: Day, ssv: float, st: int) -> int:
    ds = _load(replace(cfg, skus=[sku]))[sku]
    p = ds.params
    _, fc = SamplingSlice.from_dataset(ds, date, p).row(st)
    inp = MrpInput.build(ds.actual_inventory.at(date), fc, p, ReorderParams(ssv, st),
                         std_arrivals=ds.orders.planned_arrivals(date, p.horizon), start=date)
    out = run_mrp(inp)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"mrp_{sku}_{iso(date)}.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "forecast", "std_arrivals", "exp_arrivals", "projected", "cancelled"])
        for i in range(p.horizon):
            w.writerow([iso(date + i), repr(float(fc[i])), repr(float(out.std_arrivals.values[i])),
                        repr(float(out.exp_arrivals.values[i])), repr(float(out.projected.values[i + 1])),
                        repr(float(out.cancelled.values[i]))])
    return 0


# --- sensitivity -----------------------------------------------------------------

def _parse_values(axis: str, text: str):
    try:
        if axis == "slp_list":
            return [tuple(_frac(v) for v in grp.split(",")) for grp in text.split(";") if grp.strip()]
        if axis in ("b_usw", "N_r"):
            return [int(v) for v in text.split(",")]
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse values {text!r} for axis {axis}") from None


def sensitivity_point(cfg: RunConfig, fleet: Dict[str, SkuDataset], axis: str, value):
    if axis == "n_c":
        cfg = replace(cfg, model=replace(cfg.model, n_c=value))
    elif axis == "n_u":
        cfg = replace(cfg, model=replace(cfg.model, n_u=value))
    elif axis == "b_usw":
        cfg = replace(cfg, model=replace(cfg.model, b_usw=value))
    elif axis == "N_r":
        cfg = replace(cfg, n_r=value)
    elif axis == "slp_list":
        if cfg.training is None:
            raise ConfigError("axis slp_list needs periods.training")
        grid = HyperGrid(value, cfg.grid.stp_candidates)
        ok, errors = {}, {}
        for sku in sorted(fleet):
            bt = cfg.backtest(cfg.training, (value[0], grid.stp_candidates[0]))
            report, err = _guard(train, fleet[sku], grid, bt, cfg.training)
            if err is None:
                res, err = _guard(run_backtest, fleet[sku], cfg.backtest(cfg.validation, report.chosen))
            if err:
                errors[sku] = err
            else:
                ok[sku] = res
        return ok, errors
    return run_validation(cfg, fleet)


def cmd_sensitivity(cfg: RunConfig, axis: str, values_text: str) -> int:
    if axis not in SENSITIVITY_AXES:
        raise ConfigError(f"unknown axis {axis!r}; choose from {', '.join(SENSITIVITY_AXES)}")
    if cfg.validation is None:
        raise ConfigError("periods.validation is required for sensitivity")
    values = _parse_values(axis, values_text)
    fleet = _load(cfg)
    if cfg.hyper is None and axis != "slp_list":
        for sku in sorted(fleet):
            _hyper_for(cfg, sku)
    os.makedirs(cfg.out, exist_ok=True)
    rows, all_errors = [], {}
    for value in values:
        ok, errors = sensitivity_point(cfg, fleet, axis, value)
        all_errors.update({f"{sku}@{value}": e for sku, e in errors.items()})
        scored = [r for r in ok.values() if r.terms is not None and r.terms.denom > 0]
        label = "|".join(repr(v) for v in value) if isinstance(value, tuple) else repr(value)
        if not scored:
            rows.append([label, "nan", "nan", "nan", "nan"])
            continue
        m = fleet_metrics(scored)
        rows.append([label, repr(m.r_ad), repr(m.s_inv_bar), repr(m.s_ss_bar), repr(m.s_ss_op)])
    with open(os.path.join(cfg.out, f"sensitivity_{axis}.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "r_ad", "s_inv_bar", "s_ss_bar", "s_ss_op"])
        w.writerows(rows)
    _write_errors(cfg.out, all_errors)
    return 1 if all_errors else 0


# --- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--data", help="input data directory")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--skus", help="comma-separated SKU ids (default: all)")
    common.add_argument("--jobs", type=int, help="parallel worker processes across SKUs")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--slp", type=float, help="service level percentile (bypasses training)")
    run.add_argument("--stp", type=float, help="safety time percentile (bypasses training)")
    run.add_argument("--n-r", dest="n_r", type=int, help="k-iteration realizations")
    run.add_argument("--n-os", dest="n_os", type=int, help="order-simulation realizations")
    run.add_argument("--frequency", type=int, help="days between re-optimizations")

    ap = argparse.ArgumentParser(prog="reorderopt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common, run], help="grid-search SLP/STP on the training period")
    v = sub.add_parser("validate", parents=[common, run], help="backtest over the validation period")
    v.add_argument("--diagnostics", action="store_true", help="also dump distributions and k-iteration traces")
    r = sub.add_parser("recommend", parents=[common, run], help="live recommendation at a given day")
    r.add_argument("--today", help="ISO date (default: operation date)")
    m = sub.add_parser("simulate-mrp", parents=[common], help="run one MRP pass for debugging")
    m.add_argument("--sku", required=True)
    m.add_argument("--date", required=True)
    m.add_argument("--ssv", type=float, default=0.0)
    m.add_argument("--st", type=int, default=0)
    s = sub.add_parser("sensitivity", parents=[common, run], help="sweep one model parameter")
    s.add_argument("--axis", required=True, choices=SENSITIVITY_AXES)
    s.add_argument("--values", required=True,
                   help="comma-separated values; for slp_list, ';'-separated comma lists")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_flags(load_config(args.config), args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "recommend":
            return cmd_recommend(cfg, day_of(args.today) if args.today else None)
        if args.command == "simulate-mrp":
            return cmd_simulate_mrp(cfg, args.sku, day_of(args.date), args.ssv, args.st)
        return cmd_sensitivity(cfg, args.axis, args.values)
    except (ConfigError, IngestError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
