"""Spread of the fleet inventory saving across seeds as the realization count grows."""
import argparse

import numpy as np

from reorderopt.backtest import BacktestConfig, fleet_metrics, run_backtest
from reorderopt.optimizer import ForwardSimConfig
from reorderopt.synthetic import fleet


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--values", default="25,50,100,250,500")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--skus", type=int, default=5)
    args = ap.parse_args()
    skus = fleet(args.skus, seed=21, n_days=120, demand_sd=3.0)
    print("n_r,mean_s_inv_bar,std_s_inv_bar")
    for n_r in (int(v) for v in args.values.split(",")):
        vals = []
        for seed in range(args.seeds):
            res = []
            for ds in skus.values():
                a = ds.span[0] + 60
                res.append(run_backtest(ds, BacktestConfig(
                    period=(a, a + 60), frequency=30, n_os=3, hyper=(0.9, 0.0),
                    fwd=ForwardSimConfig(n_realizations=n_r, seed=seed))))
            vals.append(fleet_metrics(res).s_inv_bar)
        print(f"{n_r},{np.mean(vals):.5f},{np.std(vals, ddof=1):.5f}")


if __name__ == "__main__":
    main()
