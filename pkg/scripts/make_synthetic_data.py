"""Write a seeded synthetic fleet in the CSV layout the loader reads."""
import argparse

from reorderopt.ingest import write_fleet
from reorderopt.synthetic import fleet


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", help="directory to create")
    ap.add_argument("--skus", type=int, default=10)
    ap.add_argument("--days", type=int, default=240)
    ap.add_argument("--horizon", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--demand-sd", type=float, default=3.0)
    ap.add_argument("--late", type=float, default=0.2, help="probability an order lands one day late")
    args = ap.parse_args()
    datasets = fleet(args.skus, seed=args.seed, n_days=args.days, horizon=args.horizon, demand_sd=args.demand_sd,
                     delay_probs=(1.0 - args.late, args.late))
    write_fleet(args.out, datasets.values())
    first = next(iter(datasets.values()))
    print(f"wrote {len(datasets)} SKUs to {args.out}, days {first.span[0]}..{first.span[1]} (epoch days)")


if __name__ == "__main__":
    main()
