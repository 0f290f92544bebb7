"""Test NLL as a function of the number of averaged forests.

Uses a heteroscedastic synthetic problem by default, or a UCI dataset
with --dataset.  Writes a CSV of (m, nll).
"""
import argparse

import numpy as np

from presto import eval as ev


def synthetic(n=1500, seed=0):
    r = np.random.default_rng(seed)
    X = r.uniform(-1, 1, size=(n, 3))
    y = np.sin(np.pi * X[:, 0]) + 0.5 * X[:, 1] + (0.2 + 0.3 * np.abs(X[:, 2])) * r.normal(size=n)
    return X, y


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dataset", help="registered dataset name; synthetic data if omitted")
    p.add_argument("--m-max", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="results/learning_curve.csv")
    args = p.parse_args(argv)
    if args.dataset:
        ds = ev.resolve_dataset(args.dataset)
        data = ds.load()
    else:
        ds = ev.DatasetConfig("synthetic", "", learning_rate=0.1, max_depth=3)
        data = synthetic(seed=args.seed)
    curve = ev.learning_curve(ev.TrialSpec(ds.name, seed=args.seed), args.m_max, ds, data)
    ev.write_curve_csv(args.output, curve)
    for m, nll in curve:
        if m in (1, 2, 5, 10, 25, 50, 100) or m == args.m_max:
            print(f"m={m:4d}  nll={nll:.4f}")


if __name__ == "__main__":
    main()
