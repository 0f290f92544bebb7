"""Predicted density for a two-component Gaussian mixture target.

The features carry no information, so the prediction should recover
0.5 N(-2, 0.3^2) + 0.5 N(2, 0.3^2).  Prints the density on a coarse grid
next to the true mixture.
"""
from dataclasses import replace

import numpy as np
from scipy.stats import norm

from presto.density import BinPartition, PiecewiseConstantDensity
from presto.model import PrestoConfig, default_gbdt, presto_fit


def main():
    r = np.random.default_rng(10)
    n = 2000
    y = np.where(r.random(n) < 0.5, -2.0, 2.0) + 0.3 * r.normal(size=n)
    X = r.normal(size=(n, 2))
    cfg = PrestoConfig(m=10, gbdt=replace(default_gbdt(), learning_rate=0.1, max_depth=3), seed=0)
    model = presto_fit(X[:1600], y[:1600], X[1600:], y[1600:], cfg)
    edges, H = model.predict_heights(np.zeros((1, 2)))
    d = PiecewiseConstantDensity(BinPartition(edges), H[0])
    for q in np.linspace(-3.5, 3.5, 29):
        true = 0.5 * norm.pdf(q, -2, 0.3) + 0.5 * norm.pdf(q, 2, 0.3)
        print(f"{q:6.2f}  predicted {float(d.pdf(q)):.3f}  true {true:.3f}")


if __name__ == "__main__":
    main()
