"""Median weight left on the sample covariance as the cluster grows.

The estimator should lean on S more and more as n increases.

    python3 scripts/shrinkage_consistency.py --p 5 --reps 100
"""

import argparse

import numpy as np

from streamclust.shrinkage import shrink
from streamclust.summary import summary_from_points
from streamclust.synth import SyntheticSpec, generate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--p", type=int, default=5)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()

    sigma = generate(SyntheticSpec(k=1, p=a.p, points_per_cluster=1, seed=a.seed)).covariances[0]
    L = np.linalg.cholesky(sigma)
    rng = np.random.default_rng(a.seed)
    print("     n   median(1 - l_I - l_D)   median l_I   median l_D")
    for n in (10, 30, 100, 300, 1000, 3000, 10000):
        w = [shrink(summary_from_points(rng.standard_normal((n, a.p)) @ L.T)).weights for _ in range(a.reps)]
        print(f"{n:6d}   {np.median([x.sample_weight for x in w]):21.4f}"
              f"   {np.median([x.lambda_i for x in w]):10.4f}   {np.median([x.lambda_d for x in w]):10.4f}")


if __name__ == "__main__":
    main()
