"""Sweep merge-rule settings on one benchmark cell and report cluster counts.

Shows how the estimated count, retained count and purity react to theta0,
theta1, the point-pair level, the sweep mode and the centroid gate.

    python3 scripts/merge_rule_grid.py --p 5 --seeds 3 --n-per-cluster 300
"""

import argparse
import itertools

from streamclust.engine import EngineConfig, process_stream
from streamclust.synth import SyntheticSpec, generate, score


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--p", type=int, default=5)
    ap.add_argument("--chunk", type=int, default=25)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--n-per-cluster", type=int, default=300)
    a = ap.parse_args()

    grid = itertools.product(
        (1.0, 1.1, 3.0),  # theta0
        (1.0, 0.2),  # theta1
        (0.95, 0.99),  # point-pair chi-square level
        ("stop", "exhaustive"),
        (False, True),  # centroid gate
    )
    streams = [generate(SyntheticSpec(k=a.k, p=a.p, points_per_cluster=a.n_per_cluster, seed=s))
               for s in range(a.seeds)]
    print("theta0 theta1 level  sweep      gate  | clusters per seed | retained | min purity")
    for t0, t1, lvl, sweep, gate in grid:
        cfg = EngineConfig(theta0=t0, theta1=t1, theta2_level=lvl, chunk_size=a.chunk,
                           init_clusters=a.k, sweep_mode=sweep, centroid_gate=gate)
        scores = [score(process_stream(g.points, cfg)[1], g.labels) for g in streams]
        counts = [s["estimated_clusters"] for s in scores]
        print(f"{t0:6.2f} {t1:6.2f} {lvl:5.2f}  {sweep:10s} {str(gate):5s} | {counts} | "
              f"{max(s['retained_count'] for s in scores)} | {min(s['purity'] for s in scores):.3f}")


if __name__ == "__main__":
    main()
