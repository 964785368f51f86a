"""Run the synthetic benchmark matrix and print a results table.

    python3 scripts/run_benchmark.py --k 5 --p 5,10 --seeds 3
    python3 scripts/run_benchmark.py --centroid-gate --sweep exhaustive --csv out.csv
"""

import argparse
import dataclasses

from streamclust import benchmark
from streamclust.engine import EngineConfig


def ints(s):
    return [int(t) for t in s.split(",")]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--k", type=ints, default=[5, 20])
    ap.add_argument("--p", type=ints, default=[5, 10, 20])
    ap.add_argument("--chunk", type=ints, default=[25, 50])
    ap.add_argument("--metric", default="full,diagonal")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--n-per-cluster", type=int, default=1000)
    ap.add_argument("--sweep", choices=("stop", "exhaustive"), default="stop")
    ap.add_argument("--centroid-gate", action="store_true")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--csv")
    a = ap.parse_args()

    engine = dataclasses.replace(EngineConfig(), sweep_mode=a.sweep, centroid_gate=a.centroid_gate)
    settings = benchmark.BenchSettings(
        points_per_cluster=a.n_per_cluster, seeds=tuple(range(a.seeds)), engine=engine
    )
    cells = benchmark.matrix(a.k, a.p, a.chunk, a.metric.split(","))
    results = benchmark.run_matrix(cells, settings, jobs=a.jobs)
    print(benchmark.to_text(results))
    if a.csv:
        with open(a.csv, "w") as fh:
            fh.write(benchmark.to_csv(results))


if __name__ == "__main__":
    main()
