"""Synthetic Gaussian-mixture benchmark streams and run scoring."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .errors import InvalidInput

__all__ = ["SyntheticSpec", "SyntheticStream", "generate", "write_csv", "score", "final_assignment"]


@dataclass(frozen=True)
class SyntheticSpec:
    k: int = 5
    p: int = 5
    points_per_cluster: int = 1000
    mean_range: tuple[float, float] = (-5.0, 5.0)
    eig_beta: tuple[float, float] = (0.5, 0.5)
    eig_range: tuple[float, float] = (0.5, 2.5)
    m_range: tuple[float, float] = (-2.0, 2.0)
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.k < 1 or self.p < 1 or self.points_per_cluster < 1:
            raise InvalidInput("k, p and points_per_cluster must be positive")
        for lo, hi in (self.mean_range, self.eig_range, self.m_range):
            if hi < lo:
                raise InvalidInput("empty range")


@dataclass(frozen=True)
class SyntheticStream:
    points: np.ndarray
    labels: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    eigenvalues: np.ndarray


def generate(spec: SyntheticSpec) -> SyntheticStream:
    """Draw k Gaussian clusters with random rotated covariances.

    Each covariance is U H U^T: H holds Beta-distributed eigenvalues mapped
    affinely onto ``eig_range``, U the singular vectors of M M^T for a
    uniform random M.
    """
    rng = np.random.default_rng(spec.seed)
    k, p, m = spec.k, spec.p, spec.points_per_cluster
    lo, hi = spec.eig_range
    means = rng.uniform(*spec.mean_range, size=(k, p))
    covs = np.empty((k, p, p))
    eigs = np.empty((k, p))
    blocks = []
    for c in range(k):
        h = lo + (hi - lo) * rng.beta(*spec.eig_beta, size=p)
        M = rng.uniform(*spec.m_range, size=(p, p))
        U, _, _ = np.linalg.svd(M @ M.T)
        covs[c] = (U * h) @ U.T
        eigs[c] = h
        z = rng.standard_normal((m, p))
        blocks.append(means[c] + (z * np.sqrt(h)) @ U.T)
    X = np.concatenate(blocks)
    y = np.repeat(np.arange(k), m)
    if spec.shuffle:
        order = rng.permutation(len(X))
        X, y = X[order], y[order]
    return SyntheticStream(X, y, means, covs, eigs)


def write_csv(out: TextIO, points: np.ndarray, labels: np.ndarray | None = None) -> None:
    w = csv.writer(out, lineterminator="\n")
    for i, row in enumerate(points):
        cells = [repr(float(v)) for v in row]
        if labels is not None:
            cells.append(str(int(labels[i])))
        w.writerow(cells)


def final_assignment(events: Iterable[dict], n_points: int) -> np.ndarray:
    """Final cluster id per stream position, -1 for retained/outlier points.

    Replays the event log: every absorption, pair formation and merge is
    followed to the cluster that survives at the end.
    """
    owner = np.full(n_points, -1, dtype=np.int64)
    members: dict[int, list[int]] = {}

    def put(seq: int, cid: int) -> None:
        owner[seq] = cid
        members.setdefault(cid, []).append(seq)

    for ev in events:
        t = ev.get("type")
        if t == "bootstrap":
            for s in ev["seqs"]:
                put(s, ev["cluster_id"])
        elif t == "assign":
            if ev["kind"] == "discard":
                put(ev["seq"], ev["cluster_id"])
            elif ev["kind"] == "new_pair":
                put(ev["partner"], ev["cluster_id"])
                put(ev["seq"], ev["cluster_id"])
        elif t == "merge":
            a, b = ev["ids"]
            res = ev["result"]
            if ev["kind"] == "cluster_cluster":
                moved = members.pop(int(b[1:]), [])
                for s in moved:
                    put(s, res)
            elif ev["kind"] == "point_cluster":
                put(int(b[1:]), res)
            else:
                put(int(a[1:]), res)
                put(int(b[1:]), res)
    return owner


def score(report, labels: np.ndarray, min_fraction: float = 0.01) -> dict:
    """Cluster count, retained count, small-cluster count and purity of a finished run.

    Clusters holding fewer than ``min_fraction`` of the stream are counted
    as outlier groups, not as estimated clusters.
    """
    labels = np.asarray(labels)
    if report.events is None:
        raise InvalidInput("report carries no event log")
    n = len(labels)
    seen = report.counters["processed"]
    if seen != n:
        raise InvalidInput(f"{n} labels for {seen} processed points")
    owner = final_assignment(report.events, n)
    min_size = min_fraction * n
    sizes = dict(zip(report.cluster_ids, report.sizes))
    big = [c for c, s in sizes.items() if s >= min_size]

    hits = 0
    clustered = 0
    for cid in sizes:
        idx = np.flatnonzero(owner == cid)
        if idx.size != sizes[cid]:
            raise InvalidInput(f"event replay disagrees with cluster {cid} size")
        if idx.size:
            hits += Counter(labels[idx].tolist()).most_common(1)[0][1]
            clustered += idx.size
    return {
        "estimated_clusters": len(big),
        "total_clusters": len(sizes),
        "small_cluster_count": len(sizes) - len(big),
        "retained_count": report.retained_count,
        "outlier_count": len(report.outliers),
        "purity": hits / clustered if clustered else 0.0,
    }
