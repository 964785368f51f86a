"""Secondary compression: agglomerative merging of clusters and retained points.

Three kinds of objects pair up, each with its own distance and density test:

* cluster/cluster: trace-weighted mean of the two one-sided Mahalanobis
  distances between centroids, merged when it is below ``theta0`` times the
  distance under the two clusters' pooled covariance;
* point/cluster: Mahalanobis distance to the centroid, merged when below
  ``theta1 * tr(S_hat)``;
* point/point: distance under the all-cluster pooled covariance, paired
  when below ``theta2`` (a chi-square quantile).

The globally closest pair is examined first. In ``"stop"`` mode the sweep
ends at the first pair that fails its test; ``"exhaustive"`` mode skips
failing pairs, i.e. always merges the closest pair that passes.

The cluster/cluster ratio test compares two distances between the same
centroids, so it does not depend on how far apart they are. With
``centroid_gate`` a cluster pair must additionally have pooled distance
below ``theta2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .metric import chi2_quantile, lower_factor, mahalanobis_sq_factor, whiten
from .primary import ModelState
from .shrinkage import MetricMode, shrink
from .summary import ClusterSummary, add_point, centroid, merge, summary_from_pair

__all__ = [
    "Thresholds",
    "cluster_cluster_distance",
    "point_cluster_distance",
    "point_point_distance",
    "secondary_compress",
]

SweepMode = Literal["stop", "exhaustive"]


@dataclass(frozen=True)
class Thresholds:
    theta0: float = 1.0
    theta1: float = 1.0
    theta2: float = 11.0705  # overwritten by for_dim in practice
    centroid_gate: bool = False

    @classmethod
    def for_dim(cls, dim: int, theta0: float = 1.0, theta1: float = 1.0, level: float = 0.95) -> "Thresholds":
        return cls(theta0, theta1, chi2_quantile(level, float(dim)))


def cluster_cluster_distance(
    s1: ClusterSummary, s2: ClusterSummary, mode: MetricMode = "full"
) -> tuple[float, float]:
    """(trace-weighted combined distance, pooled-covariance distance) between centroids."""
    m1, m2 = shrink(s1, mode), shrink(s2, mode)
    gap = centroid(s1) - centroid(s2)
    d1 = mahalanobis_sq_factor(m1.chol, gap)
    d2 = mahalanobis_sq_factor(m2.chol, gap)
    t1, t2 = m1.trace, m2.trace
    combined = (t1 * d1 + t2 * d2) / (t1 + t2)
    pooled = (s1.n * m1.matrix + s2.n * m2.matrix) / (s1.n + s2.n)
    return combined, mahalanobis_sq_factor(lower_factor(pooled), gap)


def point_cluster_distance(x: np.ndarray, s: ClusterSummary, mode: MetricMode = "full") -> float:
    return mahalanobis_sq_factor(shrink(s, mode).chol, np.asarray(x, dtype=np.float64) - centroid(s))


def point_point_distance(x1: np.ndarray, x2: np.ndarray, pooled: np.ndarray) -> float:
    return mahalanobis_sq_factor(
        lower_factor(pooled), np.asarray(x1, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
    )


class _Sweep:
    """Distance bookkeeping for one secondary-compression sweep."""

    def __init__(self, model: ModelState, th: Thresholds):
        self.model = model
        self.th = th
        self.mode = model.config.metric_mode
        self._cc = model.pair_cache

    def _cc_pair(self, a: int, b: int) -> tuple[float, float]:
        sa, sb = self.model.clusters[a], self.model.clusters[b]
        hit = self._cc.get((a, b))
        if hit is not None and hit[0] is sa and hit[1] is sb:
            return hit[2], hit[3]
        comb, pool = cluster_cluster_distance(sa, sb, self.mode)
        self._cc[(a, b)] = (sa, sb, comb, pool)
        return comb, pool

    def best(self, passing_only: bool) -> tuple | None:
        """Closest pair as (distance, kind, key_a, key_b, passes, threshold).

        With ``passing_only`` the closest pair that passes its test, which is
        where skipping every failing pair in distance order would land.
        """
        model, th = self.model, self.th
        ids = model.cluster_ids()
        found = []
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                comb, pool = self._cc_pair(a, b)
                bound = th.theta0 * pool
                ok = comb < bound and (not th.centroid_gate or pool < th.theta2)
                if ok or not passing_only:
                    found.append((comb, "cluster_cluster", (0, a), (0, b), ok, bound))
        rs = list(model.retained)
        if rs:
            R = np.array([r.x for r in rs])
            seqs = [r.seq for r in rs]
            if ids:
                D = np.empty((len(ids), len(rs)))
                bounds = np.empty(len(ids))
                for k, cid in enumerate(ids):
                    s = model.clusters[cid]
                    m = shrink(s, self.mode)
                    D[k] = np.atleast_1d(mahalanobis_sq_factor(m.chol, R - centroid(s)))
                    bounds[k] = th.theta1 * m.trace
                if passing_only:
                    D[D >= bounds[:, None]] = np.inf
                k, j = np.unravel_index(int(np.argmin(D)), D.shape)
                if np.isfinite(D[k, j]):
                    d = float(D[k, j])
                    found.append((d, "point_cluster", (0, ids[k]), (1, seqs[j]), d < bounds[k], float(bounds[k])))
            if len(rs) > 1:
                Z = whiten(model.pooled_factor(), R.T).T
                D = squareform(pdist(Z, "sqeuclidean"))
                D[np.tril_indices(len(rs))] = np.inf
                if passing_only:
                    D[D >= th.theta2] = np.inf
                i, j = np.unravel_index(int(np.argmin(D)), D.shape)
                if np.isfinite(D[i, j]):
                    d = float(D[i, j])
                    found.append((d, "point_point", (1, seqs[i]), (1, seqs[j]), d < th.theta2, th.theta2))
        if not found:
            return None
        return min(found, key=lambda c: (c[0], c[2], c[3]))


def _apply(model: ModelState, kind: str, ka: tuple, kb: tuple) -> int:
    if kind == "cluster_cluster":
        a, b = ka[1], kb[1]
        model.clusters[a] = merge(model.clusters[a], model.clusters.pop(b))
        return a
    rs = {r.seq: r for r in model.retained}
    if kind == "point_cluster":
        cid, seq = ka[1], kb[1]
        r = rs[seq]
        model.retained.remove(r)
        model.clusters[cid] = add_point(model.clusters[cid], r.x)
        return cid
    r1, r2 = rs[ka[1]], rs[kb[1]]
    model.retained.remove(r1)
    model.retained.remove(r2)
    model.counters.pairs_formed += 1
    return model.new_cluster(summary_from_pair(r1.x, r2.x))


def secondary_compress(model: ModelState, thresholds: Thresholds, sweep_mode: SweepMode = "stop") -> int:
    """Merge until the closest admissible pair fails its density test. Returns the merge count."""
    sweep = _Sweep(model, thresholds)
    merges = 0
    while True:
        best = sweep.best(passing_only=sweep_mode == "exhaustive")
        if best is None:
            break
        dist, kind, ka, kb, ok, bound = best
        if not ok:
            break
        result = _apply(model, kind, ka, kb)
        if kind == "cluster_cluster":
            gone = kb[1]
            for key in [k for k in model.pair_cache if gone in k]:
                del model.pair_cache[key]
        merges += 1
        model.counters.merges += 1
        model.emit(
            {
                "type": "merge",
                "kind": kind,
                "ids": [_label(ka), _label(kb)],
                "result": result,
                "distance": dist,
                "threshold": bound,
            }
        )
    return merges


def _label(key: tuple) -> str:
    return ("c" if key[0] == 0 else "r") + str(key[1])
