"""Primary compression: route each incoming point to a cluster, a new pair, or the retained set."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import InvalidInput, InvariantViolation
from .metric import lower_factor, mahalanobis_sq_factor, perturb, pooled_covariance, radius_sq
from .shrinkage import MetricMode, shrink
from .summary import ClusterSummary, add_point, packed_size, summary_from_pair

__all__ = [
    "PrimaryConfig",
    "RetainedPoint",
    "Counters",
    "ModelState",
    "AssignmentDecision",
    "assign",
]

DecisionKind = Literal["discard", "new_pair", "retain"]


@dataclass(frozen=True)
class PrimaryConfig:
    alpha: float = 0.05
    rs_capacity: int | None = None  # None -> 10 * dim
    metric_mode: MetricMode = "full"


@dataclass(frozen=True, eq=False)
class RetainedPoint:
    seq: int
    x: np.ndarray


@dataclass
class Counters:
    processed: int = 0
    discarded: int = 0
    pairs_formed: int = 0
    retained_in: int = 0
    evicted: int = 0
    nonfinite: int = 0
    merges: int = 0
    chi2_fallbacks: int = 0


@dataclass
class ModelState:
    """Mutable engine state. A single writer owns it."""

    dim: int
    config: PrimaryConfig = field(default_factory=PrimaryConfig)
    clusters: dict[int, ClusterSummary] = field(default_factory=dict)
    retained: deque = field(default_factory=deque)
    outliers: list = field(default_factory=list)
    counters: Counters = field(default_factory=Counters)
    next_id: int = 0
    events: list | None = None
    _pooled_key: tuple = field(default=(), repr=False)
    _pooled_factor: np.ndarray | None = field(default=None, repr=False)
    # (id_a, id_b) -> (summary_a, summary_b, combined, pooled); entries are checked by identity
    pair_cache: dict = field(default_factory=dict, repr=False)

    @property
    def rs_capacity(self) -> int:
        cap = self.config.rs_capacity
        return 10 * self.dim if cap is None else cap

    def new_cluster(self, s: ClusterSummary) -> int:
        cid = self.next_id
        self.next_id += 1
        self.clusters[cid] = s
        return cid

    def emit(self, event: dict) -> None:
        if self.events is not None:
            self.events.append(event)

    def cluster_ids(self) -> list[int]:
        return sorted(self.clusters)

    def clustered_points(self) -> int:
        return sum(s.n for s in self.clusters.values())

    def stored_scalars(self) -> int:
        return len(self.clusters) * packed_size(self.dim) + len(self.retained) * self.dim

    def pooled_factor(self) -> np.ndarray:
        """Cholesky factor of the count-pooled shrunk covariance (identity with no clusters)."""
        key = tuple((cid, id(s)) for cid, s in sorted(self.clusters.items()))
        if self._pooled_factor is not None and key == self._pooled_key:
            return self._pooled_factor
        if not self.clusters:
            L = np.eye(self.dim)
        else:
            mode = self.config.metric_mode
            P = pooled_covariance((s.n, shrink(s, mode).matrix) for _, s in sorted(self.clusters.items()))
            L = lower_factor(P)
        self._pooled_key, self._pooled_factor = key, L
        return L

    def retain(self, seq: int, x: np.ndarray) -> None:
        self.retained.append(RetainedPoint(seq, x))
        self.counters.retained_in += 1
        while len(self.retained) > self.rs_capacity:
            old = self.retained.popleft()
            self.outliers.append({"seq": old.seq, "x": old.x.tolist(), "reason": "rs-overflow"})
            self.counters.evicted += 1
            self.emit({"type": "evict", "seq": old.seq})

    def check_conservation(self) -> None:
        accounted = self.clustered_points() + len(self.retained) + len(self.outliers)
        if accounted != self.counters.processed:
            raise InvariantViolation(
                f"{self.counters.processed} points processed but {accounted} accounted for"
            )
        if any(s.n < 2 for s in self.clusters.values()):
            raise InvariantViolation("cluster with fewer than two points")


@dataclass(frozen=True)
class AssignmentDecision:
    kind: DecisionKind
    cluster_id: int | None = None
    retained_seq: int | None = None
    nearest_cluster: int | None = None
    distance: float | None = None
    distances: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind == "discard" and self.nearest_cluster is None:
            raise ValueError("a discard decision needs its cluster")


def cluster_distances(model: ModelState, x: np.ndarray, ids: list[int]) -> np.ndarray:
    mode = model.config.metric_mode
    out = np.empty(len(ids))
    for i, cid in enumerate(ids):
        s = model.clusters[cid]
        out[i] = mahalanobis_sq_factor(shrink(s, mode).chol, x - s.sum_vec / s.n)
    return out


def retained_distances(model: ModelState, x: np.ndarray) -> np.ndarray:
    if not model.retained:
        return np.empty(0)
    R = np.array([r.x for r in model.retained])
    return np.atleast_1d(mahalanobis_sq_factor(model.pooled_factor(), R - x))


def assign(model: ModelState, x: np.ndarray, seq: int | None = None) -> AssignmentDecision:
    """Primary compression of one point. Mutates ``model`` and returns the decision."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise InvalidInput(f"dimension mismatch: expected {model.dim}, got {x.shape}")
    if seq is None:
        seq = model.counters.processed
    model.counters.processed += 1

    ids = model.cluster_ids()
    d_c = cluster_distances(model, x, ids)
    d_r = retained_distances(model, x)
    diag = {cid: float(d) for cid, d in zip(ids, d_c)}

    best_c = int(np.argmin(d_c)) if ids else None
    best_r = int(np.argmin(d_r)) if d_r.size else None

    if best_c is None and best_r is None:
        model.retain(seq, x)
        decision = AssignmentDecision("retain", distances=diag)
    else:
        p = model.dim
        alpha = model.config.alpha
        counts = [model.clusters[cid].n for cid in ids]
        model.counters.chi2_fallbacks += sum(1 for n in counts if n <= p)
        radii = radius_sq(p, counts, alpha) if ids else np.empty(0)

        if best_r is None or (best_c is not None and d_c[best_c] <= d_r[best_r]):
            pert = perturb(d_c, radii, best_c)
            if int(np.argmin(pert)) == best_c:
                cid = ids[best_c]
                model.clusters[cid] = add_point(model.clusters[cid], x)
                model.counters.discarded += 1
                decision = AssignmentDecision(
                    "discard", cluster_id=cid, nearest_cluster=cid,
                    distance=float(d_c[best_c]), distances=diag,
                )
            else:
                model.retain(seq, x)
                decision = AssignmentDecision(
                    "retain", nearest_cluster=ids[best_c], distance=float(d_c[best_c]), distances=diag
                )
        else:
            pert = perturb(d_c, radii, None) if ids else d_c
            d_o = float(d_r[best_r])
            if not ids or d_o < float(pert.min()):
                partner = model.retained[best_r]
                del model.retained[best_r]
                cid = model.new_cluster(summary_from_pair(partner.x, x))
                model.counters.pairs_formed += 1
                decision = AssignmentDecision(
                    "new_pair", cluster_id=cid, retained_seq=partner.seq,
                    nearest_cluster=ids[best_c] if ids else None, distance=d_o, distances=diag,
                )
            else:
                model.retain(seq, x)
                decision = AssignmentDecision(
                    "retain", nearest_cluster=ids[best_c], distance=d_o, distances=diag
                )

    event = {"type": "assign", "seq": seq, "kind": decision.kind, "distance": decision.distance}
    if decision.cluster_id is not None:
        event["cluster_id"] = decision.cluster_id
    if decision.retained_seq is not None:
        event["partner"] = decision.retained_seq
    model.emit(event)
    return decision
