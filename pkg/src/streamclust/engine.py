"""Stream orchestration: bootstrap, primary routing, periodic secondary compression, reporting."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Literal

import numpy as np

from .errors import InvalidInput
from .metric import chi2_quantile
from .primary import Counters, ModelState, PrimaryConfig, RetainedPoint, assign
from .secondary import SweepMode, Thresholds, secondary_compress
from .shrinkage import MetricMode, shrink
from .summary import ClusterSummary, centroid, packed_size, summary_from_pair

log = logging.getLogger(__name__)

__all__ = [
    "EngineConfig", "RunReport", "StreamEngine", "bootstrap", "greedy_pairs", "process_stream",
    "snapshot", "load_snapshot",
]


@dataclass(frozen=True)
class EngineConfig:
    alpha: float = 0.05
    theta0: float = 1.0
    theta1: float = 1.0
    theta2_level: float = 0.95
    chunk_size: int = 25
    init_clusters: int = 5
    bootstrap_size: int | None = None  # None -> 4 * init_clusters
    rs_capacity: int | None = None  # None -> 10 * dim
    metric_mode: MetricMode = "full"
    sweep_mode: SweepMode = "stop"
    # also require the pooled centroid distance to clear the point-pair quantile
    centroid_gate: bool = False
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.chunk_size < 1:
            raise InvalidInput("chunk_size must be >= 1")
        if not 0 < self.alpha < 1:
            raise InvalidInput("alpha must lie in (0, 1)")
        if not 0 < self.theta2_level < 1:
            raise InvalidInput("theta2_level must lie in (0, 1)")
        if self.theta0 <= 0 or self.theta1 <= 0:
            raise InvalidInput("thresholds must be positive")
        if self.init_clusters < 1:
            raise InvalidInput("init_clusters must be >= 1")
        if self.metric_mode not in ("full", "diagonal"):
            raise InvalidInput(f"unknown metric mode {self.metric_mode!r}")
        if self.sweep_mode not in ("stop", "exhaustive"):
            raise InvalidInput(f"unknown sweep mode {self.sweep_mode!r}")

    @property
    def buffer_size(self) -> int:
        return 4 * self.init_clusters if self.bootstrap_size is None else self.bootstrap_size

    def primary(self) -> PrimaryConfig:
        return PrimaryConfig(alpha=self.alpha, rs_capacity=self.rs_capacity, metric_mode=self.metric_mode)

    def thresholds(self, dim: int) -> Thresholds:
        return Thresholds(
            self.theta0, self.theta1, chi2_quantile(self.theta2_level, float(dim)), self.centroid_gate
        )


def greedy_pairs(points: np.ndarray, k: int) -> list[tuple[int, int]]:
    """Up to ``k`` disjoint pairs, each the closest remaining pair in squared Euclidean distance.

    Ties go to the lexicographically smallest index pair.
    """
    m = len(points)
    if m < 2:
        return []
    X = np.asarray(points, dtype=np.float64)
    D = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    D[np.tril_indices(m)] = np.inf
    pairs = []
    for _ in range(min(k, m // 2)):
        i, j = np.unravel_index(int(np.argmin(D)), D.shape)
        if not np.isfinite(D[i, j]):
            break
        pairs.append((int(i), int(j)))
        D[[i, j], :] = np.inf
        D[:, [i, j]] = np.inf
    return pairs


def bootstrap(
    points: np.ndarray, k0: int, cfg: EngineConfig | None = None, seqs: Iterable[int] | None = None,
    model: ModelState | None = None,
) -> ModelState:
    """Seed ``k0`` pair clusters greedily, then route the rest of the buffer through :func:`assign`."""
    X = np.asarray(points, dtype=np.float64)
    cfg = cfg or EngineConfig(init_clusters=k0)
    if model is None:
        model = ModelState(dim=X.shape[1], config=cfg.primary())
    seqs = list(range(len(X))) if seqs is None else list(seqs)
    pairs = greedy_pairs(X, k0)
    used = set()
    for i, j in pairs:
        cid = model.new_cluster(summary_from_pair(X[i], X[j]))
        model.counters.processed += 2
        model.counters.pairs_formed += 1
        used.update((i, j))
        model.emit({"type": "bootstrap", "seqs": [seqs[i], seqs[j]], "cluster_id": cid})
    for i in range(len(X)):
        if i not in used:
            assign(model, X[i], seq=seqs[i])
    return model


@dataclass
class RunReport:
    dim: int
    n_clusters: int
    sizes: list[int]
    cluster_ids: list[int]
    centroids: list[list[float]]
    covariances: list[list[list[float]]]
    weights: list[dict]
    retained: list[dict]
    outliers: list[dict]
    counters: dict
    history: list[dict]
    config: dict
    wall_time: float = 0.0
    peak_stored_scalars: int = 0
    events: list[dict] | None = field(default=None, repr=False)

    @property
    def retained_count(self) -> int:
        return len(self.retained)

    def to_dict(self, with_events: bool = False) -> dict:
        d = asdict(self)
        if not with_events:
            d.pop("events")
        return d

    def to_json(self, **kw: Any) -> str:
        return json.dumps(self.to_dict(), **kw)


class StreamEngine:
    """Incremental driver. Feed points one at a time, then call :meth:`finish`."""

    def __init__(self, cfg: EngineConfig | None = None, record_events: bool = True):
        self.cfg = cfg or EngineConfig()
        self.record_events = record_events
        self.model: ModelState | None = None
        self.buffer: list[tuple[int, np.ndarray]] = []
        self.dim: int | None = None
        self.seen = 0
        self.since_sweep = 0
        self.history: list[dict] = []
        self.peak_scalars = 0
        self._t0 = time.perf_counter()
        self._thresholds: Thresholds | None = None
        self._pending_outliers: list[dict] = []

    # -- state ---------------------------------------------------------------

    @classmethod
    def resume(cls, data: dict, record_events: bool = True) -> "StreamEngine":
        """Continue a run from a :func:`snapshot` dict."""
        model, cfg = load_snapshot(data)
        eng = cls(cfg, record_events=record_events)
        model.events = [] if record_events else None
        eng.model = model
        eng.dim = model.dim
        eng.seen = model.counters.processed
        eng.since_sweep = int(data.get("since_sweep", 0))
        eng._thresholds = cfg.thresholds(model.dim)
        return eng

    def _ensure_model(self) -> ModelState:
        if self.model is None:
            self.model = ModelState(dim=self.dim, config=self.cfg.primary())
            self.model.events = [] if self.record_events else None
            self._thresholds = self.cfg.thresholds(self.dim)
            # non-finite rows seen before bootstrap
            for o in self._pending_outliers:
                self.model.outliers.append(o)
                self.model.counters.processed += 1
                self.model.counters.nonfinite += 1
                self.model.emit({"type": "outlier", "seq": o["seq"], "reason": "non-finite"})
            self._pending_outliers = []
        return self.model

    def memory_bound(self) -> int:
        """Scalars the model may hold right now: K summaries, a full RS, the bootstrap buffer."""
        k = len(self.model.clusters) if self.model else 0
        cap = self.model.rs_capacity if self.model else 10 * (self.dim or 0)
        return k * packed_size(self.dim or 0) + cap * (self.dim or 0) + self.cfg.buffer_size * (self.dim or 0)

    def _track_memory(self) -> None:
        used = len(self.buffer) * self.dim
        if self.model is not None:
            used += self.model.stored_scalars()
        self.peak_scalars = max(self.peak_scalars, used)

    # -- feeding -------------------------------------------------------------

    def feed(self, x: Any) -> None:
        v = np.asarray(x, dtype=np.float64).ravel()
        seq = self.seen
        self.seen += 1
        if self.dim is None:
            self.dim = v.size
        elif v.size != self.dim:
            raise InvalidInput(f"point {seq}: dimension {v.size}, expected {self.dim}")
        if not np.all(np.isfinite(v)):
            rec = {"seq": seq, "x": v.tolist(), "reason": "non-finite"}
            if self.model is None:
                self._pending_outliers.append(rec)
            else:
                self.model.outliers.append(rec)
                self.model.counters.processed += 1
                self.model.counters.nonfinite += 1
                self.model.emit({"type": "outlier", "seq": seq, "reason": "non-finite"})
            return

        if self.model is None:
            self.buffer.append((seq, v))
            self._track_memory()
            if len(self.buffer) >= self.cfg.buffer_size:
                self._bootstrap()
            return

        assign(self.model, v, seq=seq)
        self.since_sweep += 1
        self._track_memory()
        if self.since_sweep >= self.cfg.chunk_size:
            self._sweep()

    def _bootstrap(self) -> None:
        model = self._ensure_model()
        if self.buffer:
            seqs, pts = zip(*self.buffer)
            bootstrap(np.array(pts), self.cfg.init_clusters, self.cfg, seqs=seqs, model=model)
            self.since_sweep += len(self.buffer)
        self.buffer = []
        self._track_memory()
        if self.since_sweep >= self.cfg.chunk_size:
            self._sweep()

    def _sweep(self) -> None:
        model = self.model
        before = len(model.clusters)
        merges = secondary_compress(model, self._thresholds, self.cfg.sweep_mode)
        self.since_sweep = 0
        row = {
            "processed": model.counters.processed,
            "clusters_before": before,
            "clusters_after": len(model.clusters),
            "retained": len(model.retained),
            "merges": merges,
        }
        self.history.append(row)
        model.emit({"type": "sweep", **row})

    def finish(self) -> RunReport:
        if self.model is None and (self.buffer or self._pending_outliers or self.dim is not None):
            self._bootstrap()
        if self.model is not None:
            self._sweep()
            self.model.check_conservation()
        return self.report()

    # -- output --------------------------------------------------------------

    def report(self) -> RunReport:
        m = self.model
        wall = time.perf_counter() - self._t0
        if m is None:
            return RunReport(
                dim=self.dim or 0, n_clusters=0, sizes=[], cluster_ids=[], centroids=[], covariances=[],
                weights=[], retained=[], outliers=[], counters=asdict(Counters()), history=[],
                config=asdict(self.cfg), wall_time=wall, events=[] if self.record_events else None,
            )
        ids = m.cluster_ids()
        shr = [shrink(m.clusters[c], m.config.metric_mode) for c in ids]
        return RunReport(
            dim=m.dim,
            n_clusters=len(ids),
            sizes=[m.clusters[c].n for c in ids],
            cluster_ids=ids,
            centroids=[centroid(m.clusters[c]).tolist() for c in ids],
            covariances=[s.matrix.tolist() for s in shr],
            weights=[s.weights.to_record() for s in shr],
            retained=[{"seq": r.seq, "x": r.x.tolist()} for r in m.retained],
            outliers=list(m.outliers),
            counters=asdict(m.counters),
            history=list(self.history),
            config=asdict(self.cfg),
            wall_time=wall,
            peak_stored_scalars=self.peak_scalars,
            events=m.events,
        )


def process_stream(source: Iterable[Any], cfg: EngineConfig | None = None, record_events: bool = True):
    """Single pass over ``source``. Returns ``(model, report)``."""
    eng = StreamEngine(cfg, record_events=record_events)
    for x in source:
        eng.feed(x)
    report = eng.finish()
    return eng.model, report


# --- snapshots ---------------------------------------------------------------


def snapshot(model: ModelState, cfg: EngineConfig, since_sweep: int = 0) -> dict:
    return {
        "since_sweep": since_sweep,
        "config": asdict(cfg),
        "dim": model.dim,
        "next_id": model.next_id,
        "clusters": [{"id": cid, **model.clusters[cid].to_record()} for cid in model.cluster_ids()],
        "retained": [{"seq": r.seq, "x": r.x.tolist()} for r in model.retained],
        "outliers": list(model.outliers),
        "counters": asdict(model.counters),
    }


def load_snapshot(data: dict) -> tuple[ModelState, EngineConfig]:
    cfg = EngineConfig(**data["config"])
    model = ModelState(dim=int(data["dim"]), config=cfg.primary())
    for rec in data["clusters"]:
        model.clusters[int(rec["id"])] = ClusterSummary.from_record(rec)
    for r in data["retained"]:
        model.retained.append(RetainedPoint(int(r["seq"]), np.asarray(r["x"], dtype=np.float64)))
    model.outliers = list(data.get("outliers", []))
    model.counters = Counters(**data.get("counters", {}))
    model.next_id = int(data["next_id"])
    return model, cfg
