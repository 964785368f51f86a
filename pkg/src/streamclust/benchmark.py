"""Synthetic benchmark matrix: cells of (k, p, chunk, metric) run over several seeds."""

from __future__ import annotations

import csv
import io
import itertools
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

from .engine import EngineConfig, process_stream
from .synth import SyntheticSpec, generate, score

__all__ = ["Cell", "CellResult", "BenchSettings", "run_cell", "run_matrix", "matrix", "to_csv", "to_text"]


@dataclass(frozen=True)
class Cell:
    k: int
    p: int
    chunk: int
    metric: str


@dataclass(frozen=True)
class BenchSettings:
    """Everything a cell needs besides its coordinates."""

    points_per_cluster: int = 1000
    seeds: tuple[int, ...] = tuple(range(10))
    # initial cluster count per true k; unlisted k bootstrap with k clusters
    init_clusters: tuple[tuple[int, int], ...] = ((20, 10),)
    min_fraction: float = 0.01
    engine: EngineConfig = field(default_factory=EngineConfig)

    def k0(self, k: int) -> int:
        return dict(self.init_clusters).get(k, k)


@dataclass
class CellResult:
    cell: Cell
    seed: int
    estimated_clusters: int
    total_clusters: int
    small_cluster_count: int
    retained_count: int
    outlier_count: int
    purity: float
    runtime: float

    def row(self) -> dict:
        d = asdict(self)
        d.update(d.pop("cell"))
        return d


def _one(args: tuple[Cell, int, BenchSettings]) -> CellResult:
    cell, seed, st = args
    stream = generate(SyntheticSpec(k=cell.k, p=cell.p, points_per_cluster=st.points_per_cluster, seed=seed))
    cfg = replace(st.engine, chunk_size=cell.chunk, metric_mode=cell.metric, init_clusters=st.k0(cell.k))
    t0 = time.perf_counter()
    _, report = process_stream(stream.points, cfg)
    elapsed = time.perf_counter() - t0
    s = score(report, stream.labels, st.min_fraction)
    return CellResult(
        cell=cell, seed=seed, estimated_clusters=s["estimated_clusters"], total_clusters=s["total_clusters"],
        small_cluster_count=s["small_cluster_count"], retained_count=s["retained_count"],
        outlier_count=s["outlier_count"], purity=s["purity"], runtime=elapsed,
    )


def run_cell(cell: Cell, settings: BenchSettings | None = None) -> list[CellResult]:
    st = settings or BenchSettings()
    return [_one((cell, s, st)) for s in st.seeds]


def matrix(
    ks: Sequence[int] = (5, 20),
    ps: Sequence[int] = (5, 10, 20),
    chunks: Sequence[int] = (25, 50),
    metrics: Sequence[str] = ("full", "diagonal"),
) -> list[Cell]:
    return [Cell(*c) for c in itertools.product(ks, ps, chunks, metrics)]


def run_matrix(cells: Iterable[Cell], settings: BenchSettings | None = None, jobs: int = 1) -> list[CellResult]:
    st = settings or BenchSettings()
    work = [(c, s, st) for c in cells for s in st.seeds]
    if jobs <= 1:
        return [_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_one, work))


def modal(values: Iterable[int]) -> tuple[int, int]:
    """Most common value (smallest on ties) and its multiplicity."""
    c = Counter(values)
    top = max(c.values())
    return min(v for v, n in c.items() if n == top), top


_COLUMNS = [
    "k", "p", "chunk", "metric", "seed", "estimated_clusters", "total_clusters",
    "small_cluster_count", "retained_count", "outlier_count", "purity", "runtime",
]


def to_csv(results: Iterable[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow(r.row())
    return buf.getvalue()


def to_text(results: Sequence[CellResult]) -> str:
    """One line per cell: modal count with its hit rate, then worst-case columns."""
    by_cell: dict[Cell, list[CellResult]] = {}
    for r in results:
        by_cell.setdefault(r.cell, []).append(r)
    head = f"{'k':>3} {'metric':>8} {'p':>3} {'chunk':>5} {'clusters':>9} {'hits':>5} {'retained':>9} {'small':>6} {'purity':>7} {'sec':>7}"
    lines = [head, "-" * len(head)]
    for cell, rs in by_cell.items():
        mode, hits = modal(r.estimated_clusters for r in rs)
        lines.append(
            f"{cell.k:>3} {cell.metric:>8} {cell.p:>3} {cell.chunk:>5} {mode:>9} {hits:>2}/{len(rs):<2}"
            f" {max(r.retained_count for r in rs):>9} {max(r.small_cluster_count for r in rs):>6}"
            f" {min(r.purity for r in rs):>7.3f} {max(r.runtime for r in rs):>7.1f}"
        )
    return "\n".join(lines)
