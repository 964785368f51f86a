"""Command-line entry points: ``cluster``, ``synth``, ``bench``, ``inspect``.

Exit codes: 0 success, 2 input error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import contextmanager
from typing import Iterator, Sequence, TextIO

import numpy as np

from . import benchmark
from .engine import EngineConfig, StreamEngine, snapshot
from .errors import InvalidInput, InvariantViolation, StreamClustError
from .synth import SyntheticSpec, generate, write_csv

log = logging.getLogger("streamclust")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3


class InputError(Exception):
    """Raised for anything the user can fix: bad file, bad cell, bad flag."""


# --- CSV ingestion -------------------------------------------------------------


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _resolve_cols(spec: str | None, header: list[str] | None, width: int) -> list[int] | None:
    if spec is None:
        return None
    out = []
    for tok in (t.strip() for t in spec.split(",")):
        if not tok:
            continue
        if "-" in tok and all(part.strip().isdigit() for part in tok.split("-", 1)):
            a, b = (int(x) for x in tok.split("-", 1))
            out.extend(range(a, b + 1))
        elif tok.isdigit():
            out.append(int(tok))
        elif header is not None and tok in header:
            out.append(header.index(tok))
        else:
            raise InputError(f"--cols: unknown column {tok!r}")
    bad = [c for c in out if c >= width]
    if bad:
        raise InputError(f"--cols: column index {bad[0]} out of range (rows have {width} columns)")
    if not out:
        raise InputError("--cols selects no columns")
    return out


def read_points(fh: TextIO, cols: str | None = None) -> Iterator[np.ndarray]:
    """Yield one float vector per CSV row, lazily.

    A first row with any non-numeric cell is taken as a header. Row numbers
    in diagnostics are 1-based file lines.
    """
    reader = csv.reader(fh)
    header = None
    width = None
    sel = None
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if width is None:
            width = len(row)
            if not all(_is_number(c) for c in row):
                header = [c.strip() for c in row]
                sel = _resolve_cols(cols, header, width)
                continue
            sel = _resolve_cols(cols, None, width)
        if len(row) != width:
            raise InputError(f"row {lineno}: expected {width} columns, found {len(row)}")
        cells = row if sel is None else [row[i] for i in sel]
        try:
            yield np.array([float(c) for c in cells])
        except ValueError:
            for j, c in enumerate(cells):
                if not _is_number(c):
                    col = j if sel is None else sel[j]
                    raise InputError(f"row {lineno}, column {col}: non-numeric value {c!r}") from None
            raise


def _open_in(path: str) -> TextIO:
    if path == "-":
        return sys.stdin
    try:
        return open(path, encoding="utf-8", newline="")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None


@contextmanager
def _writing(path: str) -> Iterator[TextIO]:
    if path == "-":
        yield sys.stdout
        return
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as e:
        raise InputError(f"cannot write {path}: {e.strerror}") from None
    with fh:
        yield fh


# --- commands ------------------------------------------------------------------


def _engine_config(a: argparse.Namespace, chunk: int | None = None, metric: str | None = None) -> EngineConfig:
    try:
        return EngineConfig(
            alpha=a.alpha, theta0=a.theta0, theta1=a.theta1, theta2_level=a.theta2_level,
            chunk_size=chunk if chunk is not None else a.chunk,
            init_clusters=a.init_clusters, bootstrap_size=a.bootstrap_size,
            rs_capacity=a.rs_capacity, metric_mode=metric if metric is not None else a.metric,
            sweep_mode=a.sweep, centroid_gate=a.centroid_gate,
        )
    except InvalidInput as e:
        raise InputError(str(e)) from None


def cmd_cluster(a: argparse.Namespace) -> int:
    if a.resume:
        with _open_in(a.resume) as fh:
            eng = StreamEngine.resume(json.load(fh), record_events=bool(a.events))
    else:
        eng = StreamEngine(_engine_config(a), record_events=bool(a.events))
    fh = _open_in(a.input)
    try:
        for x in read_points(fh, a.cols):
            try:
                eng.feed(x)
            except InvalidInput as e:
                raise InputError(str(e)) from None
    finally:
        if fh is not sys.stdin:
            fh.close()
    report = eng.finish()
    log.info("%d points, %d clusters, %d retained", eng.seen, report.n_clusters, report.retained_count)

    with _writing(a.out) as out:
        out.write(report.to_json(indent=2 if a.pretty else None))
        out.write("\n")
    if a.events:
        with _writing(a.events) as ev:
            for e in report.events:
                ev.write(json.dumps(e))
                ev.write("\n")
    if a.snapshot:
        with _writing(a.snapshot) as sf:
            json.dump(snapshot(eng.model, eng.cfg, eng.since_sweep), sf)
    if a.history:
        with _writing(a.history) as hf:
            w = csv.DictWriter(
                hf, fieldnames=["processed", "clusters_before", "clusters_after", "retained", "merges"],
                lineterminator="\n",
            )
            w.writeheader()
            w.writerows(report.history)
    return EXIT_OK


def cmd_synth(a: argparse.Namespace) -> int:
    try:
        spec = SyntheticSpec(
            k=a.k, p=a.p, points_per_cluster=a.n_per_cluster, seed=a.seed, shuffle=not a.no_shuffle,
            eig_range=(a.eig_lo, a.eig_hi),
        )
    except InvalidInput as e:
        raise InputError(str(e)) from None
    stream = generate(spec)
    with _writing(a.out) as out:
        write_csv(out, stream.points, stream.labels if a.labels else None)
    return EXIT_OK


def _ints(s: str) -> list[int]:
    try:
        return [int(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _metrics(s: str) -> list[str]:
    out = [t.strip() for t in s.split(",") if t.strip()]
    for m in out:
        if m not in ("full", "diagonal"):
            raise argparse.ArgumentTypeError(f"unknown metric {m!r}")
    return out


def cmd_bench(a: argparse.Namespace) -> int:
    cells = benchmark.matrix(a.k, a.p, a.chunk, a.metric)
    settings = benchmark.BenchSettings(
        points_per_cluster=a.n_per_cluster,
        seeds=tuple(range(a.seed0, a.seed0 + a.seeds)),
        # chunk and metric are overridden per cell
        engine=_engine_config(a, chunk=a.chunk[0], metric=a.metric[0]),
    )
    results = benchmark.run_matrix(cells, settings, jobs=a.jobs)
    if a.csv:
        with _writing(a.csv) as fh:
            fh.write(benchmark.to_csv(results))
    print(benchmark.to_text(results))
    return EXIT_OK


def cmd_inspect(a: argparse.Namespace) -> int:
    with _open_in(a.path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise InputError(f"{a.path}: not JSON ({e.msg} at line {e.lineno})") from None
    if "clusters" in data and "next_id" in data:
        kind = "snapshot"
        ids = [c["id"] for c in data["clusters"]]
        sizes = [c["n"] for c in data["clusters"]]
        retained = len(data["retained"])
    elif "sizes" in data:
        kind = "report"
        ids, sizes, retained = data["cluster_ids"], data["sizes"], len(data["retained"])
    else:
        raise InputError(f"{a.path}: neither a report nor a snapshot")
    print(f"{kind}: dim={data['dim']} clusters={len(ids)} retained={retained} outliers={len(data['outliers'])}")
    for cid, n in sorted(zip(ids, sizes), key=lambda t: -t[1]):
        print(f"  cluster {cid:>5}  n={n}")
    if kind == "report":
        c = data["counters"]
        print("  counters: " + ", ".join(f"{k}={v}" for k, v in c.items()))
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def _add_engine_flags(p: argparse.ArgumentParser, chunk: bool = True) -> None:
    d = EngineConfig()
    p.add_argument("--alpha", type=float, default=d.alpha, help="confidence-region level for centre perturbation")
    p.add_argument("--theta0", type=float, default=d.theta0)
    p.add_argument("--theta1", type=float, default=d.theta1)
    p.add_argument("--theta2-level", type=float, default=d.theta2_level, help="chi-square level for point pairs")
    if chunk:
        p.add_argument("--chunk", type=int, default=d.chunk_size, help="points between secondary sweeps")
        p.add_argument("--metric", choices=("full", "diagonal"), default=d.metric_mode)
    p.add_argument("--init-clusters", type=int, default=d.init_clusters)
    p.add_argument("--bootstrap-size", type=int, default=None)
    p.add_argument("--rs-capacity", type=int, default=None)
    p.add_argument("--sweep", choices=("stop", "exhaustive"), default=d.sweep_mode)
    p.add_argument("--centroid-gate", action="store_true",
                   help="cluster pairs must also be within the point-pair quantile under their pooled covariance")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="streamclust", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cluster", help="cluster a CSV stream")
    c.add_argument("--in", dest="input", default="-", help="CSV file, '-' for stdin")
    c.add_argument("--out", default="-", help="report JSON path")
    c.add_argument("--cols", help="columns to use: indices, ranges (2-5) or header names")
    c.add_argument("--events", help="write the decision log as NDJSON")
    c.add_argument("--snapshot", help="save the final model state as JSON")
    c.add_argument("--resume", help="continue from a saved snapshot (its config wins)")
    c.add_argument("--history", help="CSV of cluster counts after every sweep")
    c.add_argument("--pretty", action="store_true")
    _add_engine_flags(c)
    c.set_defaults(func=cmd_cluster)

    s = sub.add_parser("synth", help="write a synthetic Gaussian-mixture stream as CSV")
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--p", type=int, default=5)
    s.add_argument("--n-per-cluster", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--labels", action="store_true", help="append the true cluster label column")
    s.add_argument("--no-shuffle", action="store_true", help="emit clusters in blocks")
    s.add_argument("--eig-lo", type=float, default=0.5)
    s.add_argument("--eig-hi", type=float, default=2.5)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("bench", help="run the synthetic benchmark matrix")
    b.add_argument("--k", type=_ints, default=[5, 20])
    b.add_argument("--p", type=_ints, default=[5, 10, 20])
    b.add_argument("--chunk", type=_ints, default=[25, 50])
    b.add_argument("--metric", type=_metrics, default=["full", "diagonal"])
    b.add_argument("--seeds", type=int, default=10)
    b.add_argument("--seed0", type=int, default=0)
    b.add_argument("--n-per-cluster", type=int, default=1000)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--csv", help="per-run results as CSV")
    _add_engine_flags(b, chunk=False)
    b.set_defaults(func=cmd_bench)

    i = sub.add_parser("inspect", help="summarise a report or snapshot JSON")
    i.add_argument("path")
    i.set_defaults(func=cmd_inspect)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("STREAMCLUST_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except StreamClustError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
