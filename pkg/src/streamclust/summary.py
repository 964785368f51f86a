"""Mergeable per-cluster summary statistics.

A cluster of N >= 2 points is represented by

* the sum of outer products ``sum x x^T`` (kept as its upper triangle),
* the sum of points ``sum x``,
* the count N,
* the order-dependent fourth-moment statistic Q_N and its two
  inductively maintained coefficients (``s_coef``, ``t_coef``).

Everything is additive under merging, and updatable one point at a time,
so raw points never need to be revisited.

Q_N, ``s_coef`` and ``t_coef`` behave as if a singleton carried zeros:
adding a second point to a one-point "cluster" with the incremental rule
reproduces the two-point base case exactly. That is why a retained
singleton joining a cluster goes through :func:`add_point`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable

import numpy as np

from .errors import InvalidInput

__all__ = [
    "ClusterSummary",
    "summary_from_pair",
    "summary_from_points",
    "add_point",
    "merge",
    "centroid",
    "sample_covariance",
    "packed_size",
]


def packed_size(dim: int) -> int:
    """Number of scalars a summary of dimension ``dim`` retains."""
    return dim * (dim + 1) // 2 + dim + 4


def _triu(dim: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(dim)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _as_point(x: Any, dim: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInput(f"expected a non-empty 1-d point, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise InvalidInput(f"dimension mismatch: expected {dim}, got {v.size}")
    return v


@dataclass(frozen=True, eq=False)
class ClusterSummary:
    """Immutable summary of one cluster. Operations return new instances."""

    dim: int
    n: int
    packed_outer: np.ndarray
    sum_vec: np.ndarray
    q: float
    s_coef: float
    t_coef: float

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InvalidInput("a cluster summary needs at least two points")
        if self.packed_outer.shape != (self.dim * (self.dim + 1) // 2,):
            raise InvalidInput("packed outer-product sum has the wrong length")
        if self.sum_vec.shape != (self.dim,):
            raise InvalidInput("sum vector has the wrong length")

    @property
    def sum_outer(self) -> np.ndarray:
        """Full symmetric p x p matrix read out of the packed triangle."""
        m = np.zeros((self.dim, self.dim))
        iu = _triu(self.dim)
        m[iu] = self.packed_outer
        m.T[iu] = self.packed_outer
        return m

    @property
    def mean(self) -> np.ndarray:
        return self.sum_vec / self.n

    def to_vector(self) -> np.ndarray:
        """Flat vector of exactly ``packed_size(dim)`` scalars."""
        return np.concatenate(
            [self.packed_outer, self.sum_vec, [self.n, self.q, self.s_coef, self.t_coef]]
        )

    def to_record(self) -> dict:
        return {
            "dim": self.dim,
            "n": self.n,
            "sum_outer_upper": self.packed_outer.tolist(),
            "sum_vec": self.sum_vec.tolist(),
            "q": self.q,
            "s_coef": self.s_coef,
            "t_coef": self.t_coef,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ClusterSummary":
        return cls(
            dim=int(rec["dim"]),
            n=int(rec["n"]),
            packed_outer=_frozen(np.asarray(rec["sum_outer_upper"], dtype=np.float64)),
            sum_vec=_frozen(np.asarray(rec["sum_vec"], dtype=np.float64)),
            q=float(rec["q"]),
            s_coef=float(rec["s_coef"]),
            t_coef=float(rec["t_coef"]),
        )


def summary_from_pair(x1: Any, x2: Any) -> ClusterSummary:
    a = _as_point(x1)
    b = _as_point(x2, a.size)
    iu = _triu(a.size)
    diff = b - a
    return ClusterSummary(
        dim=a.size,
        n=2,
        packed_outer=_frozen((np.outer(a, a) + np.outer(b, b))[iu]),
        sum_vec=_frozen(a + b),
        q=float(diff @ diff) ** 2,
        s_coef=2.0,
        t_coef=4.0,
    )


def add_point(s: ClusterSummary, x: Any) -> ClusterSummary:
    v = _as_point(x, s.dim)
    n = s.n
    diff = v - s.sum_vec / n
    iu = _triu(s.dim)
    return ClusterSummary(
        dim=s.dim,
        n=n + 1,
        packed_outer=_frozen(s.packed_outer + np.outer(v, v)[iu]),
        sum_vec=_frozen(s.sum_vec + v),
        q=s.q + float(diff @ diff) ** 2,
        s_coef=s.s_coef + (1.0 + 1.0 / n**3),
        t_coef=s.t_coef + (1.0 + 1.0 / n) ** 2,
    )


def merge(s1: ClusterSummary, s2: ClusterSummary) -> ClusterSummary:
    if s1.dim != s2.dim:
        raise InvalidInput(f"dimension mismatch: {s1.dim} vs {s2.dim}")
    return ClusterSummary(
        dim=s1.dim,
        n=s1.n + s2.n,
        packed_outer=_frozen(s1.packed_outer + s2.packed_outer),
        sum_vec=_frozen(s1.sum_vec + s2.sum_vec),
        q=s1.q + s2.q,
        s_coef=s1.s_coef + s2.s_coef,
        t_coef=s1.t_coef + s2.t_coef,
    )


def summary_from_points(points: Iterable[Any]) -> ClusterSummary:
    """Fold an ordered point sequence into a summary.

    Equivalent to ``summary_from_pair`` on the first two points followed by
    ``add_point`` for the rest, but vectorised over the sequence.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InvalidInput("need a 2-d array with at least two rows")
    n, p = X.shape
    counts = np.arange(1, n)  # cluster size before each addition
    prior_means = np.cumsum(X, axis=0)[:-1] / counts[:, None]
    gaps = np.einsum("ij,ij->i", X[1:] - prior_means, X[1:] - prior_means)
    iu = _triu(p)
    return ClusterSummary(
        dim=p,
        n=n,
        packed_outer=_frozen((X.T @ X)[iu]),
        sum_vec=_frozen(X.sum(axis=0)),
        q=float(np.sum(gaps**2)),
        s_coef=float(np.sum(1.0 + 1.0 / counts.astype(float) ** 3)),
        t_coef=float(np.sum((1.0 + 1.0 / counts) ** 2)),
    )


def centroid(s: ClusterSummary) -> np.ndarray:
    return s.sum_vec / s.n


def sample_covariance(s: ClusterSummary) -> np.ndarray:
    """Unbiased sample covariance, as computed (no clamping)."""
    m = s.sum_vec / s.n
    return (s.sum_outer - s.n * np.outer(m, m)) / (s.n - 1)
