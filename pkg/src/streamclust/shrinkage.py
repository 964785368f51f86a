"""Double-shrinkage covariance estimation from a cluster summary.

The estimate is the convex combination

    S_hat = (1 - l_I - l_D) S + l_I (tr S / p) I + l_D diag(S)

with weights chosen by the two-by-two normal equations of the quadratic
loss, whose right-hand side needs unbiased estimates of tr(Sigma^2) and
tr(Sigma^2) - tr(diag(Sigma)^2). Those come from a linear map of the
four statistics X = (tr S^2, (tr S)^2, tr diag(S)^2, Q_N); the kurtosis
term is eliminated by the map and never estimated.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from .errors import DegenerateGeometry, DegenerateSystem, InsufficientData
from .metric import lower_factor
from .summary import ClusterSummary, sample_covariance

__all__ = [
    "TraceEstimates",
    "ShrinkageWeights",
    "ShrunkCovariance",
    "coefficient_matrix",
    "moment_matrix",
    "trace_estimates",
    "shrinkage_weights",
    "project_to_simplex",
    "shrunk_covariance",
    "shrink",
    "ZERO_VARIANCE_EPS",
]

MetricMode = Literal["full", "diagonal"]

ZERO_VARIANCE_EPS = 1e-9
# relative floor on the smallest eigenvalue, in units of tr(S)/p
PD_FLOOR = 1e-9
_K_TOL = 1e-12
_DET_TOL = 1e-12


@dataclass(frozen=True)
class TraceEstimates:
    x_stats: np.ndarray
    z_est: np.ndarray
    k_denom: float


@dataclass(frozen=True)
class ShrinkageWeights:
    lambda_i: float
    lambda_d: float
    clamped: bool = False
    fallback: str | None = None

    def __post_init__(self) -> None:
        tol = 1e-12
        if not (
            -tol <= self.lambda_i <= 1 + tol
            and -tol <= self.lambda_d <= 1 + tol
            and self.lambda_i + self.lambda_d <= 1 + tol
        ):
            raise ValueError(f"weights outside the simplex: {self.lambda_i}, {self.lambda_d}")

    @property
    def sample_weight(self) -> float:
        """Weight left on the raw sample covariance."""
        return 1.0 - self.lambda_i - self.lambda_d

    def to_record(self) -> dict:
        return {
            "lambda_i": self.lambda_i,
            "lambda_d": self.lambda_d,
            "clamped": self.clamped,
            "fallback": self.fallback,
        }


@dataclass(frozen=True, eq=False)
class ShrunkCovariance:
    matrix: np.ndarray
    weights: ShrinkageWeights
    source_n: int
    ridge: float = 0.0

    @cached_property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor, computed once."""
        return lower_factor(self.matrix)

    @cached_property
    def trace(self) -> float:
        return float(np.trace(self.matrix))


def coefficient_matrix(n: int, s_coef: float, t_coef: float) -> np.ndarray:
    """Closed-form 2x4 map from X to the unbiased trace estimates.

    Rows give estimates of tr(Sigma^2) and tr(Sigma^2) - tr(diag(Sigma)^2).
    Requires n >= 3.
    """
    N = float(n)
    S, T = s_coef, t_coef
    K = (N + 2 + 2 / (N - 1)) * S - 3 * T
    c = np.empty((2, 4))
    c[0, 0] = (N - 1) * (N * S - T) / (K * (N - 2))
    c[0, 1] = ((N - 1) * T - N * S) / (K * (N - 2))
    c[0, 2] = 0.0
    c[0, 3] = -1.0 / K
    c[1, 0] = ((N + 1 + 2 / (N - 2)) * S - (3 + 1 / (N - 2) - 2 / (N + 1)) * T) / K
    c[1, 1] = (-(1 + 2 / (N - 2)) * S + (1 / (N - 2) + 1 / (N + 1)) * T) / K
    c[1, 2] = -1 + 2 / (N + 1)
    c[1, 3] = (1 / (N - 1)) / K
    return c


def moment_matrix(n: int, s_coef: float, t_coef: float) -> np.ndarray:
    """The 4x4 matrix A with E[X] = A Y, Y = (kappa11, tr Sigma^2, (tr Sigma)^2, tr diag(Sigma)^2)."""
    N = float(n)
    return np.array(
        [
            [1 / N, N / (N - 1), 1 / (N - 1), 0.0],
            [1 / N, 2 / (N - 1), 1.0, 0.0],
            [1 / (N - 1), 0.0, 0.0, (N + 1) / (N - 1)],
            [s_coef, 2 * t_coef, t_coef, 0.0],
        ]
    )


def _x_stats(S: np.ndarray, q: float) -> np.ndarray:
    d = np.diag(S)
    tr = float(d.sum())
    return np.array([float(np.sum(S * S)), tr * tr, float(d @ d), q])


def trace_estimates(s: ClusterSummary, S: np.ndarray | None = None) -> TraceEstimates:
    if s.n < 3:
        raise InsufficientData("trace estimates need n >= 3")
    N = float(s.n)
    K = (N + 2 + 2 / (N - 1)) * s.s_coef - 3 * s.t_coef
    if abs(K) < _K_TOL * s.t_coef:
        raise DegenerateSystem(f"K = {K:g} is numerically zero")
    if S is None:
        S = sample_covariance(s)
    x = _x_stats(S, s.q)
    return TraceEstimates(x_stats=x, z_est=coefficient_matrix(s.n, s.s_coef, s.t_coef) @ x, k_denom=K)


def project_to_simplex(li: float, ld: float) -> tuple[float, float, bool]:
    """Euclidean projection onto {l_I >= 0, l_D >= 0, l_I + l_D <= 1}."""
    if li >= 0 and ld >= 0 and li + ld <= 1:
        return li, ld, False
    a, b = max(li, 0.0), max(ld, 0.0)
    if a + b <= 1:
        return a, b, True
    shift = (li + ld - 1) / 2
    a, b = li - shift, ld - shift
    if a < 0:
        return 0.0, 1.0, True
    if b < 0:
        return 1.0, 0.0, True
    return a, b, True


def shrinkage_weights(S: np.ndarray, t: TraceEstimates) -> ShrinkageWeights:
    """Solve the weight normal equations and project onto the simplex."""
    p = S.shape[0]
    tr = float(np.trace(S))
    U = S - (tr / p) * np.eye(p)
    V = S - np.diag(np.diag(S))
    m11 = float(np.sum(U * U))
    m12 = float(np.sum(U * V))
    m22 = float(np.sum(V * V))
    det = m11 * m22 - m12 * m12
    if det <= _DET_TOL * abs(m11 * m22):
        raise DegenerateGeometry("weight system is singular")
    tr_s2, _, tr_d2, _ = t.x_stats
    r1 = tr_s2 - t.z_est[0]
    r2 = tr_s2 - tr_d2 - t.z_est[1]
    li = (m22 * r1 - m12 * r2) / det
    ld = (m11 * r2 - m12 * r1) / det
    li, ld, moved = project_to_simplex(li, ld)
    return ShrinkageWeights(li, ld, clamped=moved)


def _combine(S: np.ndarray, w: ShrinkageWeights) -> np.ndarray:
    p = S.shape[0]
    tr = float(np.trace(S))
    out = w.sample_weight * S
    out[np.diag_indices(p)] += w.lambda_i * tr / p + w.lambda_d * np.diag(S)
    return out


def _with_floor(M: np.ndarray, scale: float) -> tuple[np.ndarray, float]:
    # lift the spectrum so that the smallest eigenvalue is at least PD_FLOOR*scale
    M = (M + M.T) / 2
    floor = PD_FLOOR * scale
    lo = float(np.linalg.eigvalsh(M)[0])
    if lo >= floor:
        return M, 0.0
    ridge = floor - lo
    M[np.diag_indices(M.shape[0])] += ridge
    return M, ridge


def shrunk_covariance(s: ClusterSummary, mode: MetricMode = "full") -> ShrunkCovariance:
    """Positive-definite covariance estimate for a cluster.

    ``mode="diagonal"`` pins the weights at (0, 1), i.e. the per-coordinate
    variance metric. Degenerate inputs fall back to the spherical target;
    a cluster of identical points gets ``ZERO_VARIANCE_EPS * I``.
    """
    S = sample_covariance(s)
    p = s.dim
    tr = float(np.trace(S))
    # round-off scale of S when built from raw moments
    noise = 1e-12 * max(float(np.trace(s.sum_outer)) / s.n, np.finfo(float).tiny)
    if not tr > noise:
        w = ShrinkageWeights(1.0, 0.0, fallback="zero-variance")
        return ShrunkCovariance(ZERO_VARIANCE_EPS * np.eye(p), w, s.n)

    if mode == "diagonal":
        w = ShrinkageWeights(0.0, 1.0, fallback="diagonal-mode")
    else:
        try:
            w = shrinkage_weights(S, trace_estimates(s, S))
        except InsufficientData:
            w = ShrinkageWeights(1.0, 0.0, fallback="insufficient-data")
        except DegenerateSystem:
            w = ShrinkageWeights(1.0, 0.0, fallback="degenerate-system")
        except DegenerateGeometry:
            w = ShrinkageWeights(1.0, 0.0, fallback="degenerate-geometry")

    M, ridge = _with_floor(_combine(S, w), tr / p)
    return ShrunkCovariance(M, w, s.n, ridge)


_MEMO: "weakref.WeakKeyDictionary[ClusterSummary, dict]" = weakref.WeakKeyDictionary()


def shrink(s: ClusterSummary, mode: MetricMode = "full") -> ShrunkCovariance:
    """Memoised :func:`shrunk_covariance`; summaries are immutable so the key is the object."""
    slot = _MEMO.get(s)
    if slot is None:
        slot = _MEMO[s] = {}
    hit = slot.get(mode)
    if hit is None:
        hit = slot[mode] = shrunk_covariance(s, mode)
    return hit
