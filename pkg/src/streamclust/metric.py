"""Distance and threshold primitives.

Squared Mahalanobis distances use the determinant form

    det(C + d d^T) / det(C) - 1,

evaluated through a Cholesky factor C = L L^T. By the matrix determinant
lemma the ratio is 1 + |L^{-1} d|^2, so no inverse or determinant is ever
formed and nothing can underflow. :func:`determinant_ratio` evaluates the
same ratio the long way, with a rank-one Cholesky update, for checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg.lapack import dpotrf, dtrtrs
from scipy.special import betainc, betaln, gammainc, gammaincc, gammaln

from .errors import InvalidInput, InvalidMetric, NoClusters

__all__ = [
    "PerturbationInputs",
    "mahalanobis_sq",
    "mahalanobis_sq_factor",
    "determinant_ratio",
    "chol_rank_one_update",
    "pooled_covariance",
    "f_quantile",
    "chi2_quantile",
    "hotelling_threshold",
    "perturbed_distance",
    "perturb",
]


def _factor(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or not np.all(np.isfinite(cov)):
        raise InvalidMetric("covariance must be a finite square matrix")
    return lower_factor(cov)


def lower_factor(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor via LAPACK, raising :class:`InvalidMetric` if not SPD."""
    L, info = dpotrf(cov, lower=1, clean=1)
    if info != 0:
        raise InvalidMetric("covariance is not positive definite")
    return L


def whiten(L: np.ndarray, diff: np.ndarray) -> np.ndarray:
    """Solve L v = diff (columns of a 2-d ``diff`` are separate right-hand sides)."""
    v, info = dtrtrs(L, diff, lower=1)
    if info != 0:
        raise InvalidMetric("singular Cholesky factor")
    return v


def mahalanobis_sq_factor(L: np.ndarray, diff: np.ndarray) -> np.ndarray | float:
    """Squared distance(s) for difference vector(s) given a lower Cholesky factor.

    ``diff`` may be one vector or a (m, p) stack; a stack returns m values.
    """
    if diff.ndim == 1:
        v = whiten(L, diff)
        return float(v @ v)
    v = whiten(L, diff.T)
    return np.einsum("ij,ij->j", v, v)


def mahalanobis_sq(cov: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return mahalanobis_sq_factor(_factor(cov), d)


def chol_rank_one_update(L: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Factor of L L^T + v v^T from the lower factor L (returns a new array)."""
    L = np.array(L, dtype=np.float64)
    v = np.array(v, dtype=np.float64)
    p = v.size
    for k in range(p):
        r = math.hypot(L[k, k], v[k])
        c = r / L[k, k]
        s = v[k] / L[k, k]
        L[k, k] = r
        if k + 1 < p:
            L[k + 1 :, k] = (L[k + 1 :, k] + s * v[k + 1 :]) / c
            v[k + 1 :] = c * v[k + 1 :] - s * L[k + 1 :, k]
    return L


def determinant_ratio(cov: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """det(cov + d d^T)/det(cov) - 1 via an updated factor's diagonal."""
    L = _factor(cov)
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    L1 = chol_rank_one_update(L, d)
    log_ratio = 2.0 * float(np.sum(np.log(np.diag(L1)) - np.log(np.diag(L))))
    return math.expm1(log_ratio)


def pooled_covariance(entries: Iterable[tuple[int, np.ndarray]]) -> np.ndarray:
    """Count-weighted average of covariance matrices."""
    total = 0
    acc = None
    for count, cov in entries:
        if count < 1:
            raise InvalidInput("pooled covariance needs positive counts")
        term = count * np.asarray(cov, dtype=np.float64)
        acc = term if acc is None else acc + term
        total += count
    if acc is None:
        raise NoClusters("pooled covariance of an empty collection")
    return acc / total


# --- quantiles -------------------------------------------------------------

_QUANTILE_RTOL = 1e-13


def _invert_decreasing(
    tail: Callable[[float], float],
    density: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
) -> float:
    """Root of tail(u) = target for a decreasing tail function on [lo, hi].

    Newton steps on the tail, falling back to bisection whenever a step
    leaves the current bracket.
    """
    u = 0.5 * (lo + hi)
    for _ in range(500):
        f = tail(u) - target
        if f == 0.0:
            return u
        if f > 0:
            lo = u
        else:
            hi = u
        dens = density(u)
        step_ok = False
        if dens > 0 and math.isfinite(dens):
            nxt = u + f / dens  # tail' = -density
            step_ok = lo < nxt < hi
        if not step_ok:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - u) <= _QUANTILE_RTOL * abs(nxt) or hi - lo <= _QUANTILE_RTOL * abs(u):
            return nxt
        u = nxt
    return u


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InvalidInput(f"alpha must lie in (0, 1), got {alpha}")


@lru_cache(maxsize=None)
def f_quantile(level: float, d1: float, d2: float) -> float:
    """Quantile of the F(d1, d2) distribution at ``level``.

    Solved on w = d2 / (d1 x + d2), whose upper tail is the regularised
    incomplete beta I_w(d2/2, d1/2); this keeps full relative precision for
    large quantiles.
    """
    alpha = 1.0 - level
    _check_alpha(alpha)
    a, b = d2 / 2.0, d1 / 2.0
    log_norm = betaln(a, b)

    def cdf_w(w: float) -> float:
        return float(betainc(a, b, w))

    def dens_w(w: float) -> float:
        if w <= 0.0 or w >= 1.0:
            return 0.0
        return math.exp((a - 1) * math.log(w) + (b - 1) * math.log1p(-w) - log_norm)

    # P(X > x) = P(W < w) = I_w(a, b); solve I_w = alpha, increasing in w
    w = _invert_decreasing(lambda u: -cdf_w(u), lambda u: dens_w(u), -alpha, 0.0, 1.0)
    return d2 * (1.0 - w) / (d1 * w)


@lru_cache(maxsize=None)
def chi2_quantile(level: float, df: float) -> float:
    alpha = 1.0 - level
    _check_alpha(alpha)
    k = df / 2.0
    log_norm = gammaln(k)

    def tail(x: float) -> float:
        return float(gammaincc(k, x / 2.0))

    def dens(x: float) -> float:
        if x <= 0.0:
            return 0.0
        return 0.5 * math.exp((k - 1) * math.log(x / 2.0) - x / 2.0 - log_norm)

    hi = max(1.0, df)
    while tail(hi) > alpha:
        hi *= 2.0
    x = _invert_decreasing(tail, dens, alpha, 0.0, hi)
    # polish against the lower cdf when the quantile sits in the left tail
    if level < 0.5:
        x = _invert_decreasing(lambda u: -float(gammainc(k, u / 2.0)), dens, -level, 0.0, hi)
    return x


@lru_cache(maxsize=None)
def hotelling_threshold(p: int, n: int, alpha: float) -> float:
    """Upper (1 - alpha) quantile of Hotelling's T^2 with parameters (p, n - 1).

    For n <= p the F form is undefined and the chi-square(p) quantile is
    returned instead.
    """
    _check_alpha(alpha)
    if n < 2 or p < 1:
        raise InvalidInput(f"need p >= 1 and n >= 2, got p={p}, n={n}")
    if n <= p:
        return chi2_quantile(1.0 - alpha, float(p))
    return p * (n - 1) / (n - p) * f_quantile(1.0 - alpha, float(p), float(n - p))


def uses_chi2_fallback(p: int, n: int) -> bool:
    return n <= p


# --- centre perturbation ---------------------------------------------------


@dataclass(frozen=True)
class PerturbationInputs:
    delta_sq: float
    t_alpha: float
    n: int
    is_own: bool

    def __post_init__(self) -> None:
        if self.t_alpha <= 0 or self.n < 2 or self.delta_sq < 0:
            raise InvalidInput("invalid perturbation inputs")


def perturbed_distance(inp: PerturbationInputs) -> float:
    """Distance from x to the worst-case centre inside the mean's confidence ellipsoid.

    The own cluster's centre is pushed away from x, every other centre is
    pulled towards it (to zero once x is inside that ellipsoid).
    """
    radius_sq = inp.t_alpha / inp.n
    if inp.is_own:
        return (math.sqrt(inp.delta_sq) + math.sqrt(radius_sq)) ** 2
    if inp.delta_sq >= radius_sq:
        return (math.sqrt(inp.delta_sq) - math.sqrt(radius_sq)) ** 2
    return 0.0


def perturb(delta_sq: np.ndarray, radius_sq: np.ndarray, own: int | None) -> np.ndarray:
    """Vectorised :func:`perturbed_distance`; ``radius_sq`` holds t_alpha / n per cluster."""
    d = np.sqrt(delta_sq)
    r = np.sqrt(radius_sq)
    out = np.where(delta_sq >= radius_sq, (d - r) ** 2, 0.0)
    if own is not None:
        out[own] = (d[own] + r[own]) ** 2
    return out


def radius_sq(p: int, counts: Sequence[int], alpha: float) -> np.ndarray:
    return np.array([hotelling_threshold(p, int(n), alpha) / n for n in counts])
