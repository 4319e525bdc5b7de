"""Recover statistics of the hidden column from a conditionally masked release.

The distribution-function estimators invert the masking convolution with a
Neumann series in ``lam = -(1 - p) / p``::

    G_hat(x) = 1/(n p) * sum_j sum_{t=0..T} lam**t * Phi_{s_t}(x - Z_j)

with ``s_t = sigma * sqrt(t)`` for the unbiased step estimator (T1) and
``s_t = sqrt(t * sigma**2 + b**2)`` for the kernel-smoothed one (Tb).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _series
from .dist import normal_raw_moment, silverman_bandwidth
from .errors import (
    BracketFailureError,
    DegenerateDataError,
    InvalidParameterError,
    SeriesDivergenceError,
    SwapErasesCorrelationError,
    TooFewRowsError,
    VarianceUnderflowError,
)
from .mask import MaskedColumn

# --- moments -----------------------------------------------------------------


@dataclass(frozen=True)
class MomentReport:
    """Raw-moment estimates indexed by order: ``raw[k]`` estimates E[X**k], ``raw[0] == 1``."""

    raw: tuple
    variance: float
    negative_variance_flag: bool

    @property
    def mean(self) -> float:
        return self.raw[1]

    @property
    def kmax(self) -> int:
        return len(self.raw) - 1

    def central(self, k: int) -> float:
        """Central moment of order k obtained from the raw estimates."""
        if not 0 <= k <= self.kmax:
            raise InvalidParameterError(f"central moment {k} needs raw moments up to {k}")
        m = self.mean
        return float(sum(math.comb(k, i) * self.raw[i] * (-m) ** (k - i) for i in range(k + 1)))


class VarianceEstimate(NamedTuple):
    value: float
    negative: bool


def estimate_variance(masked: MaskedColumn) -> VarianceEstimate:
    """``S_Z^2 - (1 - p) sigma^2`` with the n-1 divisor; negatives are returned, flagged."""
    z = masked.values
    if z.size < 2:
        raise TooFewRowsError("variance needs at least two rows")
    p, sigma = masked.params.p, masked.params.sigma
    value = float(np.var(z, ddof=1)) - (1.0 - p) * sigma**2
    return VarianceEstimate(value, value < 0)


def estimate_raw_moments(masked: MaskedColumn, kmax: int) -> MomentReport:
    """Unbiased raw moments of X up to order ``kmax``.

    Uses the recursion
    ``mu_X(k) = mu_Z(k) - (1-p) * sum_{j=1..k//2} C(k, 2j) mu_X(k-2j) mu_Y(2j)``
    where mu_Y are the raw moments of the N(0, sigma^2) noise.
    """
    if kmax < 1 or int(kmax) != kmax:
        raise InvalidParameterError(f"kmax must be a positive integer, got {kmax}")
    z = masked.values
    p, sigma = masked.params.p, masked.params.sigma
    raw = [1.0, float(np.mean(z))]
    for k in range(2, int(kmax) + 1):
        correction = sum(
            math.comb(k, 2 * j) * raw[k - 2 * j] * normal_raw_moment(2 * j, sigma) for j in range(1, k // 2 + 1)
        )
        raw.append(float(np.mean(z**k)) - (1.0 - p) * correction)
    var = estimate_variance(masked)
    return MomentReport(tuple(raw[: int(kmax) + 1]), var.value, var.negative)


# --- distribution function -----------------------------------------------------


@dataclass(frozen=True)
class SeriesTruncation:
    tail_epsilon: float = 1e-10
    max_terms: int = 10000

    def __post_init__(self):
        if not self.tail_epsilon > 0:
            raise InvalidParameterError("tail_epsilon must be > 0")
        if self.max_terms < 0:
            raise InvalidParameterError("max_terms must be >= 0")

    def terms(self, lam: float) -> int:
        """Smallest T with ``|lam|**(T+1) / (1 - |lam|) < tail_epsilon``, capped at ``max_terms``."""
        a = abs(lam)
        if a == 0:
            return 0
        if a >= 1:
            raise SeriesDivergenceError(f"|lambda| = {a} >= 1, series diverges")
        bound = lambda t: a ** (t + 1) / (1.0 - a)  # noqa: E731
        t = max(0, int(math.ceil(math.log(self.tail_epsilon * (1.0 - a)) / math.log(a))) - 1)
        while t > 0 and bound(t - 1) < self.tail_epsilon:
            t -= 1
        while bound(t) >= self.tail_epsilon and t < self.max_terms:
            t += 1
        return min(t, self.max_terms)


def _check_series_p(p: float):
    if not p > 0.5:
        raise SeriesDivergenceError(f"distribution estimates need p > 0.5, got {p}")


@dataclass(frozen=True, eq=False)
class CdfEstimate:
    """Evaluable estimate of the distribution function of the hidden column.

    ``method="direct"`` sums every series term; ``"tabulated"`` replaces the
    smooth t >= 1 part by a compiled piecewise-Chebyshev kernel whose
    absolute error stays below 1e-12 (it is what the simulation harness uses).
    """

    kind: str
    z: np.ndarray
    p: float
    sigma: float
    bandwidth: float = 0.0
    truncation: SeriesTruncation = field(default_factory=SeriesTruncation)
    method: str = "direct"

    def __post_init__(self):
        if self.kind not in ("T1", "Tb"):
            raise InvalidParameterError(f"unknown estimator kind {self.kind!r}")
        if self.method not in ("direct", "tabulated"):
            raise InvalidParameterError(f"unknown evaluation method {self.method!r}")
        _check_series_p(self.p)
        if not self.p <= 1:
            raise InvalidParameterError("p must not exceed 1")
        if not self.sigma > 0:
            raise InvalidParameterError("sigma must be > 0")
        if not self.bandwidth >= 0:
            raise InvalidParameterError(f"bandwidth must be >= 0, got {self.bandwidth}")
        if self.kind == "T1" and self.bandwidth != 0:
            raise InvalidParameterError("T1 has no bandwidth")
        z = np.sort(np.asarray(self.z, dtype=float).ravel())
        if z.size < 1:
            raise TooFewRowsError("no data")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def lam(self) -> float:
        return -(1.0 - self.p) / self.p

    @property
    def n_terms(self) -> int:
        return self.truncation.terms(self.lam)

    def weights(self) -> np.ndarray:
        return self.lam ** np.arange(self.n_terms + 1)

    def scales(self) -> np.ndarray:
        t = np.arange(self.n_terms + 1)
        return np.sqrt(t * self.sigma**2 + self.bandwidth**2)

    def evaluate(self, x):
        """Estimated G at ``x`` (scalar or array). Values may leave [0, 1]."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        w, s = self.weights(), self.scales()
        if self.method == "direct":
            total = _series.direct_sum(xa, self.z, w, s)
        else:
            kernel = _series.cached_kernel(tuple(w[1:]), tuple(s[1:]))
            if s[0] == 0:
                total = kernel.sum_over(xa, self.z) + w[0] * np.searchsorted(self.z, xa, side="right")
            else:
                total = kernel.sum_over(xa, self.z, w[0], s[0])
        out = total / (self.z.size * self.p)
        return float(out[0]) if np.ndim(x) == 0 else out

    __call__ = evaluate

    def support(self) -> tuple[float, float]:
        return float(self.z[0] - self.sigma), float(self.z[-1] + self.sigma)


def cdf_estimate_t1(masked: MaskedColumn, truncation: SeriesTruncation | None = None, method: str = "direct") -> CdfEstimate:
    p = masked.params.p
    _check_series_p(p)
    return CdfEstimate("T1", masked.values, p, masked.params.sigma, 0.0, truncation or SeriesTruncation(), method)


def cdf_estimate_tb(
    masked: MaskedColumn,
    bandwidth: float | None = None,
    truncation: SeriesTruncation | None = None,
    method: str = "direct",
) -> CdfEstimate:
    """Smooth estimator; the bandwidth defaults to Silverman's rule on the released values."""
    p = masked.params.p
    _check_series_p(p)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(masked.values)
    if not bandwidth >= 0:
        raise InvalidParameterError(f"bandwidth must be >= 0, got {bandwidth}")
    return CdfEstimate("Tb", masked.values, p, masked.params.sigma, float(bandwidth), truncation or SeriesTruncation(), method)


def cdf_t1(x, est: CdfEstimate):
    if est.kind != "T1":
        raise InvalidParameterError("expected a T1 estimate")
    return est.evaluate(x)


def cdf_tb(x, est: CdfEstimate):
    if est.kind != "Tb":
        raise InvalidParameterError("expected a Tb estimate")
    return est.evaluate(x)


# --- quantiles -------------------------------------------------------------------


@dataclass(frozen=True)
class QuantileQuery:
    alpha: float
    bracket_expansion: float = 2.0
    tolerance: float | None = None
    grid_points: int = 1024
    max_expansions: int = 60

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InvalidParameterError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")
        if not self.bracket_expansion > 1:
            raise InvalidParameterError("bracket_expansion must exceed 1")
        if self.tolerance is not None and not self.tolerance > 0:
            raise InvalidParameterError("tolerance must be > 0")
        if self.grid_points < 2:
            raise InvalidParameterError("grid_points must be >= 2")


def quantile(est, q: QuantileQuery) -> float:
    """Smallest x (to tolerance) with G_hat(x) >= alpha.

    ``est`` is any object with ``evaluate(x)`` and ``support()``.
    """
    return float(quantiles(est, [q.alpha], q)[0])


def quantiles(est, alphas, q: QuantileQuery | None = None) -> np.ndarray:
    """Several quantiles at once, sharing the bracket and the scan grid.

    The bracket ``support()`` is widened geometrically about its centre until
    G_hat is below every alpha at its left end and reaches every alpha at its
    right end. G_hat is then scanned on ``grid_points`` evenly spaced points;
    the first grid point reaching alpha and its predecessor bound a crossing
    that bisection narrows to the tolerance. This leftmost-crossing rule keeps
    the answer well defined when G_hat is not monotone.
    """
    alphas = np.asarray(alphas, dtype=float).ravel()
    if alphas.size == 0:
        return alphas
    if np.any((alphas <= 0) | (alphas >= 1)):
        raise InvalidParameterError("alpha must lie strictly inside (0, 1)")
    q = q or QuantileQuery(float(alphas[0]))
    lo, hi = est.support()
    tol = q.tolerance if q.tolerance is not None else 1e-8 * (hi - lo)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    a_min, a_max = alphas.min(), alphas.max()
    for _ in range(q.max_expansions + 1):
        g_lo, g_hi = est.evaluate(np.array([mid - half, mid + half]))
        if g_lo < a_min and g_hi >= a_max:
            break
        half *= q.bracket_expansion
    else:
        raise BracketFailureError(f"no crossing of {alphas.tolist()} after {q.max_expansions} expansions")
    grid = np.linspace(mid - half, mid + half, q.grid_points)
    g = est.evaluate(grid)
    reached = g[None, :] >= alphas[:, None]
    first = np.argmax(reached, axis=1)  # >= 1 because g[0] < every alpha
    a, b = grid[first - 1], grid[first]
    while np.max(b - a) > tol:
        c = 0.5 * (a + b)
        up = est.evaluate(c) >= alphas
        b = np.where(up, c, b)
        a = np.where(up, a, c)
    return b


# --- correlation -----------------------------------------------------------------


class CorrelationEstimate(NamedTuple):
    raw: float
    clamped: float


def estimate_correlation(masked: MaskedColumn, xprime) -> CorrelationEstimate:
    """Correlation of the hidden column with an unmasked companion column.

    ``rho_hat = Cov_hat(Z, X') / ((1 - p) * sd_hat(X') * sqrt(S_X^2))`` where
    ``Cov_hat`` uses the 1/n divisor, ``sd_hat(X')`` the n-1 divisor and
    ``S_X^2`` is :func:`estimate_variance`. The raw value may leave [-1, 1].
    """
    z = masked.values
    xp = np.asarray(xprime, dtype=float).ravel()
    p = masked.params.p
    if xp.size != z.size:
        raise InvalidParameterError(f"companion column has {xp.size} rows, masked column {z.size}")
    if p >= 1:
        raise SwapErasesCorrelationError("with p = 1 every value is swapped and no correlation survives")
    if not p > 0.5:
        raise InvalidParameterError(f"correlation recovery needs 0.5 < p < 1, got {p}")
    var_xp = float(np.var(xp, ddof=1))
    if not var_xp > 0:
        raise DegenerateDataError("companion column has zero variance")
    var_x = estimate_variance(masked)
    if var_x.negative:
        raise VarianceUnderflowError(f"estimated variance of the masked column is negative ({var_x.value:.6g})")
    if var_x.value == 0:
        raise DegenerateDataError("estimated variance of the masked column is zero")
    n = z.size
    cov = (float(np.dot(z, xp)) - n * float(z.mean()) * float(xp.mean())) / n
    rho = cov / ((1.0 - p) * math.sqrt(var_xp) * math.sqrt(var_x.value))
    return CorrelationEstimate(rho, min(1.0, max(-1.0, rho)))
