"""Distribution primitives: normal and Laplace laws, Silverman bandwidth,
Gaussian-copula pairs with Laplace margins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from .errors import DegenerateDataError, InvalidParameterError

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class NormalSpec:
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if not self.sd >= 0:
            raise InvalidParameterError(f"normal sd must be >= 0, got {self.sd}")


@dataclass(frozen=True)
class LaplaceSpec:
    """Laplace law with location ``location`` and scale ``scale`` (variance 2*scale**2)."""

    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidParameterError(f"Laplace scale must be > 0, got {self.scale}")

    @property
    def mean(self) -> float:
        return self.location

    @property
    def variance(self) -> float:
        return 2.0 * self.scale**2

    @property
    def sd(self) -> float:
        return math.sqrt(2.0) * self.scale

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-np.abs(x - self.location) / self.scale) / (2.0 * self.scale)

    def cdf(self, x):
        u = (np.asarray(x, dtype=float) - self.location) / self.scale
        return np.where(u < 0, 0.5 * np.exp(np.minimum(u, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(u, 0.0)))

    def quantile(self, alpha):
        a = np.asarray(alpha, dtype=float)
        if np.any((a <= 0) | (a >= 1)):
            raise InvalidParameterError("quantile level must lie in (0, 1)")
        lo = self.location + self.scale * np.log(2.0 * np.minimum(a, 0.5))
        hi = self.location - self.scale * np.log(2.0 * (1.0 - np.maximum(a, 0.5)))
        out = np.where(a < 0.5, lo, hi)
        return out[()] if out.ndim == 0 else out

    def from_normal_scores(self, u):
        """Map standard-normal scores through Phi then this quantile function.

        Uses log-tail probabilities so extreme scores keep full precision.
        """
        u = np.asarray(u, dtype=float)
        tail = _LN2 + special.log_ndtr(-np.abs(u))  # log(2 * Phi(-|u|)) <= 0
        return self.location - np.sign(u) * self.scale * tail

    def raw_moment(self, k: int) -> float:
        # E[(m + b L)^k] with E[L^(2i)] = (2i)! for the standard Laplace.
        m, b = self.location, self.scale
        return float(sum(math.comb(k, i) * m ** (k - i) * b**i * math.factorial(i) for i in range(0, k + 1, 2)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.laplace(self.location, self.scale, size=n)


def normal_cdf(x, spec: NormalSpec = NormalSpec()):
    """Normal distribution function; ``sd == 0`` gives the right-continuous step.

    Parameters
    ----------
    x : float or array_like
    spec : NormalSpec

    Returns
    -------
    float or ndarray
        ``P[N(mean, sd**2) <= x]``; for ``sd == 0`` this is 1 where
        ``x >= mean`` and 0 elsewhere.
    """
    if not spec.sd >= 0:
        raise InvalidParameterError(f"normal sd must be >= 0, got {spec.sd}")
    x = np.asarray(x, dtype=float)
    if spec.sd == 0:
        out = (x >= spec.mean).astype(float)
    else:
        out = special.ndtr((x - spec.mean) / spec.sd)
    return out[()] if out.ndim == 0 else out


def normal_pdf(x, sd: float = 1.0):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))


def normal_raw_moment(k: int, sigma: float) -> float:
    """k-th raw moment of N(0, sigma**2): zero for odd k, sigma^k (k-1)!! for even k."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma}")
    if k < 0 or int(k) != k:
        raise InvalidParameterError(f"moment order must be a non-negative integer, got {k}")
    k = int(k)
    if k % 2:
        return 0.0
    h = k // 2
    return sigma**k * math.factorial(k) / (2**h * math.factorial(h))


def silverman_bandwidth(values) -> float:
    """Silverman's rule of thumb, ``0.9 * min(sd, IQR/1.34) * n**(-1/5)``.

    The sample sd uses ddof=1 and the IQR uses linear-interpolation
    quantiles. When the IQR collapses to zero but the sd does not, the sd
    alone is used.
    """
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n < 2:
        raise DegenerateDataError("bandwidth needs at least two values")
    sd = float(np.std(v, ddof=1))
    if not sd > 0:
        raise DegenerateDataError("bandwidth undefined for constant data")
    q25, q75 = np.quantile(v, [0.25, 0.75])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * n ** (-0.2)


def gaussian_convolution_oracle(sigma1: float, sigma2: float, x1: float, x3: float) -> float:
    """Closed form of the integral of phi_s1(x1 - y) * phi_s2(y - x3) over y."""
    if not (sigma1 > 0 and sigma2 > 0):
        raise InvalidParameterError("both standard deviations must be positive")
    return float(normal_pdf(x1 - x3, math.hypot(sigma1, sigma2)))


# --- Gaussian copula with Laplace margins ------------------------------------

@lru_cache(maxsize=None)
def _hermite_nodes(order: int):
    x, w = np.polynomial.hermite.hermgauss(order)
    return x * math.sqrt(2.0), w / math.sqrt(math.pi)


def _std_laplace_score(u):
    # standard Laplace (scale 1) quantile of Phi(u)
    return -np.sign(u) * (_LN2 + special.log_ndtr(-np.abs(u)))


def induced_pearson(dependence: float, order: int = 200) -> float:
    """Pearson correlation of Laplace margins joined by a Gaussian copula.

    Location and scale of the margins do not matter; the value is a function
    of the copula parameter alone, evaluated by tensor Gauss-Hermite
    quadrature.
    """
    r = float(dependence)
    if not -1 < r < 1:
        raise InvalidParameterError("copula dependence must lie in (-1, 1)")
    x, w = _hermite_nodes(order)
    u = x[:, None]
    v = r * u + math.sqrt(1.0 - r * r) * x[None, :]
    e = np.sum(w[:, None] * w[None, :] * _std_laplace_score(u) * _std_laplace_score(v))
    return float(e / 2.0)


@lru_cache(maxsize=256)
def calibrate_dependence(target_pearson: float) -> float:
    """Copula parameter whose induced Laplace-margin Pearson correlation hits the target."""
    t = float(target_pearson)
    if not -1 < t < 1:
        raise InvalidParameterError("target correlation must lie in (-1, 1)")
    if t == 0:
        return 0.0
    lim = 1.0 - 1e-9
    if abs(t) >= abs(induced_pearson(math.copysign(lim, t))):
        raise InvalidParameterError(f"correlation {t} is unreachable with Laplace margins")
    return optimize.bisect(lambda r: induced_pearson(r) - t, -lim, lim, xtol=1e-13)


@dataclass(frozen=True)
class CopulaSpec:
    margin1: LaplaceSpec
    margin2: LaplaceSpec
    dependence: float
    target_pearson: float
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise InvalidParameterError(f"unsupported copula family {self.family!r}")
        if not -1 < self.dependence < 1:
            raise InvalidParameterError("copula dependence must lie in (-1, 1)")
        if not -1 < self.target_pearson < 1:
            raise InvalidParameterError("target correlation must lie in (-1, 1)")

    @classmethod
    def from_target(cls, margin1: LaplaceSpec, margin2: LaplaceSpec, target_pearson: float) -> "CopulaSpec":
        return cls(margin1, margin2, calibrate_dependence(target_pearson), float(target_pearson))


def sample_copula_pair(n: int, spec: CopulaSpec, rng: np.random.Generator):
    """Draw ``n`` pairs (X, X') from the Gaussian copula with Laplace margins."""
    if n < 2:
        raise InvalidParameterError("need at least two rows")
    r = spec.dependence
    g = rng.standard_normal((2, n))
    u = g[0]
    v = r * u + math.sqrt(1.0 - r * r) * g[1]
    return spec.margin1.from_normal_scores(u), spec.margin2.from_normal_scores(v)
