"""Conditional masking and the additive-Laplace baseline.

Conditional masking releases, independently for each record ``i``, either
another record's value ``X_j`` (``j != i`` uniform, with probability ``p``)
or ``X_i + Y_i`` with ``Y_i ~ N(0, sigma**2)``. Which branch was taken, and
which ``j``, is never part of the released column.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidParameterError, TooFewRowsError
from .streams import make_stream


@dataclass(frozen=True)
class ReleaseParams:
    """Public masking parameters that travel with a released column."""

    p: float
    sigma: float
    integer_mode: bool = False

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise InvalidParameterError(f"swap probability must lie in (0, 1], got {self.p}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidParameterError(f"sigma must be a positive finite number, got {self.sigma}")


@dataclass(frozen=True)
class MaskParams:
    p: float
    sigma: float
    integer_mode: bool = False
    seed: int | None = None

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise InvalidParameterError(f"swap probability must lie in (0, 1), got {self.p}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidParameterError(f"sigma must be a positive finite number, got {self.sigma}")

    def release(self) -> ReleaseParams:
        return ReleaseParams(self.p, self.sigma, self.integer_mode)


@dataclass(frozen=True)
class AnmParams:
    scale: float
    seed: int | None = None

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidParameterError(f"Laplace scale must be a positive finite number, got {self.scale}")


def _as_column(values, name="values") -> np.ndarray:
    arr = np.array(values, dtype=float).ravel()
    if arr.size < 2:
        raise TooFewRowsError(f"{name} needs at least 2 rows, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MaskedColumn:
    values: np.ndarray
    params: ReleaseParams

    def __post_init__(self):
        object.__setattr__(self, "values", _as_column(self.values, "masked column"))
        if not isinstance(self.params, ReleaseParams):
            raise InvalidParameterError("params must be ReleaseParams")

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class AnmColumn:
    values: np.ndarray
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "values", _as_column(self.values, "masked column"))


def round_half_away(a):
    a = np.asarray(a, dtype=float)
    return np.copysign(np.floor(np.abs(a) + 0.5), a)


def _draw_conditional(x: np.ndarray, params: MaskParams, rng: np.random.Generator):
    # Draw order is part of the determinism contract: branch, partner, noise.
    n = x.size
    swapped = rng.random(n) < params.p
    partner = rng.integers(0, n - 1, size=n)
    partner += partner >= np.arange(n)
    noise = rng.standard_normal(n) * params.sigma
    if params.integer_mode:
        noise = round_half_away(noise)
    z = np.where(swapped, x[partner], x + noise)
    return z, swapped, partner


def mask_conditional(x, params: MaskParams, rng: np.random.Generator | None = None) -> MaskedColumn:
    """Mask a column with the swap-or-Gaussian-noise mechanism.

    Parameters
    ----------
    x : array_like
        The sensitive column, at least two rows.
    params : MaskParams
    rng : numpy.random.Generator, optional
        Defaults to the stream derived from ``params.seed``.

    Returns
    -------
    MaskedColumn
        Released values together with ``p``, ``sigma`` and the integer flag.
        Swap indicators and partner indices are discarded.
    """
    x = _as_column(x, "input column")
    if rng is None:
        rng = make_stream(params.seed)
    z, _, _ = _draw_conditional(x, params, rng)
    return MaskedColumn(z, params.release())


def mask_additive_laplace(x, params: AnmParams, rng: np.random.Generator | None = None) -> AnmColumn:
    x = _as_column(x, "input column")
    if rng is None:
        rng = make_stream(params.seed)
    return AnmColumn(x + rng.laplace(0.0, params.scale, size=x.size), params.scale)


def release_report(masked: MaskedColumn) -> dict:
    """Metadata record for a released column. Holds no seed and no swap indicators."""
    z = masked.values
    q25, q50, q75 = np.quantile(z, [0.25, 0.5, 0.75])
    return {
        "n": int(z.size),
        **asdict(masked.params),
        "summary": {
            "mean": float(z.mean()),
            "sd": float(z.std(ddof=1)),
            "min": float(z.min()),
            "q25": float(q25),
            "median": float(q50),
            "q75": float(q75),
            "max": float(z.max()),
        },
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def loads_report(text: str) -> dict:
    return json.loads(text)
