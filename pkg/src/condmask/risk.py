"""Disclosure risk of a released column."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, InvalidParameterError
from .mask import AnmParams, MaskParams, _as_column, _draw_conditional
from .streams import make_stream

DEFAULT_BUDGET = 50_000_000  # record-replications per call


def _check_n(n):
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")


def mse_record_estimator(p: float, sigma: float, var_x: float, n: int) -> float:
    """MSE of Z_i as a guess of X_i: ``2p n/(n-1) var_x + (1-p) sigma^2``."""
    _check_n(n)
    if var_x < 0 or sigma < 0 or not 0 <= p <= 1:
        raise InvalidParameterError("need 0 <= p <= 1, sigma >= 0, var_x >= 0")
    return 2.0 * p * n / (n - 1) * var_x + (1.0 - p) * sigma**2


def mse_mean_estimator(p: float, sigma: float, var_x: float, n: int) -> float:
    """MSE of the column mean as a guess of X_i: ``var_x (1 - (2-p)/n) + (1-p) sigma^2 / n``."""
    _check_n(n)
    if var_x < 0 or sigma < 0 or not 0 <= p <= 1:
        raise InvalidParameterError("need 0 <= p <= 1, sigma >= 0, var_x >= 0")
    return var_x * (1.0 - (2.0 - p) / n) + (1.0 - p) / n * sigma**2


@dataclass(frozen=True)
class RiskConfig:
    d_values: tuple = (250.0, 500.0, 1000.0, 1500.0, 2000.0)
    S: int = 1000
    estimator: str = "record_value"
    seed: int | None = None
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "d_values", tuple(float(d) for d in self.d_values))
        if not self.d_values or any(not d > 0 for d in self.d_values):
            raise InvalidParameterError("every d must be > 0")
        if self.S < 1:
            raise InvalidParameterError("S must be >= 1")
        if self.estimator not in ("record_value", "column_mean"):
            raise InvalidParameterError(f"unknown estimator {self.estimator!r}")


@dataclass
class RiskReport:
    d_values: list
    risk: list
    se: list
    worst_record: list
    S: int
    n: int
    estimator: str
    mechanism: str
    mse_record: float | None = None
    mse_mean: float | None = None
    var_x: float | None = None
    var_x_source: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "estimator": self.estimator,
            "n": self.n,
            "S": self.S,
            "rows": [
                {"d": d, "risk": r, "se": s, "worst_record": w}
                for d, r, s, w in zip(self.d_values, self.risk, self.se, self.worst_record)
            ],
            "closed_form": {
                "mse_record": self.mse_record,
                "mse_mean": self.mse_mean,
                "var_x": self.var_x,
                "var_x_source": self.var_x_source,
            },
            **self.extra,
        }


def disclosure_risk(x, params, cfg: RiskConfig, var_x: float | None = None) -> RiskReport:
    """Monte Carlo probability that a guess of X_i falls in ``(X_i - d, X_i + d)``.

    Parameters
    ----------
    x : array_like
        The true sensitive column.
    params : MaskParams or AnmParams
        Conditional masking, or the additive-Laplace baseline.
    cfg : RiskConfig
    var_x : float, optional
        Variance of X for the closed-form MSEs. Defaults to the sample
        variance of ``x`` (labelled as such in the report).

    Returns
    -------
    RiskReport
        For each d: the risk averaged over records and replications, its
        standard error from the spread of per-replication averages, and the
        largest per-record risk.

    Notes
    -----
    Each replication re-masks ``x`` once and scores every d on that draw, so
    the risk curve is nondecreasing in d by construction.
    """
    x = _as_column(x, "input column")
    n = x.size
    if cfg.S * n > cfg.budget:
        raise BudgetError(f"S*n = {cfg.S * n} exceeds budget {cfg.budget}")
    if isinstance(params, MaskParams):
        mechanism = "conditional"
    elif isinstance(params, AnmParams):
        mechanism = "additive_laplace"
        if cfg.estimator != "record_value":
            raise InvalidParameterError("the additive baseline is audited with the record-value guess only")
    else:
        raise InvalidParameterError("params must be MaskParams or AnmParams")
    d = np.asarray(cfg.d_values)
    per_rep = np.empty((cfg.S, d.size))
    per_record = np.zeros((d.size, n))
    for s in range(cfg.S):
        rng = make_stream(cfg.seed, s)
        if mechanism == "conditional":
            z, _, _ = _draw_conditional(x, params, rng)
        else:
            z = x + rng.laplace(0.0, params.scale, size=n)
        guess = z if cfg.estimator == "record_value" else np.full(n, z.mean())
        hit = np.abs(guess - x)[None, :] < d[:, None]
        per_rep[s] = hit.mean(axis=1)
        per_record += hit
    risk = per_rep.mean(axis=0)
    se = per_rep.std(axis=0, ddof=1) / math.sqrt(cfg.S) if cfg.S > 1 else np.sqrt(risk * (1 - risk) / n)
    report = RiskReport(
        d_values=d.tolist(),
        risk=risk.tolist(),
        se=np.asarray(se).tolist(),
        worst_record=(per_record.max(axis=1) / cfg.S).tolist(),
        S=cfg.S,
        n=n,
        estimator=cfg.estimator,
        mechanism=mechanism,
    )
    if mechanism == "conditional":
        source = "supplied" if var_x is not None else "sample variance of X"
        v = float(var_x) if var_x is not None else float(np.var(x, ddof=1))
        report.var_x, report.var_x_source = v, source
        report.mse_record = mse_record_estimator(params.p, params.sigma, v, n)
        report.mse_mean = mse_mean_estimator(params.p, params.sigma, v, n)
    return report
