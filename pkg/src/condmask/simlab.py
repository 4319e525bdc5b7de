"""Monte Carlo harness: copula data, both masking schemes, bias/RMSE tables."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from . import __version__
from .dist import CopulaSpec, LaplaceSpec, calibrate_dependence, sample_copula_pair, silverman_bandwidth
from .errors import BudgetError, CondMaskError, InvalidParameterError, TooFewRowsError
from .estimators import (
    MomentReport,
    cdf_estimate_t1,
    cdf_estimate_tb,
    estimate_correlation,
    estimate_variance,
    quantiles,
)
from .mask import AnmParams, MaskParams, _draw_conditional, MaskedColumn
from .streams import make_stream

ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
ESTIMATORS = ("T1", "Tb", "ANM")
DEFAULT_BUDGET = 200_000_000  # record-replications per run


# --- additive-Laplace baseline estimators --------------------------------------


def anm_estimate_moments(z1, scale: float) -> MomentReport:
    """Mean and variance of X from ``Z1 = X + Laplace(0, scale)`` noise."""
    z1 = np.asarray(z1, dtype=float).ravel()
    if z1.size < 2:
        raise TooFewRowsError("need at least two rows")
    if not scale > 0:
        raise InvalidParameterError("scale must be > 0")
    var = float(np.var(z1, ddof=1)) - 2.0 * scale**2
    return MomentReport((1.0, float(z1.mean())), var, var < 0)


@dataclass(frozen=True, eq=False)
class AnmCdfEstimate:
    """Laplace deconvolution ``G(x) = H(x) - scale^2 h'(x)`` with Gaussian-kernel H and h'."""

    z1: np.ndarray
    scale: float
    bandwidth: float

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidParameterError("scale must be > 0")
        if not self.bandwidth > 0:
            raise InvalidParameterError("bandwidth must be > 0")
        object.__setattr__(self, "z1", np.sort(np.asarray(self.z1, dtype=float).ravel()))

    def evaluate(self, x):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(xa.size)
        rows = max(1, (1 << 21) // self.z1.size)
        k = (self.scale / self.bandwidth) ** 2 / math.sqrt(2.0 * math.pi)
        for i in range(0, xa.size, rows):
            u = (xa[i:i + rows, None] - self.z1[None, :]) / self.bandwidth
            out[i:i + rows] = special.ndtr(u).mean(axis=1) + k * (u * np.exp(-0.5 * u * u)).mean(axis=1)
        return float(out[0]) if np.ndim(x) == 0 else out

    __call__ = evaluate

    def support(self):
        return float(self.z1[0] - self.scale), float(self.z1[-1] + self.scale)


def anm_estimate_cdf(x, z1, scale: float, bandwidth: float):
    return AnmCdfEstimate(z1, scale, bandwidth).evaluate(x)


def anm_estimate_correlation(z1, xprime, scale: float) -> float:
    z1 = np.asarray(z1, dtype=float)
    xp = np.asarray(xprime, dtype=float)
    mom = anm_estimate_moments(z1, scale)
    if mom.negative_variance_flag or mom.variance == 0:
        raise CondMaskError("nonpositive variance estimate")
    n = z1.size
    cov = (float(np.dot(z1, xp)) - n * float(z1.mean()) * float(xp.mean())) / n
    return cov / (math.sqrt(float(np.var(xp, ddof=1))) * math.sqrt(mom.variance))


# --- synthetic stand-in for the integer marks data --------------------------------


def synth_marks_dataset(n: int = 445, seed: int = 0):
    """Integer exam-mark-like column (mean ~703, sd ~100) and a companion column
    correlated at about 0.68."""
    if n < 2:
        raise TooFewRowsError("need at least two rows")
    rng = make_stream(seed)
    r = 0.68
    g = rng.standard_normal((2, n))
    marks = np.rint(703.0 + 100.0 * g[0]).astype(np.int64)
    aux = np.rint(700.0 + 95.0 * (r * g[0] + math.sqrt(1 - r * r) * g[1])).astype(np.int64)
    return marks, aux


# --- experiment configuration ------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    copula: CopulaSpec
    n_values: tuple = (2000,)
    S: int = 500
    mask: MaskParams = MaskParams(0.6, 1000.0)
    anm: AnmParams = AnmParams(1000.0)
    alphas: tuple = ALPHAS
    estimators: tuple = ESTIMATORS
    d_values: tuple = (250.0, 500.0, 1000.0, 1500.0, 2000.0)
    seed: int = 2017
    threads: int = 1
    budget: int = DEFAULT_BUDGET
    curve_points: int = 512

    def __post_init__(self):
        for name in ("n_values", "alphas", "estimators", "d_values"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.S < 1:
            raise InvalidParameterError("S must be >= 1")
        if not self.n_values or any(int(n) != n or n < 2 for n in self.n_values):
            raise InvalidParameterError("every n must be an integer >= 2")
        if any(not 0 < a < 1 for a in self.alphas):
            raise InvalidParameterError("every alpha must lie in (0, 1)")
        if any(e not in ESTIMATORS for e in self.estimators):
            raise InvalidParameterError(f"estimators must be drawn from {ESTIMATORS}")
        if any(not d > 0 for d in self.d_values):
            raise InvalidParameterError("every d must be > 0")
        if self.threads < 1:
            raise InvalidParameterError("threads must be >= 1")
        if self.seed < 0:
            raise InvalidParameterError("seed must be >= 0")

    @classmethod
    def paper_setup(cls, **overrides) -> "ExperimentConfig":
        """Laplace(10, 1000) sensitive margin, Laplace(50, 250) companion, Pearson -0.7."""
        cop = CopulaSpec.from_target(LaplaceSpec(10.0, 1000.0), LaplaceSpec(50.0, 250.0), -0.7)
        return cls(copula=cop, **overrides)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mask"].pop("seed", None)
        d["anm"].pop("seed", None)
        for k in ("n_values", "alphas", "estimators", "d_values"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        """Build from a nested mapping; unknown keys raise ``KeyError`` with their path."""
        doc = dict(doc)
        allowed = {"copula", "n_values", "S", "mask", "anm", "alphas", "estimators", "d_values",
                   "seed", "threads", "budget", "curve_points"}
        for key in doc:
            if key not in allowed:
                raise KeyError(key)
        cop = dict(doc.pop("copula", {}))
        for key in cop:
            if key not in ("margin1", "margin2", "target_pearson", "dependence", "family"):
                raise KeyError(f"copula.{key}")
        m1 = LaplaceSpec(**cop.get("margin1", {"location": 10.0, "scale": 1000.0}))
        m2 = LaplaceSpec(**cop.get("margin2", {"location": 50.0, "scale": 250.0}))
        target = float(cop.get("target_pearson", -0.7))
        dep = cop.get("dependence")
        dep = calibrate_dependence(target) if dep is None else float(dep)
        copula = CopulaSpec(m1, m2, dep, target, cop.get("family", "gaussian"))
        kw = {}
        if "mask" in doc:
            mk = dict(doc.pop("mask"))
            mk.pop("seed", None)
            kw["mask"] = MaskParams(**mk)
        if "anm" in doc:
            an = dict(doc.pop("anm"))
            an.pop("seed", None)
            kw["anm"] = AnmParams(**an)
        return cls(copula=copula, **doc, **kw)


# --- report ----------------------------------------------------------------------


@dataclass
class ExperimentReport:
    config: dict
    statistics: list
    truth: list
    cells: dict  # estimator -> str(n) -> {"bias": [...], "rmse": [...], "failures": [...], "valid": [...]}
    risk: dict  # str(n) -> {"d": [...], "CM": [...], "CM_se": [...], "ANM": [...], "ANM_se": [...]}
    curve: dict
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def cell(self, estimator: str, n: int, statistic: str) -> dict:
        i = self.statistics.index(statistic)
        c = self.cells[estimator][str(n)]
        return {k: c[k][i] for k in ("bias", "rmse", "failures", "valid")}

    def to_text(self) -> str:
        """Aligned tables laid out like the published bias / RMSE / risk tables."""
        head = ["Statistic", ""] + self.statistics
        lines = []
        for what in ("bias", "rmse"):
            rows = [head, ["TRUE", ""] + [_fmt(v) for v in self.truth]]
            for est, by_n in self.cells.items():
                for n, c in by_n.items():
                    rows.append([est, f"n={n}"] + [
                        _fmt(v) if ok else _fmt(v) + "*" for v, ok in zip(c[what], c["valid"])
                    ])
            title = "Estimated bias" if what == "bias" else "Estimated R.M.S.E."
            lines += [f"{title} (S={self.config['S']})", _align(rows), ""]
        for n, r in self.risk.items():
            rows = [["d", "CM", "ANM"]] + [[_fmt(d), _fmt(a), _fmt(b)] for d, a, b in zip(r["d"], r["CM"], r["ANM"])]
            lines += [f"Disclosure risk, tau = Z_i (n={n}, S={self.config['S']})", _align(rows), ""]
        if any(not ok for by_n in self.cells.values() for c in by_n.values() for ok in c["valid"]):
            lines.append("* more than 1% of replications failed for this cell")
        return "\n".join(lines) + "\n"

    def curve_text(self) -> str:
        cols = list(self.curve)
        out = ["\t".join(cols)]
        for row in zip(*(self.curve[c] for c in cols)):
            out.append("\t".join(_fmt(v, 9) for v in row))
        return "\n".join(out) + "\n"


def _fmt(v, digits=3):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "NA"
    return f"{v:.{digits}f}"


def _align(rows):
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)


# --- the experiment ----------------------------------------------------------------


def _statistic_names(cfg):
    return [f"{a:g}" for a in cfg.alphas] + ["Mean", "s.d.", "Cor"]


def _replicate(cfg: ExperimentConfig, n: int, rng: np.random.Generator, want_curve=None):
    """One replication: per-estimator statistic vectors (NaN = failed) and risk hits."""
    alphas = np.asarray(cfg.alphas)
    k = alphas.size
    x, xp = sample_copula_pair(n, cfg.copula, rng)
    z, _, _ = _draw_conditional(x, cfg.mask, rng)
    z1 = x + rng.laplace(0.0, cfg.anm.scale, size=n)
    masked = MaskedColumn(z, cfg.mask.release())
    out = {e: np.full(k + 3, np.nan) for e in cfg.estimators}
    curve = {}

    cm_shared = np.full(3, np.nan)
    cm_shared[0] = z.mean()
    var = estimate_variance(masked)
    if not var.negative:
        cm_shared[1] = math.sqrt(var.value)
    try:
        cm_shared[2] = estimate_correlation(masked, xp).raw
    except CondMaskError:
        pass
    for kind in ("T1", "Tb"):
        if kind not in cfg.estimators:
            continue
        out[kind][k:] = cm_shared
        try:
            est = (cdf_estimate_t1(masked, method="tabulated") if kind == "T1"
                   else cdf_estimate_tb(masked, method="tabulated"))
            out[kind][:k] = quantiles(est, alphas)
            if want_curve is not None:
                curve[kind] = est.evaluate(want_curve)
        except CondMaskError:
            pass
    if "ANM" in cfg.estimators:
        mom = anm_estimate_moments(z1, cfg.anm.scale)
        out["ANM"][k] = mom.mean
        if not mom.negative_variance_flag:
            out["ANM"][k + 1] = math.sqrt(mom.variance)
        try:
            out["ANM"][k + 2] = anm_estimate_correlation(z1, xp, cfg.anm.scale)
        except CondMaskError:
            pass
        try:
            est = AnmCdfEstimate(z1, cfg.anm.scale, silverman_bandwidth(z1))
            out["ANM"][:k] = quantiles(est, alphas)
            if want_curve is not None:
                curve["ANM"] = est.evaluate(want_curve)
        except CondMaskError:
            pass
    d = np.asarray(cfg.d_values)
    hits_cm = (np.abs(z - x)[None, :] < d[:, None]).mean(axis=1)
    hits_anm = (np.abs(z1 - x)[None, :] < d[:, None]).mean(axis=1)
    return out, hits_cm, hits_anm, curve


def _summarise(values: np.ndarray, truth: np.ndarray, S: int):
    bias, rmse, failures, valid = [], [], [], []
    for j in range(values.shape[1]):
        col = values[:, j]
        ok = col[np.isfinite(col)]
        err = ok - truth[j]
        m = ok.size
        failures.append(int(S - m))
        valid.append(bool((S - m) <= 0.01 * S))
        if m == 0:
            bias.append(float("nan"))
            rmse.append(float("nan"))
            continue
        # fsum is exactly rounded, so the result does not depend on replication order
        bias.append(math.fsum(err) / m)
        rmse.append(math.sqrt(math.fsum(err * err) / m))
    return {"bias": bias, "rmse": rmse, "failures": failures, "valid": valid}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run S replications at every n and aggregate bias / RMSE against analytic truth.

    Replication ``s`` at the ``a``-th sample size draws from the stream keyed
    ``(seed, a, s)``, so results do not depend on ``cfg.threads``.
    """
    work = cfg.S * sum(cfg.n_values)
    if work > cfg.budget:
        raise BudgetError(f"S * sum(n) = {work} exceeds budget {cfg.budget}")
    m1 = cfg.copula.margin1
    alphas = np.asarray(cfg.alphas)
    truth = np.concatenate([np.atleast_1d(m1.quantile(alphas)), [m1.mean, m1.sd, cfg.copula.target_pearson]])
    stats = _statistic_names(cfg)
    cells = {e: {} for e in cfg.estimators}
    risk = {}
    lo, hi = m1.quantile(0.001), m1.quantile(0.999)
    grid = np.linspace(lo, hi, cfg.curve_points)
    curve = {"x": grid.tolist()}

    for a, n in enumerate(cfg.n_values):
        n = int(n)

        def job(s, a=a, n=n):
            return _replicate(cfg, n, make_stream(cfg.seed, a, s), grid if (a == 0 and s == 0) else None)

        if cfg.threads > 1:
            with ThreadPoolExecutor(cfg.threads) as pool:
                results = list(pool.map(job, range(cfg.S)))
        else:
            results = [job(s) for s in range(cfg.S)]
        for e in cfg.estimators:
            vals = np.array([r[0][e] for r in results])
            cells[e][str(n)] = _summarise(vals, truth, cfg.S)
        hc = np.array([r[1] for r in results])
        ha = np.array([r[2] for r in results])
        se = (lambda h: (h.std(axis=0, ddof=1) / math.sqrt(cfg.S)).tolist() if cfg.S > 1 else [float("nan")] * h.shape[1])
        risk[str(n)] = {
            "d": list(cfg.d_values),
            "CM": [math.fsum(c) / cfg.S for c in hc.T],
            "CM_se": se(hc),
            "ANM": [math.fsum(c) / cfg.S for c in ha.T],
            "ANM_se": se(ha),
        }
        if a == 0:
            for kind, vals in results[0][3].items():
                curve[kind] = np.asarray(vals).tolist()
    curve["G"] = np.asarray(m1.cdf(grid)).tolist()
    provenance = {
        "package": "condmask",
        "version": __version__,
        "seed": cfg.seed,
        "stream": "Philox4x64, SeedSequence(seed, spawn_key=(n_index, replication))",
        "copula_dependence": cfg.copula.dependence,
    }
    return ExperimentReport(cfg.to_dict(), stats, truth.tolist(), cells, risk, curve, provenance)


# --- integer-mode study on marks-like data -------------------------------------------


def marks_study(marks, aux, params: MaskParams, S: int = 200, seed: int = 0, alphas=ALPHAS) -> dict:
    """Mask an integer column once, estimate everything, and calibrate the
    per-statistic RMSE by re-masking the same column ``S`` times.

    Truth is the column's own empirical statistics (linear-interpolation
    quantiles, n-1 sd), since no population law is known for real data.
    """
    marks = np.asarray(marks, dtype=float)
    aux = np.asarray(aux, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    truth = np.concatenate([np.quantile(marks, alphas), [marks.mean(), marks.std(ddof=1), np.corrcoef(marks, aux)[0, 1]]])

    def one(rng):
        z, _, _ = _draw_conditional(marks, params, rng)
        m = MaskedColumn(z, params.release())
        var = estimate_variance(m)
        shared = [z.mean(), math.sqrt(var.value) if not var.negative else np.nan, estimate_correlation(m, aux).raw]
        t1 = quantiles(cdf_estimate_t1(m, method="tabulated"), alphas)
        tb = quantiles(cdf_estimate_tb(m, method="tabulated"), alphas)
        return np.concatenate([t1, shared]), np.concatenate([tb, shared]), z

    t1, tb, z = one(make_stream(seed, 0))
    cal_t1, cal_tb = [], []
    for s in range(S):
        a, b, _ = one(make_stream(seed, 1, s))
        cal_t1.append(a)
        cal_tb.append(b)
    rmse = lambda v: np.sqrt(np.mean((np.asarray(v) - truth) ** 2, axis=0))  # noqa: E731
    return {
        "statistics": [f"{a:g}" for a in alphas] + ["Mean", "s.d.", "Cor"],
        "truth": truth,
        "T1": t1,
        "Tb": tb,
        "rmse_T1": rmse(cal_t1),
        "rmse_Tb": rmse(cal_tb),
        "masked": z,
    }
