"""Command-line interface.

Exit codes: 0 success, 2 user or validation error, 3 I/O error, 4 budget exceeded.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from ._io import atomic_write_text
from .errors import BudgetError, CondMaskError, SeriesDivergenceError
from .estimators import (
    cdf_estimate_t1,
    cdf_estimate_tb,
    estimate_correlation,
    estimate_raw_moments,
    quantiles,
)
from .mask import AnmParams, MaskedColumn, MaskParams, ReleaseParams, mask_conditional, release_report
from .risk import RiskConfig, disclosure_risk
from .simlab import ALPHAS, ExperimentConfig, run_experiment
from .streams import fresh_seed, make_stream

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_BUDGET = 0, 2, 3, 4


class UsageError(Exception):
    pass


# --- CSV helpers ---------------------------------------------------------------------


def read_table(path: str):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty file, a header row is required")
    header, body = rows[0], rows[1:]
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise UsageError(f"{path}: row {i} has {len(row)} fields, header has {len(header)}")
    return header, body


def numeric_column(path, header, body, name):
    if name not in header:
        raise UsageError(f"{path}: no column {name!r}; available columns: {', '.join(header)}")
    j = header.index(name)
    out = np.empty(len(body))
    for i, row in enumerate(body):
        try:
            out[i] = float(row[j])
        except ValueError:
            raise UsageError(f"{path}: row {i + 2}, column {name!r}: cannot parse {row[j]!r} as a number") from None
        if not math.isfinite(out[i]):
            raise UsageError(f"{path}: row {i + 2}, column {name!r}: non-finite value {row[j]!r}")
    return j, out


def format_value(v: float, as_int: bool) -> str:
    return str(int(v)) if as_int else repr(float(v))


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _clean(v):
    """NaN/inf become null so reports stay strict JSON."""
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = fresh_seed()
    if getattr(args, "audit", True):
        print(f"seed: {seed}", file=sys.stderr)
    else:
        print("seed drawn from system entropy and withheld (release mode)", file=sys.stderr)
    return seed


# --- subcommands --------------------------------------------------------------------


def cmd_mask(args) -> int:
    params = MaskParams(args.p, args.sigma, args.integer_mode, None)
    header, body = read_table(args.input)
    j, x = numeric_column(args.input, header, body, args.column)
    seed = _resolve_seed(args)
    masked = mask_conditional(x, params, make_stream(seed))
    as_int = args.integer_mode and bool(np.all(x == np.rint(x)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row, v in zip(body, masked.values):
        row = list(row)
        row[j] = format_value(v, as_int)
        w.writerow(row)
    meta = release_report(masked)
    meta.update(column=args.column, mechanism="conditional", mode="audit" if args.audit else "release",
                version=__version__)
    if args.audit:
        meta["seed"] = seed
    meta_path = args.meta or args.output + ".meta.json"
    atomic_write_text(args.output, buf.getvalue())
    atomic_write_text(meta_path, dumps(meta))
    return EXIT_OK


def _load_release(args) -> ReleaseParams:
    meta = {}
    meta_path = args.meta or args.input + ".meta.json"
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            try:
                meta = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{meta_path}: invalid metadata ({exc})") from None
    elif args.meta:
        raise UsageError(f"metadata file {meta_path} not found")
    p = args.p if args.p is not None else meta.get("p")
    sigma = args.sigma if args.sigma is not None else meta.get("sigma")
    if p is None or sigma is None:
        raise UsageError("masking metadata missing: supply a sidecar .meta.json or both --p and --sigma")
    return ReleaseParams(float(p), float(sigma), bool(args.integer_mode or meta.get("integer_mode", False)))


def cmd_estimate(args) -> int:
    rp = _load_release(args)
    alphas = args.alpha or list(ALPHAS)
    if alphas and not rp.p > 0.5:
        raise SeriesDivergenceError(
            f"distribution and quantile estimates need p > 0.5 (series ratio -(1-p)/p must lie inside (-1, 1)); got p = {rp.p}"
        )
    header, body = read_table(args.input)
    _, z = numeric_column(args.input, header, body, args.column)
    masked = MaskedColumn(z, rp)
    mom = estimate_raw_moments(masked, args.kmax)
    report = {
        "n": masked.n,
        "p": rp.p,
        "sigma": rp.sigma,
        "integer_mode": rp.integer_mode,
        "mean": mom.mean,
        "raw_moments": list(mom.raw[1:]),
        "variance": mom.variance,
        "negative_variance": mom.negative_variance_flag,
        "sd": math.sqrt(mom.variance) if not mom.negative_variance_flag else None,
    }
    if alphas:
        t1 = cdf_estimate_t1(masked, method="tabulated")
        tb = cdf_estimate_tb(masked, method="tabulated")
        q1, qb = quantiles(t1, alphas), quantiles(tb, alphas)
        report["quantiles"] = [{"alpha": a, "T1": float(u), "Tb": float(v)} for a, u, v in zip(alphas, q1, qb)]
        report["bandwidth"] = tb.bandwidth
        lo, hi = t1.support()
        grid = np.linspace(lo, hi, 1024)
        rng_flags = {}
        for name, est in (("T1", t1), ("Tb", tb)):
            g = est.evaluate(grid)
            rng_flags[name] = {"min": float(g.min()), "max": float(g.max()),
                               "out_of_range": bool(g.min() < 0 or g.max() > 1)}
        report["cdf_range"] = rng_flags
    if args.aux_column:
        _, xp = numeric_column(args.input, header, body, args.aux_column)
        c = estimate_correlation(masked, xp)
        report["correlation"] = {"column": args.aux_column, "raw": c.raw, "clamped": c.clamped,
                                 "was_clamped": c.raw != c.clamped}
    _emit(args.output, dumps(_clean(report)))
    return EXIT_OK


def cmd_risk(args) -> int:
    params = MaskParams(args.p, args.sigma, args.integer_mode, None)
    cfg = RiskConfig(d_values=tuple(args.d or (250.0, 500.0, 1000.0, 1500.0, 2000.0)), S=args.replications,
                     estimator=args.estimator, seed=args.seed)
    header, body = read_table(args.input)
    _, x = numeric_column(args.input, header, body, args.column)
    seed = _resolve_seed(args)
    cfg = dataclasses.replace(cfg, seed=seed)
    out = {"conditional": disclosure_risk(x, params, cfg).to_dict()}
    if args.anm_scale is not None:
        out["additive_laplace"] = disclosure_risk(x, AnmParams(args.anm_scale), cfg).to_dict()
    out["seed"] = seed
    _emit(args.output, dumps(_clean(out)))
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
    else:
        doc = {}
    if not isinstance(doc, dict):
        raise UsageError(f"{args.config}: top level must be an object")
    if args.seed is not None:
        doc["seed"] = args.seed
    elif "seed" not in doc:
        doc["seed"] = _resolve_seed(args)
    if args.replications is not None:
        doc["S"] = args.replications
    if args.threads is not None:
        doc["threads"] = args.threads
    try:
        cfg = ExperimentConfig.from_dict(doc)
    except KeyError as exc:
        raise UsageError(f"config: unknown key {exc.args[0]}") from None
    except TypeError as exc:
        raise UsageError(f"config: {exc}") from None
    report = run_experiment(cfg)
    doc = report.to_dict()
    doc["config"].pop("threads", None)  # outputs must not depend on the thread count
    os.makedirs(args.output, exist_ok=True)
    text = report.to_text()
    atomic_write_text(os.path.join(args.output, "report.json"), dumps(_clean(doc)))
    atomic_write_text(os.path.join(args.output, "tables.txt"), text)
    atomic_write_text(os.path.join(args.output, "curve.tsv"), report.curve_text())
    sys.stdout.write(text)
    return EXIT_OK


def _emit(path, text):
    if path:
        atomic_write_text(path, text)
    else:
        sys.stdout.write(text)


# --- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="condmask", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"condmask {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mask", help="mask one numeric column of a CSV file")
    m.add_argument("--input", required=True)
    m.add_argument("--output", required=True)
    m.add_argument("--column", required=True)
    m.add_argument("--p", type=float, required=True)
    m.add_argument("--sigma", type=float, required=True)
    m.add_argument("--integer-mode", action="store_true")
    m.add_argument("--seed", type=int)
    m.add_argument("--audit", action="store_true", help="record the seed in the sidecar (never for publication)")
    m.add_argument("--meta", help="sidecar path (default: OUTPUT.meta.json)")
    m.add_argument("--threads", type=int, default=1)
    m.set_defaults(func=cmd_mask)

    e = sub.add_parser("estimate", help="estimate statistics of the hidden column from a masked CSV")
    e.add_argument("--input", required=True)
    e.add_argument("--column", required=True)
    e.add_argument("--aux-column")
    e.add_argument("--meta", help="sidecar path (default: INPUT.meta.json)")
    e.add_argument("--p", type=float)
    e.add_argument("--sigma", type=float)
    e.add_argument("--integer-mode", action="store_true")
    e.add_argument("--alpha", type=float, action="append")
    e.add_argument("--kmax", type=int, default=4)
    e.add_argument("--output")
    e.add_argument("--threads", type=int, default=1)
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("risk", help="Monte Carlo disclosure-risk audit against the original column")
    r.add_argument("--input", required=True)
    r.add_argument("--column", required=True)
    r.add_argument("--p", type=float, required=True)
    r.add_argument("--sigma", type=float, required=True)
    r.add_argument("--integer-mode", action="store_true")
    r.add_argument("--d", type=float, action="append")
    r.add_argument("--replications", type=int, default=1000)
    r.add_argument("--estimator", choices=("record_value", "column_mean"), default="record_value")
    r.add_argument("--anm-scale", type=float, help="also audit additive Laplace noise of this scale")
    r.add_argument("--seed", type=int)
    r.add_argument("--output")
    r.add_argument("--threads", type=int, default=1)
    r.set_defaults(func=cmd_risk, audit=True)

    s = sub.add_parser("simulate", help="run a Monte Carlo experiment from a JSON config")
    s.add_argument("--config")
    s.add_argument("--output", required=True, help="directory for report.json, tables.txt, curve.tsv")
    s.add_argument("--seed", type=int)
    s.add_argument("--replications", type=int)
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_simulate, audit=True)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (UsageError, CondMaskError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
