"""Command-line entry point: ``detdiff <command> [options]``.

Options come from three layers, later ones winning: built-in defaults, a
JSON file given by ``--config``, explicit flags.  The resolved options
(minus ``out``, ``threads`` and ``config``, which cannot change results)
are hashed into every output file.

Exit codes: 0 ok, 1 usage error, 2 numerical refusal (partial output
written), 3 acceptance failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, io
from .errors import ConvergenceError, DomainError, NumericalRefusal, ToleranceUnreachable

EXIT_OK, EXIT_USAGE, EXIT_REFUSAL, EXIT_ACCEPT = 0, 1, 2, 3
CHUNK = 10_000
UNHASHED = ("out", "threads", "config")
REFUSALS = (NumericalRefusal, ToleranceUnreachable, ConvergenceError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _rational(s) -> Fraction:
    try:
        return Fraction(str(s))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {s!r}") from None


def _pair(s):
    if isinstance(s, (list, tuple)):
        vals = list(s)
    else:
        vals = str(s).split(",")
    try:
        lo, hi = (float(v) for v in vals)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {s!r}") from None
    return (lo, hi)


def _int_list(s):
    if isinstance(s, (list, tuple)):
        return [int(v) for v in s]
    return [int(v) for v in str(s).split(",") if v.strip()]


# name -> (type, default, help); used for flags and for typing config values
COMMON = {
    "seed": (int, 0, "RNG seed"),
    "threads": (int, 1, "worker processes"),
    "digits": (int, 17, "significant digits in CSV output"),
    "out": (str, None, "output path"),
    "quick": (bool, False, "reduced sizes"),
}

COMMANDS = {
    "scan": {
        "axis": (str, "a", "scan a (b fixed) or b (a fixed)"),
        "lo": (float, 2.0, "range start"),
        "hi": (float, 8.0, "range end"),
        "n_points": (int, 2000, "number of points"),
        "fixed": (float, 0.0, "value of the other parameter"),
        "quantity": (str, "D", "D or J"),
        "backend": (str, "fast", "fast, grid or exact"),
        "tol": (float, 1e-10, "series tolerance (grid/exact)"),
        "M": (int, 2**16, "Ulam cells (grid)"),
    },
    "boxcount": {
        "input": (str, None, "scan CSV"),
        "column": (str, None, "value column (default: second)"),
        "eps_min": (float, None, "smallest box size (default: grid spacing)"),
        "eps_cut": (float, None, "resolution guard (default: 1000 x spacing)"),
        "power_range": (_pair, (0.5, 6.0), "-ln eps range for the power law"),
        "log_range": (_pair, (0.5, 9.0), "-ln eps range for the log-corrected fit"),
    },
    "localdim": {
        "input": (str, None, "scan CSV"),
        "column": (str, None, "value column (default: second)"),
        "width": (float, 0.1, "window width"),
        "t_range": (_pair, None, "-ln eps fit range (default: all resolved)"),
        "min_samples": (int, 1000, "minimum samples per window"),
        "eps_cut": (float, None, "resolution guard (default: 1000 x spacing)"),
        "no_smooth": (bool, False, "skip the 3-point running average"),
        "no_log_fit": (bool, False, "power law only"),
    },
    "diffquot": {
        "a": (int, 3, "integer slope"),
        "b": (_rational, Fraction(0), "shift (rational)"),
        "db_min": (_rational, Fraction(1, 10**40), "smallest increment"),
        "db_max": (_rational, Fraction(1, 10**10), "largest increment"),
        "side": (int, 1, "+1 right quotient, -1 left"),
        "tol": (float, 1e-8, "quotient tolerance"),
    },
    "ensemble": {
        "a": (int, 4, "integer slope"),
        "db": (_rational, Fraction(1, 10**30), "increment"),
        "n": (int, 500, "ensemble size"),
        "b_lo": (_rational, Fraction(0), "b range start"),
        "b_hi": (_rational, Fraction(1, 2), "b range end"),
        "tol": (float, 1e-8, "quotient tolerance"),
    },
    "simulate": {
        "a": (_rational, Fraction(3), "slope"),
        "b": (_rational, Fraction(0), "shift"),
        "n_steps": (int, 10_000, "steps per walker"),
        "n_walkers": (int, 10_000, "walkers"),
        "burn_in": (int, 200, "burn-in steps"),
        "clt": (_int_list, None, "comma-separated n values for the KS check"),
    },
    "verify": {
        "only": (_int_list, None, "comma-separated criterion numbers"),
    },
}

DEFAULT_OUT = {"scan": "scan.csv", "boxcount": "boxcount.csv", "localdim": "localdim.csv",
               "diffquot": "diffquot.csv", "ensemble": "ensemble.csv", "simulate": "simulate.json",
               "verify": None}


def _flag(name):
    return "--" + name.replace("_", "-")


def build_parser() -> _Parser:
    p = _Parser(prog="detdiff", description="Transport coefficients of ax+b mod 1 random walks.")
    p.add_argument("--version", action="version", version=f"detdiff {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of options")
    for name, (typ, _, hlp) in COMMON.items():
        if typ is bool:
            common.add_argument(_flag(name), action="store_true", default=argparse.SUPPRESS, help=hlp)
        else:
            common.add_argument(_flag(name), type=typ, default=argparse.SUPPRESS, help=hlp)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd, opts in COMMANDS.items():
        sp = sub.add_parser(cmd, parents=[common], argument_default=argparse.SUPPRESS)
        for name, (typ, _, hlp) in opts.items():
            if typ is bool:
                sp.add_argument(_flag(name), action="store_true", help=hlp)
            else:
                sp.add_argument(_flag(name), type=typ, help=hlp)
    return p


def resolve(command: str, flags: dict, config_path: str | None) -> dict:
    """defaults < config file < flags, each value passed through its type."""
    spec = {**COMMON, **COMMANDS[command]}
    cfg = {k: v[1] for k, v in spec.items()}
    if config_path:
        try:
            with open(config_path) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        file_cfg.pop("command", None)
        for k, v in file_cfg.items():
            k = k.replace("-", "_")
            if k not in spec:
                raise UsageError(f"unknown config key {k!r} for {command}")
            typ = spec[k][0]
            try:
                cfg[k] = v if v is None else (bool(v) if typ is bool else typ(v))
            except (argparse.ArgumentTypeError, TypeError, ValueError) as exc:
                raise UsageError(f"config key {k!r}: {exc}") from None
    cfg.update(flags)
    if cfg["out"] is None:
        cfg["out"] = DEFAULT_OUT[command]
    if cfg["threads"] < 1 or cfg["digits"] < 1:
        raise UsageError("--threads and --digits must be positive")
    return cfg


def hashed_config(command: str, cfg: dict) -> dict:
    return {"command": command, **{k: v for k, v in cfg.items() if k not in UNHASHED}}


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# scan

def _scan_point(job):
    backend, quantity, a, b, tol, M = job
    from .map_core import MapParams
    try:
        if backend == "grid":
            from .transport import diffusion
            r = diffusion(MapParams(a, b), tol=tol, M=M, discretization=False)
            return (r.D if quantity == "D" else r.J), r.error_estimate, "ok"
        from . import exact_engine as ee
        if a != int(a):
            return math.nan, math.nan, "refused:non-integer slope"
        b = Fraction(b)
        if quantity == "J":
            return float(ee.exact_drift(int(a), b)), 0.0, "ok"
        r = ee.exact_diffusion(int(a), b, tol=tol)
        return float(r.value), r.tail_bound, "ok"
    except REFUSALS as exc:
        return math.nan, math.nan, "refused:" + type(exc).__name__


def _scan_rows(cfg, x, a, b, pool):
    from .transport import step_error_estimate, transport_scan
    if cfg["backend"] == "fast":
        J, D = transport_scan(a, b)
        v = D if cfg["quantity"] == "D" else J
        from .kernels import default_nterms
        err = [step_error_estimate(ai, di, default_nterms(ai)) for ai, di in zip(a, D)]
        return [(xi, vi, ei, "ok") for xi, vi, ei in zip(x, v, err)]
    jobs = [(cfg["backend"], cfg["quantity"], float(ai), float(bi), cfg["tol"], cfg["M"]) for ai, bi in zip(a, b)]
    res = list(pool.map(_scan_point, jobs, chunksize=8)) if pool else [_scan_point(j) for j in jobs]
    return [(xi, *r) for xi, r in zip(x, res)]


def _chunk_ok(path: Path, chash: str, n_rows: int) -> bool:
    try:
        meta, _, rows = io.read_csv(path)
    except (OSError, ValueError):
        return False
    return meta.get("config_hash") == chash and len(rows) == n_rows


def cmd_scan(cfg, meta) -> int:
    if cfg["axis"] not in ("a", "b") or cfg["quantity"] not in ("D", "J") \
            or cfg["backend"] not in ("fast", "grid", "exact"):
        raise UsageError("axis must be a|b, quantity D|J, backend fast|grid|exact")
    if cfg["n_points"] < 2 or not cfg["lo"] < cfg["hi"]:
        raise UsageError("need n_points >= 2 and lo < hi")
    x = np.linspace(cfg["lo"], cfg["hi"], cfg["n_points"])
    fixed = np.full_like(x, cfg["fixed"])
    a, b = (x, fixed) if cfg["axis"] == "a" else (fixed, x)
    if np.any(a < 2) or np.any(np.abs(b) > 0.5):
        raise UsageError("parameters outside a >= 2, |b| <= 1/2")
    out = Path(cfg["out"])
    cdir = out.with_name(out.name + ".chunks")
    cols = [cfg["axis"], cfg["quantity"], "error", "status"]
    n_chunks = -(-len(x) // CHUNK)
    pool = ProcessPoolExecutor(cfg["threads"]) if cfg["threads"] > 1 and cfg["backend"] != "fast" else None
    body = []
    try:
        for i in range(n_chunks):
            sl = slice(i * CHUNK, (i + 1) * CHUNK)
            path = cdir / f"chunk_{i:05d}.csv"
            n_rows = len(x[sl])
            if not _chunk_ok(path, meta["config_hash"], n_rows):
                rows = _scan_rows(cfg, x[sl], a[sl], b[sl], pool)
                io.write_csv(path, meta, cols, rows, cfg["digits"])
                _log(f"scan: chunk {i + 1}/{n_chunks} computed")
            else:
                _log(f"scan: chunk {i + 1}/{n_chunks} reused")
            lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
            body.extend(lines[1:])
    finally:
        if pool:
            pool.shutdown()
    header = io.csv_text(meta, cols, []).rstrip("\n")
    io._atomic_write(out, header + "\n" + "\n".join(body) + "\n")
    refused = sum(1 for ln in body if ",refused:" in ln)
    if refused:
        _log(f"scan: {refused} point(s) refused by the {cfg['backend']} backend")
        return EXIT_REFUSAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# box counting

def _load_sample(cfg):
    from .fractal import GraphSample
    if not cfg["input"]:
        raise UsageError("--input is required")
    try:
        _, cols, _ = io.read_csv(cfg["input"])
        col = cfg["column"] or (cols[1] if len(cols) > 1 else None)
        if col is None:
            raise ValueError("need at least two columns")
        data = io.read_columns(cfg["input"], [cols[0], col])
        if "status" in cols:
            _, _, rows = io.read_csv(cfg["input"])
            j = cols.index("status")
            keep = np.array([r[j] == "ok" for r in rows])
        else:
            keep = np.ones(len(data[cols[0]]), bool)
        x, y = data[cols[0]][keep], data[col][keep]
        if not np.all(np.isfinite(y)):
            raise ValueError("non-finite values")
        return GraphSample(x, y, col)
    except (OSError, ValueError) as exc:
        raise UsageError(f"malformed input: {exc}") from None


def cmd_boxcount(cfg, meta) -> int:
    from .fractal import (box_count_curve, covering_bound, eps_schedule,
                          fit_log_corrected, fit_power_law)
    g = _load_sample(cfg)
    eps_min = cfg["eps_min"] or g.spacing
    curve = box_count_curve(g, eps=eps_schedule(g.extent, eps_min), threads=cfg["threads"],
                            eps_cut=cfg["eps_cut"])
    out = Path(cfg["out"])
    rows = zip(curve.eps, curve.N, curve.N_eps, curve.resolved)
    io.write_csv(out, meta, ["epsilon", "N", "N_times_eps", "resolved"], rows, cfg["digits"])
    report, code = {"eps_cut": curve.eps_cut, "n_samples": g.n}, EXIT_OK
    for key, fn, rng in (("power_law", fit_power_law, cfg["power_range"]),
                         ("log_corrected", fit_log_corrected, cfg["log_range"])):
        try:
            report[key] = fn(curve, tuple(rng)).to_json()
        except (DomainError, *REFUSALS) as exc:
            report[key] = {"error": str(exc)}
            code = EXIT_REFUSAL
    cb = covering_bound(curve)
    report["covering_bound"] = {"K": cb.K, "argmax": cb.argmax, "eps_at_max": cb.eps_at_max, "ok": cb.ok}
    io.write_json(out.with_suffix(".json"), meta, report)
    return code


def cmd_localdim(cfg, meta) -> int:
    from .fractal import local_dimension_scan
    g = _load_sample(cfg)
    tr = tuple(cfg["t_range"]) if cfg["t_range"] else None
    rows = local_dimension_scan(g, cfg["width"], t_range=tr, smooth=not cfg["no_smooth"],
                                min_samples=cfg["min_samples"], log_fit=not cfg["no_log_fit"],
                                eps_cut=cfg["eps_cut"])
    io.write_csv(cfg["out"], meta, ["center", "n_samples", "B", "B_smooth", "alpha", "converged"],
                 [(r.center, r.n_samples, r.B, r.B_smooth, math.nan if r.alpha is None else r.alpha,
                   r.converged) for r in rows], cfg["digits"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# exact quotients and ensembles

def cmd_diffquot(cfg, meta) -> int:
    from .exact_engine import quotient_slope
    fit = quotient_slope(cfg["a"], cfg["b"], cfg["db_min"], cfg["db_max"], side=cfg["side"], tol=cfg["tol"])
    order = np.argsort(fit.ln_db)
    out = Path(cfg["out"])
    io.write_csv(out, meta, ["ln_db", "quotient"],
                 zip(fit.ln_db[order], fit.quotient[order]), cfg["digits"])
    rel = None
    if fit.predicted:
        rel = abs(fit.slope - fit.predicted) / abs(fit.predicted)
    io.write_json(out.with_suffix(".json"), meta, {
        "slope": fit.slope, "ols_slope": fit.ols_slope, "method": fit.method, "period": fit.period,
        "predicted": fit.predicted, "relative_error": rel, "spread": fit.spread,
        "n_samples": int(len(fit.ln_db))})
    return EXIT_OK


def cmd_ensemble(cfg, meta) -> int:
    from .stats_lab import EnsembleSpec, qq_quantiles, scaled_difference_ensemble, shapiro_wilk
    n = min(cfg["n"], 100) if cfg["quick"] else cfg["n"]
    spec = EnsembleSpec(cfg["a"], cfg["db"], n, (cfg["b_lo"], cfg["b_hi"]), cfg["seed"])
    z = scaled_difference_ensemble(spec, workers=cfg["threads"], tol=cfg["tol"])
    qq = qq_quantiles(z)
    out = Path(cfg["out"])
    io.write_csv(out, meta, ["theoretical", "sample", "line"],
                 zip(qq.theoretical, qq.sample, qq.line()), cfg["digits"])
    rep = shapiro_wilk(z, seed=cfg["seed"])
    io.write_json(out.with_suffix(".json"), meta, {
        "n": rep.n, "mean": rep.mean, "sd": rep.sd, "se": rep.se, "W": rep.W, "p": rep.p,
        "qq_max_deviation": qq.max_deviation(), "samples": z})
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulation and verification

def _reference_transport(params):
    from .map_core import MapParams
    if params.is_integer_slope:
        from . import exact_engine as ee
        a = int(params.a)
        return float(ee.exact_drift(a, params.b)), float(ee.exact_diffusion(a, params.b).value)
    from .transport import transport_scan
    J, D = transport_scan([float(params.a)], [float(params.b)])
    return float(J[0]), float(D[0])


def cmd_simulate(cfg, meta) -> int:
    from .map_core import MapParams
    from .orbit_sim import SimConfig, clt_check, mc_transport
    params = MapParams(cfg["a"], cfg["b"])
    n_steps, n_walk = cfg["n_steps"], cfg["n_walkers"]
    if cfg["quick"]:
        n_steps, n_walk = min(n_steps, 2000), min(n_walk, 2000)
    sc = SimConfig(params, n_steps, n_walk, cfg["seed"], cfg["burn_in"], threads=cfg["threads"])
    est = mc_transport(sc)
    J, D = _reference_transport(params)
    payload = {"estimate": {k: getattr(est, k) for k in
                            ("J", "D", "J_se", "D_se", "D_inc", "D_inc_se", "n_steps", "n_walkers", "method")},
               "reference": {"J": J, "D": D}}
    if cfg["clt"]:
        payload["clt"] = [{"n": r.n, "ks": r.ks, "variance": r.variance, "variance_ratio": r.variance_ratio}
                          for r in clt_check(sc, cfg["clt"], D, J)]
    io.write_json(cfg["out"], meta, payload)
    return EXIT_OK


def cmd_verify(cfg, meta) -> int:
    from .acceptance import CRITERIA, run_criterion
    only = cfg["only"] or [c[0] for c in CRITERIA]
    if any(not 1 <= k <= len(CRITERIA) for k in only):
        raise UsageError(f"criteria are numbered 1..{len(CRITERIA)}")
    results = []
    for k in only:
        r = run_criterion(k, quick=cfg["quick"], seed=cfg["seed"])
        print(f"{r.line()}  [{r.seconds:.1f}s]", flush=True)
        results.append(r)
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    if cfg["out"]:
        io.write_json(cfg["out"], meta, {"results": [
            {"number": r.number, "title": r.title, "passed": r.passed, "detail": r.detail}
            for r in results]})
    return EXIT_OK if n_pass == len(results) else EXIT_ACCEPT


HANDLERS = {"scan": cmd_scan, "boxcount": cmd_boxcount, "localdim": cmd_localdim,
            "diffquot": cmd_diffquot, "ensemble": cmd_ensemble, "simulate": cmd_simulate,
            "verify": cmd_verify}


def main(argv=None) -> int:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    config_path = ns.pop("config", None)
    try:
        cfg = resolve(command, ns, config_path)
        meta = io.metadata(command, hashed_config(command, cfg))
        return HANDLERS[command](cfg, meta)
    except (UsageError, DomainError) as exc:
        print(f"detdiff {command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except REFUSALS as exc:
        print(f"detdiff {command}: refused: {exc}", file=sys.stderr)
        return EXIT_REFUSAL


if __name__ == "__main__":
    sys.exit(main())
