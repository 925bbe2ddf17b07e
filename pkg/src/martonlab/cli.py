"""Command-line entry point: ``martonlab <subcommand> [options]``.

Exit codes: 0 success (or the checked inequality holds), 1 confirmed
violation or refuted certificate, 2 invalid input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from . import bssc as bssc_mod
from .envelope import envelope_trace, marton_sum_rate_binary, max_mi, weighted_rate_support
from .errors import InputError
from .extremal import certify_local_max
from .factorize import (LetterT, _h_rows, SearchConfig, WeightedObjective, conj2_check, conj3_check,
                        letter_envelope, more_capable_test, random_search, search_summary,
                        write_jsonl, write_summary_csv)
from .maxcorr import maximal_correlation_sq
from .probcore import (APPENDIX_B_MAP, APPENDIX_B_P_UV, BUILTINS, as_simplex, builtin_channel,
                       load_channel)
from .tmax import CouplingWithMap, objective_J, tmax_eval

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2
SIG_DIGITS = 9
EQ1_TOL = 1e-6


# --- emission -----------------------------------------------------------------------

def _round(obj):
    """Floats to 9 significant digits; numpy scalars and arrays to plain Python."""
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.{SIG_DIGITS}g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.{SIG_DIGITS}g}"
    return str(v)


def emit(report: dict, fmt: str = "json", config: dict | None = None) -> str:
    """Render a report.  JSON: {"config", "result"} with sorted keys.

    CSV: ``# key=value`` header lines for the config, then the rows of
    ``report["rows"]`` under ``report["columns"]``; reports without rows are
    flattened into key,value pairs.
    """
    config = _round(config or {})
    if fmt == "json":
        return json.dumps({"config": config, "result": _round(report)}, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    for k in sorted(config):
        buf.write(f"# {k}={json.dumps(config[k], sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    if "rows" in report:
        w.writerow(report["columns"])
        for row in report["rows"]:
            w.writerow([_cell(v) for v in _round(list(row))])
    else:
        w.writerow(["key", "value"])
        flat = _round(report)
        for k in sorted(flat):
            v = flat[k]
            w.writerow([k, _cell(v) if not isinstance(v, (dict, list)) else json.dumps(v, sort_keys=True)])
    return buf.getvalue()


# --- argument helpers -----------------------------------------------------------------

def parse_px(text: str) -> np.ndarray:
    """Comma-separated probabilities; fractions such as 1/3 are parsed exactly."""
    try:
        parts = [Fraction(s.strip()) for s in text.split(",") if s.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"cannot parse --px {text!r}: {exc}") from None
    if not parts:
        raise InputError("--px is empty")
    if any(f < 0 for f in parts):
        raise InputError("--px entries must be nonnegative")
    total = sum(parts)
    if total == 0:
        raise InputError("--px sums to zero")
    return np.array([float(f / total) for f in parts])


def _float_list(text: str) -> list:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"cannot parse number list {text!r}") from None


def _threads() -> int:
    raw = os.environ.get("MARTONLAB_THREADS", "")
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"MARTONLAB_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)


def _channel(args, which: str = ""):
    builtin = getattr(args, f"builtin{which}", None)
    path = getattr(args, f"channel{which}", None)
    if builtin and path:
        raise InputError("give either --builtin or --channel, not both")
    if path:
        return load_channel(path)
    if builtin:
        return builtin_channel(builtin)
    raise InputError(f"a channel is required: --builtin{which} NAME or --channel{which} FILE")


def _input_law(args, ch, default):
    if args.px is not None:
        px = parse_px(args.px)
    elif default is not None:
        px = default
    else:
        px = np.full(ch.x_size, 1.0 / ch.x_size)
    if px.size != ch.x_size:
        raise InputError(f"--px has {px.size} entries, channel has {ch.x_size} inputs")
    return as_simplex(px, "px")


def _load_json(path) -> object:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _config(args) -> dict:
    skip = {"func", "out", "format"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}
    if "lam" in cfg:
        cfg["lambda"] = cfg.pop("lam")
    cfg["version"] = __version__
    return cfg


# --- subcommands (each returns (report, exit_code)) -------------------------------------

def cmd_info(args):
    ch, default = _channel(args)
    px = _input_law(args, ch, default)
    iy, iz = ch.mi_pair(px)
    report = {"name": ch.name, "x_size": ch.x_size, "y_size": ch.y_size, "z_size": ch.z_size,
              "dense": ch.is_dense(), "px": px, "I_XY": iy, "I_XZ": iz,
              "channel": ch.to_dict()}
    if ch.x_size <= 3:
        report["y_more_capable"] = more_capable_test(ch).more_capable
        report["z_more_capable"] = more_capable_test(ch.swapped()).more_capable
    return report, EXIT_OK


def _tmax(args, ch, px):
    return tmax_eval(ch, px, args.alpha, restarts=args.restarts, seed=args.seed)


def cmd_tmax(args):
    ch, default = _channel(args)
    px = _input_law(args, ch, default)
    res = _tmax(args, ch, px)
    report = {"value": res.value, "is_lower_bound": res.is_lower_bound,
              "outside_regime": res.outside_regime, "witness": res.witness.to_dict(),
              "max_mi": max_mi(ch, args.alpha)(px)}
    return report, EXIT_OK


def cmd_check_eq1(args):
    ch, default = _channel(args)
    px = _input_law(args, ch, default)
    res = _tmax(args, ch, px)
    rhs = max_mi(ch, args.alpha)(px)
    gap = res.value - rhs
    violated = gap > EQ1_TOL
    report = {"tmax": res.value, "max_mi": rhs, "gap": gap, "tolerance": EQ1_TOL,
              "tmax_is_lower_bound": res.is_lower_bound,
              "verdict": "violated" if violated else "holds_within_tolerance",
              "witness": res.witness.to_dict()}
    return report, EXIT_VIOLATION if violated else EXIT_OK


def cmd_envelope(args):
    ch, default = _channel(args)
    if ch.x_size != 2:
        raise InputError("envelope of the single-letter functional needs a binary-input channel")
    px = _input_law(args, ch, default)
    w = WeightedObjective(args.alpha, args.lam)
    lt = LetterT(ch, args.alpha, restarts=args.restarts, seed=args.seed)

    def fn(q):
        q = np.atleast_2d(q)
        return (-w.y_weight * _h_rows(q, ch.y_given_x) - w.lam_bar * _h_rows(q, ch.z_given_x)
                + lt.rows(q))

    if args.format == "csv":
        rows = envelope_trace(fn, points=args.points, grid=args.grid or 2001, vectorized=True)
        return {"columns": ["p", "g", "envelope"], "rows": rows.tolist()}, EXIT_OK
    value = letter_envelope(ch, px, w, lt, grid=args.grid)
    report = {"envelope": value, "functional": float(fn(px)[0]), "px": px,
              "is_lower_bound": not lt.exact}
    return report, EXIT_OK


def cmd_sumrate(args):
    ch, _ = _channel(args)
    res = marton_sum_rate_binary(ch, grid=args.grid or 101)
    return res.to_dict(), EXIT_OK


def cmd_weighted_rate(args):
    ch, _ = _channel(args)
    res, swapped = weighted_rate_support(ch, args.alpha, grid=args.grid or 101)
    return {"alpha": args.alpha, "rate": res.to_dict(), "swapped": swapped.to_dict()}, EXIT_OK


def _pair_law(args, ch1, ch2, d1, d2):
    if args.px is not None:
        p = parse_px(args.px)
        if p.size == ch1.x_size * ch2.x_size:
            return p
        raise InputError(f"--px must give the joint law of both letters ({ch1.x_size * ch2.x_size} entries)")
    p1 = d1 if d1 is not None else np.full(ch1.x_size, 1.0 / ch1.x_size)
    p2 = d2 if d2 is not None else np.full(ch2.x_size, 1.0 / ch2.x_size)
    return np.outer(p1, p2).ravel()


def _conj(args, alpha):
    ch1, d1 = _channel(args)
    if args.builtin2 is None and args.channel2 is None:
        ch2, d2 = ch1, d1
    else:
        ch2, d2 = _channel(args, "2")
    p = _pair_law(args, ch1, ch2, d1, d2)
    v = conj2_check(ch1, ch2, p, WeightedObjective(alpha, args.lam), restarts=args.restarts,
                    seed=args.seed, envelope_grid=args.grid)
    report = v.to_dict()
    report["tolerance"] = 1e-6
    return report, EXIT_VIOLATION if v.verdict == "violation_candidate" else EXIT_OK


def cmd_conj1(args):
    return _conj(args, 1.0)


def cmd_conj2(args):
    return _conj(args, args.alpha)


def cmd_conj3(args):
    ch, _ = _channel(args)
    v = conj3_check(ch, args.lam, args.alpha, restarts=args.restarts, seed=args.seed,
                    envelope_grid=args.grid or 2001)
    report = v.to_dict()
    if args.format == "csv":
        rows = [[r["p1"], r["lhs"], r["rhs"], r["slack"]] for r in v.details["per_point"]]
        return {"columns": ["p1", "lhs", "rhs", "slack"], "rows": rows}, \
            EXIT_VIOLATION if v.verdict == "violation_candidate" else EXIT_OK
    return report, EXIT_VIOLATION if v.verdict == "violation_candidate" else EXIT_OK


def cmd_bssc(args):
    if args.g_scan:
        return {"columns": ["x", "g"], "rows": bssc_mod.g_scan(args.step)}, EXIT_OK
    if args.alphas is not None:
        rows = []
        for a in _float_list(args.alphas):
            value, swapped = bssc_mod.bssc_weighted_region(a, grid=args.grid or 101)
            rows.append([a, value, swapped])
        return {"columns": ["alpha", "value", "swapped_value"], "rows": rows}, EXIT_OK
    alphas = np.linspace(1.0, 8.0, 51)[1:]
    xs = np.arange(0, 501) * 1e-3
    scan = bssc_mod.and_case_scan(alphas, xs)
    report = {k: v for k, v in scan.items() if k != "g_scan"}
    if args.format == "csv":
        rows = [[r["alpha"], r["root_x"], r["alpha_bound"], r["admissible"]] for r in scan["alpha_scan"]]
        return {"columns": ["alpha", "root_x", "alpha_bound", "admissible"], "rows": rows}, EXIT_OK
    return report, EXIT_OK


def cmd_maxcorr(args):
    if args.joint is None:
        raise InputError("--joint FILE is required")
    data = _load_json(args.joint)
    if isinstance(data, dict):
        data = data.get("joint")
    if data is None:
        raise InputError("joint table JSON must be a 2-D list or an object with a 'joint' field")
    return maximal_correlation_sq(np.asarray(data, dtype=float)).to_dict(), EXIT_OK


def cmd_counterexample(args):
    ch, px = builtin_channel("appendix_b")
    iy, iz = ch.mi_pair(px)
    alpha = iz / iy  # corner point of max{alpha I(X;Y), I(X;Z)}
    c = CouplingWithMap(np.array(APPENDIX_B_P_UV), np.array(APPENDIX_B_MAP), 2)
    lhs = objective_J(c, ch, c.x_marginal(), alpha)
    rhs = max(alpha * iy, iz)
    report = {"alpha": alpha, "lhs": lhs, "rhs": rhs, "margin": lhs - rhs, "px": px,
              "witness": c.to_dict(),
              "verdict": "weighted binary inequality violated" if lhs > rhs else "not violated"}
    # reproducing the published counterexample is the success case
    return report, EXIT_OK


def cmd_certify(args):
    ch, _ = _channel(args)
    if args.coupling is None:
        raise InputError("--coupling FILE is required")
    data = _load_json(args.coupling)
    try:
        p_uv, f = np.asarray(data["p_uv"], dtype=float), np.asarray(data["f"], dtype=int)
    except (KeyError, TypeError) as exc:
        raise InputError(f"coupling JSON lacks field {exc}") from None
    c = CouplingWithMap(p_uv, f, int(data.get("x_size", ch.x_size)))
    rep = certify_local_max(c, ch, c.x_marginal())
    return rep.to_dict(), EXIT_VIOLATION if rep.verdict == "refuted" else EXIT_OK


def cmd_search(args):
    lambdas = tuple(_float_list(args.lambdas))
    cfg = SearchConfig(seed=args.seed, trials=args.trials, conjecture=args.conjecture,
                       lambdas=lambdas, alpha=args.alpha, tolerance=args.tolerance,
                       restarts=args.restarts, workers=min(args.workers, _threads()),
                       use_envelope=not args.no_envelope, channel_family=args.family)
    records = random_search(cfg)
    if args.jsonl:
        write_jsonl(_round(records), args.jsonl)
    if args.summary_csv:
        write_summary_csv(records, args.summary_csv)
    summary = search_summary(records)
    confirmed = summary["violation_candidates"] > 0
    if args.format == "csv":
        rows = [[r["trial"], r["instance"]["lambda"], r["lhs"], r["rhs"], r["slack"], r["verdict"]]
                for r in records]
        return {"columns": ["trial", "lambda", "lhs", "rhs", "slack", "verdict"], "rows": rows}, \
            EXIT_VIOLATION if confirmed else EXIT_OK
    summary["tolerance"] = args.tolerance
    return summary, EXIT_VIOLATION if confirmed else EXIT_OK


# --- parser -------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, channel: bool = True):
    if channel:
        p.add_argument("--builtin", choices=BUILTINS, help="named fixture channel")
        p.add_argument("--channel", help="channel JSON file")
        p.add_argument("--px", help="input law, e.g. 1/3,1/3,1/3")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=32)
    p.add_argument("--grid", type=int, default=None, help="grid density (command specific)")
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="martonlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"martonlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_, channel=True):
        p = sub.add_parser(name, help=help_)
        _common(p, channel)
        p.set_defaults(func=func)
        return p

    add("info", cmd_info, "channel summary and mutual informations")
    add("tmax", cmd_tmax, "T_alpha at an input law with its witness coupling")
    p = add("envelope", cmd_envelope, "concave envelope of the single-letter weighted functional")
    p.add_argument("--points", type=int, default=201, help="trace points for --format csv")
    add("sumrate", cmd_sumrate, "Marton sum-rate of a binary-input channel")
    add("weighted-rate", cmd_weighted_rate, "max alpha R1 + R2 over the Marton region")
    add("check-eq1", cmd_check_eq1, "compare T_alpha with max{alpha I(X;Y), I(X;Z)}")
    for name, func in (("conj1", cmd_conj1), ("conj2", cmd_conj2)):
        p = add(name, func, "two-letter factorization check")
        p.add_argument("--builtin2", choices=BUILTINS, help="second letter (default: same as first)")
        p.add_argument("--channel2", help="second letter channel JSON file")
    add("conj3", cmd_conj3, "single-letter envelope check with T_alpha")
    p = add("bssc", cmd_bssc, "AND-case analysis of the skew-symmetric channel", channel=False)
    p.add_argument("--g-scan", action="store_true", help="emit (x, g(x)) as CSV")
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--alphas", help="comma list: emit the weighted-region table")
    p = add("maxcorr", cmd_maxcorr, "squared maximal correlation of a joint table", channel=False)
    p.add_argument("--joint", help="joint table JSON file")
    add("counterexample", cmd_counterexample, "reproduce the published binary counterexample",
        channel=False)
    p = add("certify", cmd_certify, "local-maximum certificate for a coupling")
    p.add_argument("--coupling", help='JSON file with "p_uv", "f" and optional "x_size"')
    p = add("search", cmd_search, "randomized factorization search", channel=False)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--conjecture", choices=("conj1", "conj2"), default="conj1")
    p.add_argument("--lambdas", default="0,0.25,0.5,0.75,1")
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--family", choices=("dirichlet", "erasure_bsc"), default="dirichlet")
    p.add_argument("--no-envelope", action="store_true",
                   help="mutation: replace the envelopes by the plain functional")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--jsonl", help="write one verdict per line here")
    p.add_argument("--summary-csv", help="write the per-record CSV summary here")
    # search draws its own channels; restarts default to the screening setting
    p.set_defaults(restarts=8)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bssc" and (args.g_scan or args.alphas is not None):
        args.format = "csv"
    try:
        _threads()
        report, code = args.func(args)
        text = emit(report, args.format, _config(args))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
