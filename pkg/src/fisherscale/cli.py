"""Command-line interface.

Every run writes a report with a ``header`` (timestamp, version) and a
deterministic ``body`` (schema, command, inputs, results).  ``--verify``
re-runs the command recorded in a report and compares the bodies.

Exit codes: 0 success, 2 invalid input, 3 numerical failure (including a
failed verification), 4 infinite information where a finite value is needed.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymp import bound_report, l2_remainder, lan_sample, mc_variance, FAILURE_LIMIT
from .dist import format_dist, normal, parse_dist
from .errors import (
    DomainError,
    FisherScaleError,
    InfiniteInformationError,
    NoDensityError,
    NumericalError,
)
from .mest import asym_variance, efficiency, family_score, m_estimate, parse_score
from .quad import QuadratureConfig
from .score import ExtendedReal, fisher_closed, fisher_scale
from .varinfo import build_basis, convergence_scan, fisher_empirical, fisher_variational

SCHEMA = 1
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INFINITE = 0, 2, 3, 4
# arguments that only affect how a run executes or where its report goes;
# they are kept out of the report body
_PRESENTATION = ("output", "format", "verify", "command", "workers")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- argument types ----------------------------------------------------------
def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"{text!r} must be positive")
    return v


def _finite_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"{text!r} must be finite")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text!r} must be a positive integer")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 0:
        raise argparse.ArgumentTypeError("seed must be nonnegative")
    return v


def _int_list(text: str) -> list[int]:
    return [_positive_int(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [_finite_float(t) for t in text.split(",") if t.strip()]


# -- parser ------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fisherscale",
        description="Fisher information of scale: closed-form and variational computation, "
        "M-estimation of scale, and Monte Carlo checks of the asymptotics.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verify", metavar="REPORT", help="re-run the command recorded in REPORT and compare")
    sub = parser.add_subparsers(dest="command")

    def common(p, dist_required=True):
        p.add_argument("--dist", required=dist_required, default=None if dist_required else "normal",
                       help="distribution, e.g. normal, 'cauchy*scale(2)', 'mix: 0.9*normal ++ 0.1*dirac(0)'")
        p.add_argument("--abs-tol", type=_positive_float, default=1e-10, help="quadrature absolute tolerance")
        p.add_argument("--rel-tol", type=_positive_float, default=1e-9, help="quadrature relative tolerance")
        p.add_argument("--output", "-o", help="report path (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    def monte_carlo(p, n_default, reps_default):
        p.add_argument("--sigma", type=_positive_float, default=1.0)
        p.add_argument("--n", type=_positive_int, default=n_default)
        p.add_argument("--reps", type=_positive_int, default=reps_default)
        p.add_argument("--seed", type=_seed, default=0)
        p.add_argument("--workers", type=_positive_int, default=1, help="threads; results do not depend on it")

    p = sub.add_parser("info", help="Fisher information of a distribution")
    common(p)
    p.add_argument("--method", choices=("closed", "variational", "empirical"), default="closed")
    p.add_argument("--kind", choices=("linear", "log", "mixed"), default="linear")
    p.add_argument("--m", type=_positive_int, default=32, help="basis size")
    p.add_argument("--sizes", type=_int_list, help="basis sizes for a convergence scan, e.g. 4,8,16,32")
    p.add_argument("--sigma", type=_positive_float, default=1.0)
    p.add_argument("--reg-tol", type=_positive_float, default=1e-12)
    p.add_argument("--input", help="sample file for --method empirical")
    p.add_argument("--csv-col", type=int, help="0-based CSV column of the sample")
    p.add_argument("--n", type=_positive_int, default=10000, help="sample size drawn when no --input is given")
    p.add_argument("--seed", type=_seed, default=0)

    p = sub.add_parser("estimate", help="M-estimate of scale from a data file")
    common(p, dist_required=False)
    p.add_argument("--input", required=True, help="one number per line ('#' comments allowed) or CSV")
    p.add_argument("--csv-col", type=int, help="0-based CSV column")
    p.add_argument("--score", default="chi2", help="lambda, chi2, huber(k) or bumps:linear(c,w,a);...")

    p = sub.add_parser("simulate", help="Monte Carlo variance of an M-estimator")
    common(p)
    p.add_argument("--score", default="lambda")
    monte_carlo(p, 2000, 2000)

    p = sub.add_parser("lan", help="simulate log-likelihood ratios against the LAN expansion")
    common(p)
    p.add_argument("--h", type=_finite_float, default=1.0)
    monte_carlo(p, 5000, 1000)

    p = sub.add_parser("l2check", help="remainder of the mean-square derivative of sqrt(density)")
    common(p)
    p.add_argument("--sigma", type=_positive_float, default=1.0)
    p.add_argument("--t", type=_float_list, default=[0.04, 0.02, 0.01], help="comma-separated step sizes")
    return parser


# -- helpers -----------------------------------------------------------------
def _jsonable(obj):
    if isinstance(obj, ExtendedReal):
        return _jsonable(obj.to_json())
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def read_sample(path: str, csv_col: int | None = None) -> np.ndarray:
    """Numbers from a text file (one per line) or from a CSV column."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read input file {path!r}: {exc.strerror}", EXIT_INPUT) from None
    values = []
    if csv_col is None:
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise CliError(f"{path}:{lineno}: not a number: {line!r}", EXIT_INPUT) from None
    else:
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
        for i, row in enumerate(rows):
            if csv_col < 0 or csv_col >= len(row):
                raise CliError(f"{path}: row {i + 1} has no column {csv_col}", EXIT_INPUT)
            try:
                values.append(float(row[csv_col]))
            except ValueError:
                if i == 0:  # header
                    continue
                raise CliError(f"{path}: row {i + 1}: not a number: {row[csv_col]!r}", EXIT_INPUT) from None
    if not values:
        raise CliError(f"{path}: no observations", EXIT_INPUT)
    x = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(x)):
        raise CliError(f"{path}: non-finite observation", EXIT_INPUT)
    return x


def _config(inputs: dict) -> QuadratureConfig:
    return QuadratureConfig(abs_tol=inputs["abs_tol"], rel_tol=inputs["rel_tol"])


# -- commands ----------------------------------------------------------------
def cmd_info(a: dict) -> tuple[dict, int]:
    d = parse_dist(a["dist"])
    cfg = _config(a)
    if a["method"] == "closed":
        res = {"value": fisher_closed(d, cfg), "value_sigma": fisher_scale(d, a["sigma"], cfg)}
        return res, EXIT_OK
    if a["method"] == "empirical":
        x = read_sample(a["input"], a["csv_col"]) if a["input"] else d.sample(a["n"], a["seed"])
        basis = build_basis(a["kind"], a["m"], d)
        est = fisher_empirical(x, basis, a["reg_tol"])
        return est.to_record(), EXIT_OK
    if a["sizes"]:
        scan = convergence_scan(d, a["kind"], a["sizes"], a["reg_tol"], cfg)
        return scan.to_record(), EXIT_OK
    try:
        basis = build_basis(a["kind"], a["m"], d, d.singular_points())
        note = None
    except NoDensityError:
        # only an atom at zero: every quotient is 0/0, any basis will do
        basis = build_basis(a["kind"], a["m"], normal())
        note = "no continuous part; basis placed for the standard normal"
    rec = fisher_variational(d, basis, a["reg_tol"], cfg).to_record()
    if note:
        rec["note"] = note
    return rec, EXIT_OK


def cmd_estimate(a: dict) -> tuple[dict, int]:
    d = parse_dist(a["dist"])
    cfg = _config(a)
    x = read_sample(a["input"], a["csv_col"])
    score = parse_score(a["score"], d, cfg)
    s = m_estimate(x, score)
    res = {
        "S": float(s),
        "roots": list(s.roots),
        "n": int(x.size),
        "score": score.name,
        "beta": score.beta,
        "v1": asym_variance(score, d, cfg),
    }
    try:
        res["efficiency"] = efficiency(score, d, cfg)
    except (InfiniteInformationError, DomainError) as exc:
        res["efficiency"] = None
        res["efficiency_note"] = str(exc)
    return res, EXIT_OK


def cmd_simulate(a: dict) -> tuple[dict, int]:
    d = parse_dist(a["dist"])
    cfg = _config(a)
    score = parse_score(a["score"], d, cfg)
    rep = mc_variance(d, score, a["sigma"], a["n"], a["reps"], a["seed"], a.get("workers", 1), cfg)
    res = {"mc": rep.to_record()}
    scores = [score] if score.name == "lambda" or not d.is_regular else [family_score(d), score]
    try:
        res["bound"] = bound_report(d, scores, cfg).to_record()
    except (InfiniteInformationError, DomainError) as exc:
        res["bound"] = {"skipped": str(exc)}
    code = EXIT_OK
    if rep.failure_rate > FAILURE_LIMIT:
        code = EXIT_NUMERIC
    return res, code


def cmd_lan(a: dict) -> tuple[dict, int]:
    d = parse_dist(a["dist"])
    rep = lan_sample(d, a["sigma"], a["h"], a["n"], a["reps"], a["seed"], a.get("workers", 1), _config(a))
    return rep.to_record(), EXIT_OK


def cmd_l2check(a: dict) -> tuple[dict, int]:
    d = parse_dist(a["dist"])
    cfg = _config(a)
    ts = a["t"]
    if not ts:
        raise CliError("--t needs at least one step", EXIT_INPUT)
    r = [l2_remainder(d, a["sigma"], t, cfg) for t in ts]
    res = {"t": ts, "r": r}
    if len(r) > 1:
        res["ratios"] = [r[i + 1] / r[i] if r[i] > 0 else None for i in range(len(r) - 1)]
        order = np.argsort(np.abs(ts))[::-1]
        ordered = [r[i] for i in order]
        res["decreasing"] = all(b < a_ for a_, b in zip(ordered, ordered[1:]))
    return res, EXIT_OK


COMMANDS = {
    "info": cmd_info,
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "lan": cmd_lan,
    "l2check": cmd_l2check,
}


def execute(command: str, inputs: dict, workers: int = 1) -> tuple[dict, int]:
    """Run one command on already-validated inputs; returns (body, exit code)."""
    results, code = COMMANDS[command]({**inputs, "workers": workers})
    body = {
        "schema": SCHEMA,
        "version": __version__,
        "command": command,
        "inputs": inputs,
        "seed": inputs.get("seed"),
        "results": results,
    }
    return _jsonable(body), code


# -- report I/O --------------------------------------------------------------
def _flatten(obj, prefix=""):
    if isinstance(obj, dict) and obj:
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list) and obj:
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}.{i}")
    else:
        yield prefix, json.dumps(obj, sort_keys=True)


def _unflatten(pairs):
    root: dict = {}
    for key, raw in pairs:
        parts = key.split(".")
        node = root
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = json.loads(raw)

    def fix(node):
        if isinstance(node, dict):
            node = {k: fix(v) for k, v in node.items()}
            if node and all(k.isdigit() for k in node):
                return [node[str(i)] for i in range(len(node))]
        return node
    return fix(root)


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for key, value in _flatten(report):
        w.writerow([key, value])
    return buf.getvalue()


def load_report(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read report {path!r}: {exc.strerror}", EXIT_INPUT) from None
    try:
        if text.lstrip().startswith("{"):
            report = json.loads(text)
        else:
            rows = list(csv.reader(io.StringIO(text)))
            report = _unflatten(rows[1:])
    except (ValueError, IndexError, AttributeError) as exc:
        raise CliError(f"{path}: not a report ({exc})", EXIT_INPUT) from None
    if not isinstance(report, dict) or "body" not in report:
        raise CliError(f"{path}: report has no body", EXIT_INPUT)
    body = report["body"]
    if body.get("schema") != SCHEMA or body.get("command") not in COMMANDS:
        raise CliError(f"{path}: unsupported report schema or command", EXIT_INPUT)
    return report


def _header() -> dict:
    now = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0)
    return {"generated": now.isoformat(), "program": "fisherscale", "version": __version__}


def _emit(text: str, output: str | None):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _verify(path: str) -> tuple[dict, int]:
    stored = load_report(path)["body"]
    body, code = execute(stored["command"], stored["inputs"])
    same = json.dumps(body, sort_keys=True) == json.dumps(stored, sort_keys=True)
    result = {"report": path, "match": same}
    if not same:
        diffs = sorted(
            k for k, v in dict(_flatten(body)).items() if dict(_flatten(stored)).get(k) != v
        )
        result["differences"] = diffs[:50]
    return result, (code if same else EXIT_NUMERIC)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with exit code 2
        return int(exc.code or 0)
    try:
        if args.verify:
            if args.command:
                raise CliError("--verify takes no subcommand", EXIT_INPUT)
            result, code = _verify(args.verify)
            sys.stdout.write(json.dumps(result, sort_keys=True, indent=2) + "\n")
            if not result["match"]:
                print("error: recomputed report differs from the recorded one", file=sys.stderr)
            return code
        if not args.command:
            parser.print_usage(sys.stderr)
            print("error: a command is required", file=sys.stderr)
            return EXIT_INPUT
        inputs = {k: v for k, v in vars(args).items() if k not in _PRESENTATION}
        if "dist" in inputs:
            # normalized spelling makes reports independent of user formatting
            inputs["dist"] = format_dist(parse_dist(inputs["dist"]))
        body, code = execute(args.command, inputs, getattr(args, "workers", 1))
        _emit(render({"header": _header(), "body": body}, args.format), args.output)
        return code
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InfiniteInformationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFINITE
    except (DomainError, NoDensityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FisherScaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


run = main


if __name__ == "__main__":
    sys.exit(main())
