"""Command-line front end.

Subcommands ``critval``, ``size``, ``maxsize``, ``grid`` and ``verify``.
Settings resolve as command-line flag, then ``--config`` file
(``key=value`` lines, ``#`` comments), then built-in default.

Exit codes: 0 success, 1 verification failure, 2 usage or domain error,
3 numerical convergence failure, 4 file-system error.
"""
from __future__ import annotations

import argparse
import csv
import io
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__, distribution
from .distribution import ModelParams
from .errors import BracketError, ConvergenceError, DomainError, PMSError, RangeError
from .grid import CACHE_ENV_VAR, GridCache
from .plotting import size_curve_svg
from .rules import CriticalValueRule, RuleContext, RuleKind
from .size import max_size, size_curve, write_size_csv
from .verification import VerifyConfig, run_all

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4

DEFAULTS = {
    "rho": 0.7,
    "cutoff": 1.96,
    "delta": 0.05,
    "eta": 0.01,
    "eta_list": None,
    "rule": None,
    "gamma": None,
    "gamma_min": -10.0,
    "gamma_max": 10.0,
    "gamma_step": 0.1,
    "mc": False,
    "reps": 100_000,
    "seed": 0,
    "workers": 1,
    "out": None,
    "svg": None,
    "cache_dir": None,
    "tol_quad": 1e-9,
    "tol_quantile": 1e-13,
    "only": None,
}


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    return [int(x) for x in _float_list(text)]


_CONVERT = {
    "rho": float, "cutoff": float, "delta": float, "eta": float, "gamma_min": float,
    "gamma_max": float, "gamma_step": float, "tol_quad": float, "tol_quantile": float,
    "reps": int, "seed": int, "workers": int, "eta_list": _float_list, "gamma": _float_list,
    "only": _int_list, "rule": str, "out": str, "svg": str, "cache_dir": str,
    "mc": lambda s: str(s).strip().lower() in ("1", "true", "yes", "on"),
}


def read_config_file(path) -> dict:
    """Parse a ``key=value`` file into typed settings."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _CONVERT:
            raise UsageError(f"{path}:{lineno}: unrecognised setting {raw.strip()!r}")
        try:
            out[key] = _CONVERT[key](value.strip())
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value.strip()!r}") from None
    return out


def resolve_settings(ns: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    given = {}
    if getattr(ns, "config", None):
        given.update(read_config_file(ns.config))
    given.update({k: v for k, v in vars(ns).items() if k in DEFAULTS and v is not None})
    settings.update(given)
    settings["_explicit_range"] = any(k in given for k in ("gamma_min", "gamma_max", "gamma_step"))
    if settings["rule"] is not None and settings["rule"] not in {k.value for k in RuleKind}:
        raise UsageError(f"unknown rule {settings['rule']!r}")
    return settings


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model and rule")
    g.add_argument("--rho", type=float, help="correlation rho, |rho| <= 0.999 (default 0.7)")
    g.add_argument("--cutoff", type=float, help="pre-test cutoff c > 0 (default 1.96)")
    g.add_argument("--delta", type=float, help="nominal level (default 0.05)")
    g.add_argument("--eta", type=float, help="confidence-set level for loh/lohstar/min (default 0.01)")
    g.add_argument("--eta-list", type=_float_list, help="comma-separated etas for the mccloskey rule")
    g.add_argument("--rule", choices=[k.value for k in RuleKind])
    r = common.add_argument_group("gamma values")
    r.add_argument("--gamma", type=_float_list, help="explicit comma-separated gamma values")
    r.add_argument("--gamma-min", type=float)
    r.add_argument("--gamma-max", type=float)
    r.add_argument("--gamma-step", type=float)
    n = common.add_argument_group("numerics and output")
    n.add_argument("--mc", action="store_const", const=True, help="use Monte Carlo instead of the semi-analytic integral")
    n.add_argument("--reps", type=int, help="Monte Carlo replications per gamma")
    n.add_argument("--seed", type=int)
    n.add_argument("--workers", type=int, help="threads for Monte Carlo blocks")
    n.add_argument("--tol-quad", type=float, help="absolute quadrature tolerance")
    n.add_argument("--tol-quantile", type=float, help="quantile root tolerance")
    n.add_argument("--out", help="output file (CSV, or the report for verify)")
    n.add_argument("--svg", help="SVG chart path for size (default: --out with .svg suffix)")
    n.add_argument("--cache-dir", help=f"grid cache directory (default ${CACHE_ENV_VAR})")
    n.add_argument("--config", help="key=value settings file; flags take precedence")

    parser = argparse.ArgumentParser(prog="pmscrit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("critval", parents=[common], help="quantiles and rule critical values over gamma")
    sub.add_parser("size", parents=[common], help="size curve as CSV plus SVG chart")
    sub.add_parser("maxsize", parents=[common], help="maximal size of one rule with a level verdict")
    sub.add_parser("grid", parents=[common], help="build and persist quantile grids")
    v = sub.add_parser("verify", parents=[common], help="run the property checks")
    v.add_argument("--only", type=_int_list, help="comma-separated check numbers (1-13)")
    return parser


# ---------------------------------------------------------------- helpers

def _gammas(s) -> np.ndarray:
    if s["gamma"]:
        return np.asarray(s["gamma"], dtype=float)
    lo, hi, step = s["gamma_min"], s["gamma_max"], s["gamma_step"]
    if not step > 0 or hi < lo:
        raise UsageError("need gamma-step > 0 and gamma-max >= gamma-min")
    return lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1)


def _rule(s, kind: str) -> CriticalValueRule:
    kind = RuleKind(kind)
    delta = s["delta"]
    if kind is RuleKind.MCCLOSKEY:
        etas = s["eta_list"] or [s["eta"], 2 * s["eta"]]
        return CriticalValueRule.mccloskey(delta, etas)
    if kind in (RuleKind.LOH, RuleKind.LOH_STAR, RuleKind.MIN):
        return CriticalValueRule(kind, delta, (s["eta"],))
    return CriticalValueRule(kind, delta)


def _context(s) -> RuleContext:
    params = ModelParams(s["rho"], s["cutoff"])
    cache = GridCache(s["cache_dir"])
    return RuleContext(params, cache, quantile_tol=s["tol_quantile"], quad_tol=s["tol_quad"])


def _fmt(x) -> str:
    return f"{float(x):.10g}"


def _emit(text: str, path) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _tolerance_header(s) -> dict:
    return {"tol_quad": _fmt(s["tol_quad"]), "tol_quantile": _fmt(s["tol_quantile"])}


# ---------------------------------------------------------------- commands

def cmd_critval(s) -> int:
    """Quantile ``c_gamma(delta)`` and rule critical values at each gamma."""
    ctx = _context(s)
    gammas = _gammas(s)
    if s["rule"]:
        kinds = [s["rule"]]
    else:
        kinds = [k.value for k in RuleKind]
        if s["eta"] >= s["delta"]:
            kinds = [RuleKind.FIXED_SUP.value, RuleKind.BOOTSTRAP.value]
    rules = [_rule(s, k) for k in kinds]
    columns = {"gamma": gammas, "quantile": distribution.quantiles(ctx.params, gammas, s["delta"], tol=s["tol_quantile"])}
    for rule in rules:
        columns[rule.label] = np.broadcast_to(ctx.critical_value(rule, gammas), gammas.shape)
    buf = io.StringIO()
    meta = {"artifact": "pmscrit", "version": __version__, "kind": "critical-values",
            "rho": _fmt(ctx.params.rho), "cutoff": _fmt(ctx.params.cutoff), "delta": _fmt(s["delta"]),
            **_tolerance_header(s)}
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(columns))
    for i in range(gammas.size):
        writer.writerow([_fmt(col[i]) for col in columns.values()])
    _emit(buf.getvalue(), s["out"])
    if s["out"]:
        print(f"wrote {s['out']} ({gammas.size} rows)")
    return EXIT_OK


def cmd_size(s) -> int:
    ctx = _context(s)
    rule = _rule(s, s["rule"] or "bootstrap")
    method = "monte-carlo" if s["mc"] else "semi-analytic"
    curve = size_curve(rule, ctx.params, _gammas(s), ctx, method=method, reps=s["reps"],
                       seed=s["seed"], workers=s["workers"])
    text = write_size_csv(curve, extra_header=_tolerance_header(s))
    _emit(text, s["out"])
    svg = s["svg"] or (str(Path(s["out"]).with_suffix(".svg")) if s["out"] else None)
    if svg:
        size_curve_svg(curve, svg)
    if s["out"]:
        i = int(np.argmax(curve.rejection))
        print(f"wrote {s['out']}" + (f" and {svg}" if svg else ""))
        print(f"largest rejection {curve.rejection[i]:.8f} at gamma={curve.gammas[i]:g} (delta={rule.delta:g})")
    return EXIT_OK


def cmd_maxsize(s) -> int:
    ctx = _context(s)
    rule = _rule(s, s["rule"] or "bootstrap")
    gammas = _gammas(s) if (s["gamma"] or s["_explicit_range"]) else None
    rep = max_size(rule, ctx.params, ctx, gammas)
    print(f"rule={rule.label} rho={ctx.params.rho:g} cutoff={ctx.params.cutoff:g} delta={rule.delta:g}")
    print(f"max_size={rep.max_size:.10g} argmax_gamma={rep.argmax_gamma:.10g}")
    print(f"verdict={rep.level_verdict} margin={rep.margin:.4g} (excess over delta in units of the "
          f"{rep.error_budget:.1e} error budget)")
    for k, v in rep.details.items():
        print(f"{k}={v:.10g}")
    if s["out"]:
        write_size_csv(rep, s["out"], extra_header=_tolerance_header(s))
        print(f"wrote {s['out']}")
    return EXIT_OK


def cmd_grid(s) -> int:
    if not (s["cache_dir"] or GridCache().directory):
        raise UsageError(f"grid needs --cache-dir or ${CACHE_ENV_VAR}")
    ctx = _context(s)
    kinds = [s["rule"]] if s["rule"] else ["bootstrap", "loh"]
    for kind in kinds:
        ctx.grids_for(_rule(s, kind))
    for name, status in ctx.cache.events:
        print(f"{name} {status}")
    print(f"cache directory {ctx.cache.directory}")
    return EXIT_OK


def cmd_verify(s) -> int:
    cfg = VerifyConfig(rho=s["rho"], cutoff=s["cutoff"], delta=s["delta"], eta=s["eta"], seed=s["seed"] or 20140515,
                       cache=GridCache(s["cache_dir"]), workers=s["workers"])
    lines = []

    def show(res):
        lines.append(res.line())
        print(res.line(), flush=True)

    results = run_all(cfg, only=set(s["only"]) if s["only"] else None, progress=show)
    failed = [r for r in results if r.verdict == "FAIL"]
    summary = f"{len(results) - len(failed)}/{len(results)} checks passed or skipped"
    print(summary)
    if s["out"]:
        Path(s["out"]).write_text("\n".join(lines + [summary]) + "\n")
    return EXIT_VERIFY if failed else EXIT_OK


_NUMERIC_VALUE = re.compile(r"^-[\d.]")


def _bind_negative_values(argv):
    # argparse mistakes "-2,1" for an option; attach such values to the preceding flag.
    out = []
    for arg in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NUMERIC_VALUE.match(arg) \
                and out[-1] not in ("--mc",):
            out[-1] = f"{out[-1]}={arg}"
        else:
            out.append(arg)
    return out


COMMANDS = {"critval": cmd_critval, "size": cmd_size, "maxsize": cmd_maxsize, "grid": cmd_grid, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(_bind_negative_values(sys.argv[1:] if argv is None else list(argv)))
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        settings = resolve_settings(ns)
        return COMMANDS[ns.command](settings)
    except (UsageError, DomainError, RangeError) as exc:
        print(f"pmscrit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, BracketError) as exc:
        print(f"pmscrit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"pmscrit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PMSError as exc:
        print(f"pmscrit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
