"""whquant command line: batch subcommands with reproducible CSV output.

Exit codes: 0 success, 1 usage error, 2 a verify check out of tolerance,
3 unsupported combination.
"""
from __future__ import annotations

import argparse
import io
import logging
import os
import sys
import warnings

import numpy as np

from . import _accel
from .coeffs import RepresentationError, tables_for
from .fock import DimensionError, FockOperator, _fmt, basis, operator_from_csv, operator_to_csv
from .portraits import AccuracyWarning, duality_check, lower_symbol, povm_diagnostic, wigner_map
from .quantizer import (
    PIPELINES,
    DegreeCapError,
    DivergenceRiskError,
    build_m,
    quantize,
    quantize_grid,
    quantize_poly_qp,
    quantize_poly_z,
    kernel_pipeline,
)
from .sft import DistributionalKindError, GridError, cartesian_grid, field_to_csv
from .star import star
from .symbols import Poly2, SeparableLqPm, SymbolSyntaxError, parse_poly, parse_symbol
from .weights import MissingTaylorError, UnsupportedWeightError, parse_weight

log = logging.getLogger("whquant")

EXIT_OK, EXIT_USAGE, EXIT_CONTRACT, EXIT_UNSUPPORTED = 0, 1, 2, 3

_UNSUPPORTED = (DivergenceRiskError, DistributionalKindError, MissingTaylorError, RepresentationError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_threads():
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _weight(text):
    try:
        return parse_weight(text)
    except UnsupportedWeightError as e:
        raise UsageError(str(e)) from None


def _symbol(text):
    try:
        return parse_symbol(text)
    except SymbolSyntaxError as e:
        raise UsageError(f"symbol: {e}") from None


def _poly(text):
    f = _symbol(text)
    if not isinstance(f, Poly2):
        raise UsageError(f"symbol {text!r} must be a polynomial")
    return f


def _emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
        log.info("wrote %s", out)


def _resolved_pipeline(w, f, pipeline):
    if pipeline != "auto":
        return pipeline
    if isinstance(f, SeparableLqPm) and (w.kind == "gauss" or w.kind == "ww" or (w.kind == "cg" and w.s == 0)):
        return "separable"
    return "poly-qp" if isinstance(f, Poly2) and w.analytic else "quad"


# ---------------------------------------------------------------- commands


def cmd_quantize(a):
    w, f = _weight(a.weight), _symbol(a.symbol)
    path = _resolved_pipeline(w, f, a.pipeline)
    log.info("pipeline %s for weight %s", path, w.label)
    A = quantize(w, f, a.dim, pipeline=path, regularize=a.regularize)
    if A.meta.get("regularized"):
        log.info("regularized; damping trend %.3g", A.meta.get("damping_trend", 0.0))
    _emit(operator_to_csv(A), a.out)
    return EXIT_OK


def cmd_mop(a):
    w = _weight(a.weight)
    M = build_m(w, a.dim, regularize=a.regularize)
    _emit(operator_to_csv(M), a.out)
    return EXIT_OK


def cmd_coeffs(a):
    w = _weight(a.weight)
    tab = tables_for(w, a.order, a.rep)
    fam = {"c": tab.c, "ctilde": tab.ct, "d": tab.d, "dtilde": tab.dt, "a": tab.a, "atilde": tab.at}[a.family]
    buf = io.StringIO()
    buf.write(f"# coeffs weight={a.weight} family={a.family} order={a.order} rep={a.rep}\n")
    for key, v in fam.items():
        idx = ",".join(str(k) for k in key)
        buf.write(f"{idx},{_fmt(v.real)},{_fmt(v.imag)}\n")
    _emit(buf.getvalue(), a.out)
    return EXIT_OK


def cmd_star(a):
    w = _weight(a.weight)
    f, g = _poly(a.f), _poly(a.g)
    rep = a.rep or ("z" if f.rep == "z" and g.rep == "z" else "qp")
    res = star(w, f.to(rep), g.to(rep), a.order).result
    buf = io.StringIO()
    buf.write(f"# star weight={a.weight} rep={rep} order={a.order if a.order is not None else f.degree() + g.degree()}\n")
    for (m, n), v in sorted(res.terms.items()):
        buf.write(f"{m},{n},{_fmt(v.real)},{_fmt(v.imag)}\n")
    _emit(buf.getvalue(), a.out)
    return EXIT_OK


def _grid_arg(text):
    try:
        L, M = text.split(",")
        return float(L), int(M)
    except ValueError:
        raise UsageError(f"--grid expects L,M, got {text!r}") from None


def cmd_portrait(a):
    L, M = _grid_arg(a.grid)
    try:
        with open(a.op) as fh:
            A = operator_from_csv(fh.read())
    except OSError as e:
        raise UsageError(f"cannot read {a.op}: {e.strerror}") from None
    except ValueError as e:
        raise UsageError(f"{a.op}: {e}") from None
    grid = cartesian_grid(L, M)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AccuracyWarning)
        if a.kind == "wigner":
            fld = wigner_map(A, grid, regularize=a.regularize)
        else:
            if not a.weight:
                raise UsageError("--kind lower needs --weight")
            fld = lower_symbol(_weight(a.weight), A, grid, regularize=a.regularize)
    for c in caught:
        log.warning("%s", c.message)
    log.info("portrait %s", fld.label)
    _emit(field_to_csv(fld), a.out)
    return EXIT_OK


# ---------------------------------------------------------------- verify

_SUITE_WEIGHTS = {
    "ccr": ("ww", "cg:-1", "cg:-0.5", "cg:0.3", "bj", "gauss:1,2"),
    "resolution": ("cg:-1", "cg:-0.5", "gauss:1,2", "ww"),
    "povm": ("cg:-2", "cg:-1", "ww"),
    "duality": ("ww", "cg:-1", "gauss:1,2"),
    "pipelines": ("cg:-0.5",),
}
_PIPE_SYMBOLS = ("q", "p", "q^2", "p^2", "q*p", "q^2*p^2")


def _check_ccr(w, dim):
    q, p = Poly2.mono(1, 0, rep="qp"), Poly2.mono(0, 1, rep="qp")
    Aq, Ap = quantize_poly_qp(w, q, 2 * dim).mat, quantize_poly_qp(w, p, 2 * dim).mat
    n = dim // 2
    C = (Aq @ Ap - Ap @ Aq)[:n, :n]
    return [("[A_q,A_p]=i", float(np.abs(C - 1j * np.eye(n)).max()), 1e-10)]


def _check_resolution(w, dim):
    one = quantize_grid(w, Poly2.const(1.0), dim, regularize=True).mat
    n = dim // 2
    return [("A_1=I", float(np.abs(one[:n, :n] - np.eye(n)).max()), 1e-8)]


def _check_povm(w, dim):
    rep = povm_diagnostic(w, dim)
    verdict = "positive" if rep.positive else "not-positive"
    return [(f"resolution({verdict})", rep.resolution_residual, 1e-8)]


def _check_duality(w, dim):
    out = []
    grid = cartesian_grid(6.0, 128)
    e0, e1 = basis(0, dim).projector(), basis(1, dim).projector()
    cases = [("1", e1), ("q^2", e0), ("z*zbar", e0), ("q*p", e1)]
    for text, A in cases:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AccuracyWarning)
            _, _, res = duality_check(w, parse_poly(text), A, grid, regularize=not w.decaying)
        out.append((f"duality f={text}", float(res), 1e-5))
    return out


def _check_pipelines(w, dim):
    out = []
    n = dim // 2
    routes = {
        "quad": lambda f: quantize_grid(w, f, dim, regularize=True),
        "poly-z": lambda f: quantize_poly_z(w, f.to("z"), dim),
        "poly-qp": lambda f: quantize_poly_qp(w, f, dim),
        "kernel": lambda f: kernel_pipeline(w, f, dim),
    }
    for text in _PIPE_SYMBOLS:
        f = parse_poly(text, "qp")
        mats = {}
        for name, fn in routes.items():
            try:
                mats[name] = fn(f).mat[:n, :n]
            except _UNSUPPORTED + (UnsupportedWeightError, TypeError) as e:
                log.info("pipeline %s skipped for %s: %s", name, w.label, e)
        names = sorted(mats)
        worst = max((float(np.abs(mats[x] - mats[y]).max()) for i, x in enumerate(names) for y in names[i + 1 :]),
                    default=0.0)
        out.append((f"agree f={text} [{'/'.join(names)}]", worst, 1e-5))
    return out


_SUITES = {
    "ccr": _check_ccr,
    "resolution": _check_resolution,
    "povm": _check_povm,
    "duality": _check_duality,
    "pipelines": _check_pipelines,
}


def cmd_verify(a):
    suites = [s.strip() for s in a.suite.split(",") if s.strip()]
    for s in suites:
        if s not in _SUITES:
            raise UsageError(f"unknown suite {s!r}; expected one of {','.join(_SUITES)}")
    rows = []
    for s in suites:
        weights = [a.weight] if a.weight else list(_SUITE_WEIGHTS[s])
        for wt in weights:
            w = _weight(wt)
            for check, value, tol in _SUITES[s](w, a.dim):
                rows.append((s, wt, check, value, tol, value < tol))
    buf = io.StringIO()
    buf.write("suite,weight,check,value,tol,result\n")
    for s, wt, check, value, tol, ok in rows:
        buf.write(f"{s},{wt},{check},{value:.3e},{tol:.0e},{'PASS' if ok else 'FAIL'}\n")
    _emit(buf.getvalue(), a.out)
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_CONTRACT


# ---------------------------------------------------------------- parser


def build_parser():
    p = _Parser(prog="whquant", description="Weyl-Heisenberg integral quantization with arbitrary weights.")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: available cores)")
    p.add_argument("-v", "--verbose", action="store_true", help="log at debug level")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    q = sub.add_parser("quantize", help="Fock matrix of a symbol")
    q.add_argument("--weight", required=True)
    q.add_argument("--symbol", required=True)
    q.add_argument("--dim", type=int, required=True)
    q.add_argument("--pipeline", default="auto", choices=PIPELINES)
    q.add_argument("--regularize", action="store_true", help="allow the damped schedule for non-decaying weights")
    q.add_argument("--out")
    q.set_defaults(func=cmd_quantize)

    m = sub.add_parser("mop", help="the operator M of a weight")
    m.add_argument("--weight", required=True)
    m.add_argument("--dim", type=int, required=True)
    m.add_argument("--regularize", action="store_true")
    m.add_argument("--out")
    m.set_defaults(func=cmd_mop)

    c = sub.add_parser("coeffs", help="coefficient tables")
    c.add_argument("--weight", required=True)
    c.add_argument("--order", type=int, required=True)
    c.add_argument("--family", required=True, choices=("c", "ctilde", "d", "dtilde", "a", "atilde"))
    c.add_argument("--rep", default="z", choices=("z", "qp"))
    c.add_argument("--out")
    c.set_defaults(func=cmd_coeffs)

    s = sub.add_parser("star", help="star product of two polynomials")
    s.add_argument("--weight", required=True)
    s.add_argument("--f", required=True)
    s.add_argument("--g", required=True)
    s.add_argument("--order", type=int, default=None)
    s.add_argument("--rep", choices=("z", "qp"), default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_star)

    r = sub.add_parser("portrait", help="lower symbol or Wigner function of an operator")
    r.add_argument("--weight")
    r.add_argument("--op", required=True)
    r.add_argument("--grid", default="6,128", help="L,M of the cartesian grid")
    r.add_argument("--kind", default="lower", choices=("lower", "wigner"))
    r.add_argument("--regularize", action="store_true")
    r.add_argument("--out")
    r.set_defaults(func=cmd_portrait)

    v = sub.add_parser("verify", help="run check suites and print a pass/fail table")
    v.add_argument("--suite", required=True, help=",".join(_SUITES))
    v.add_argument("--weight")
    v.add_argument("--dim", type=int, default=32)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("whquant: a subcommand is required")
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="whquant: %(levelname)s %(message)s", force=True)
    _accel.set_threads(args.threads or _default_threads())
    try:
        return args.func(args)
    except UsageError as e:
        log.error("%s", e)
        return EXIT_USAGE
    except _UNSUPPORTED + (UnsupportedWeightError,) as e:
        log.error("unsupported combination: %s", e)
        return EXIT_UNSUPPORTED
    except (DegreeCapError, DimensionError, GridError, TypeError, ValueError) as e:
        log.error("%s", e)
        return EXIT_USAGE


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
