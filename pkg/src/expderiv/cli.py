"""``expderiv`` command-line front end.

Every subcommand prints ``key=value`` lines (or one JSON object with
``--json``).  Exit status: 0 success, 1 a verification verdict failed,
2 bad input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional, Sequence

from . import __version__
from .backends import Jet, PadicBackend, Point, RealBackend, ToleranceSpec, make_backend
from .differential import (
    jacobian,
    jacobian_det,
    khovanskii_build,
    partial_derivative,
    delta_shift,
    propagate_symbolic,
    solve_dependent_jet,
    torsor_member,
)
from .dle import build_phi_star_H, demo_catalog, jet_search, render_instance
from .epoly import VarId, height, ord as ord_of
from .errors import (
    DomainError,
    ExpDerivError,
    HenselConditionFailed,
    InfeasibleTarget,
    NoConvergence,
    SingularJacobian,
)
from .fileio import read_instance, read_jet, write_instance, write_jet
from .solvers import hensel_solve, khovanskii_check, newton_solve
from .terms import (
    delta_normalize,
    format_epoly,
    parse_epoly,
    parse_term,
    print_term,
    star_transform,
    term_to_epoly,
)

# solver outcomes that count as a failed verdict rather than bad input
_VERDICT_ERRORS = (SingularJacobian, NoConvergence, HenselConditionFailed, InfeasibleTarget)


class InputError(Exception):
    pass


class Report:
    def __init__(self):
        self.items = []
        self.ok = True

    def add(self, key, value):
        self.items.append((key, _fmt(value)))

    def emit(self, as_json: bool, stream):
        if as_json:
            stream.write(json.dumps(dict(self.items), indent=2) + "\n")
        else:
            for k, v in self.items:
                stream.write(f"{k}={v}\n")


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# -- argument helpers --------------------------------------------------------

def _text_arg(args, attr="expr"):
    val = getattr(args, attr, None)
    if val is None and args.infile:
        with open(args.infile) as fh:
            val = fh.read().strip()
    if val is None:
        raise InputError(f"missing {attr} (inline or via --in)")
    return val


def _system(args) -> list:
    text = args.system or _text_arg(args)
    parts = [p.strip() for p in text.replace("\n", ";").split(";")]
    return [parse_epoly(p) for p in parts if p]


def _names(text) -> List[VarId]:
    if not text:
        return []
    return [VarId.from_name(t.strip()) for t in text.replace(" ", ",").split(",") if t.strip()]


def _first_appearance(polys) -> List[VarId]:
    seen = []
    for p in polys:
        for v in sorted(p.variables(), key=lambda v: (v.order, v.base)):
            if v not in seen:
                seen.append(v)
    return seen


def _assignments(items, backend) -> dict:
    out = {}
    for item in items or []:
        for chunk in item.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            lhs, sep, rhs = chunk.partition("=")
            if not sep:
                raise InputError(f"expected name=value, got {chunk!r}")
            lhs = lhs.strip()
            if ":" in lhs:
                base, order = lhs.split(":", 1)
                key = VarId(base, int(order))
            else:
                key = VarId.from_name(lhs)
            out[key] = backend.parse(rhs)
    return out


def _backend(args):
    tol = ToleranceSpec().with_(eps_res=args.eps_res, eps_reg=args.eps_reg, radius=args.radius)
    # --p alone selects the p-adic backend
    kind = args.backend or ("padic" if args.p is not None else "real")
    if kind == "padic":
        if args.p is None:
            raise InputError("--backend padic needs --p")
        return PadicBackend(args.p, args.precision or 20, tol)
    return RealBackend(tol)


def _unknowns(args, polys):
    unk = _names(args.unknowns)
    if not unk:
        unk = _first_appearance(polys)[: len(polys)]
    params = _names(getattr(args, "params", None))
    if not params:
        params = [v for v in _first_appearance(polys) if v not in unk]
    return unk, params


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("EXPDERIV_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"EXPDERIV_SEED is not an integer: {env!r}") from None
    return 0


def _add_backend(rep, b):
    rep.add("backend", b.name)
    if isinstance(b, PadicBackend):
        rep.add("p", b.p)
        rep.add("N", b.N)


# -- subcommands ---------------------------------------------------------------

def cmd_normalize(args, rep):
    t = delta_normalize(parse_term(_text_arg(args)))
    rep.add("term", print_term(t))
    rep.add("epoly", format_epoly(term_to_epoly(t)))


def cmd_ord(args, rep):
    p = parse_epoly(_text_arg(args))
    rep.add("ord", ord_of(p))
    rep.add("height", height(p))


def cmd_diff(args, rep):
    p = parse_epoly(_text_arg(args))
    v = VarId.from_name(args.var)
    rep.add("result", format_epoly(partial_derivative(p, v)))


def cmd_delta_shift(args, rep):
    rep.add("result", format_epoly(delta_shift(parse_epoly(_text_arg(args)))))


def cmd_jacobian(args, rep):
    fs = _system(args)
    vs = _names(args.vars) or _first_appearance(fs)
    J = jacobian(fs, vs)
    for i, row in enumerate(J):
        for j, e in enumerate(row):
            rep.add(f"J[{i}][{j}]", format_epoly(e))
    if len(fs) == len(vs):
        rep.add("det", format_epoly(jacobian_det(fs, vs)))


def cmd_khov_build(args, rep):
    fs = _system(args)
    unk, params = _unknowns(args, fs)
    H = khovanskii_build(fs, unk, params)
    rep.add("n", H.n)
    rep.add("unknowns", ",".join(v.name for v in H.unknowns))
    rep.add("parameters", ",".join(v.name for v in H.parameters))
    rep.add("det", format_epoly(H.jac_det))


def cmd_khov_check(args, rep):
    b = _backend(args)
    fs = _system(args)
    unk, params = _unknowns(args, fs)
    H = khovanskii_build(fs, unk, params)
    pt = _assignments(args.point, b)
    r = khovanskii_check(H, pt, b)
    _add_backend(rep, b)
    for i, x in enumerate(r.values):
        rep.add(f"residual[{i}]", b.format(x))
    rep.add("det", b.format(r.det))
    rep.add("regular", r.regular)
    rep.add("dim_bound", r.dim_bound)
    rep.add("verdict", r.verdict)
    rep.ok = r.verdict


def cmd_propagate(args, rep):
    b = _backend(args)
    fs = _system(args)
    unk, params = _unknowns(args, fs)
    H = khovanskii_build(fs, unk, params)
    levels = propagate_symbolic(H, args.levels)
    vals = _assignments(args.point, b)
    vals.update(_assignments(args.jet, b))
    for k, level in enumerate(levels, start=1):
        for u, t in zip(unk, level):
            rep.add(f"{u.succ(k).name}", f"({format_epoly(t.num)}) / ({format_epoly(t.den)})")
            if vals:
                rep.add(f"{u.succ(k).name}.value", b.format(t.evaluate(b, vals)))


def cmd_torsor(args, rep):
    b = _backend(args)
    fs = _system(args)
    pt = _assignments(args.point, b)
    tangent = _assignments(args.tangent, b)
    jet = _assignments(args.jet, b)
    member, res, values = torsor_member(fs, pt, tangent, jet, b)
    for i, x in enumerate(res):
        rep.add(f"residual[{i}]", b.format(x))
    rep.add("member", member)
    rep.ok = member


def cmd_solve_jet(args, rep):
    b = _backend(args)
    fs = _system(args)
    pt = _assignments(args.point, b)
    free = _assignments(args.free, b)
    dep = _names(args.dependent)
    jet = _assignments(args.jet, b)
    sol = solve_dependent_jet(fs, pt, free, dep, jet, b)
    for v in dep:
        rep.add(f"b[{v.name}]", b.format(sol[v]))
    member, res, _ = torsor_member(fs, pt, {**free, **sol}, jet, b)
    rep.add("max_residual", max((b.size(x) for x in res), default=0.0))


def _solve_report(args, rep, b, solver):
    fs = _system(args)
    unk, params = _unknowns(args, fs)
    pt = _assignments(args.point, b)
    sol = solver(fs, unk, params, pt)
    for v in unk:
        rep.add(v.name, b.format(sol[v]))
    for i, f in enumerate(fs):
        rep.add(f"residual[{i}]", b.format(b.eval(f, sol)))


def cmd_newton(args, rep):
    b = _backend(args)
    if not isinstance(b, RealBackend):
        raise InputError("newton runs over the real backend; use hensel for p-adics")
    _solve_report(args, rep, b, lambda fs, u, p, pt: newton_solve(fs, u, p, pt, tol=args.tol, backend=b))


def cmd_hensel(args, rep):
    b = _backend(args)
    if not isinstance(b, PadicBackend):
        raise InputError("hensel needs the p-adic backend (--p P)")
    _add_backend(rep, b)
    _solve_report(args, rep, b, lambda fs, u, p, pt: hensel_solve(fs, u, p, pt, b))


def cmd_star(args, rep):
    s = star_transform(_text_arg(args, "formula"))
    rep.add("order", s.order)
    rep.add("variables", ",".join(s.variables))
    for i, q in enumerate(s.equations):
        rep.add(f"eq[{i}]", format_epoly(q))
    for i, q in enumerate(s.inequations):
        rep.add(f"neq[{i}]", format_epoly(q))


def _load_instance(args):
    if getattr(args, "demo", None):
        for name, inst, target in demo_catalog():
            if name == args.demo:
                return inst, target
        raise InputError(f"unknown demo {args.demo!r}")
    if not args.infile:
        raise InputError("need --in FILE or --demo NAME")
    with open(args.infile) as fh:
        return read_instance(fh.read()), None


def _write_out(args, text, rep, key):
    if args.outfile:
        with open(args.outfile, "w") as fh:
            fh.write(text)
        rep.add(key, args.outfile)
        return False
    return True


def cmd_dle_build(args, rep):
    inst, _ = _load_instance(args)
    text = write_instance(inst)
    rep.add("equations", len(inst.equations))
    rep.add("inequation", format_epoly(inst.inequation))
    if _write_out(args, text, rep, "written"):
        rep.add("instance", json.dumps(text))


def cmd_dle_render(args, rep):
    inst, _ = _load_instance(args)
    text = render_instance(inst)
    if _write_out(args, text, rep, "written"):
        rep.add("render", json.dumps(text))


def cmd_dle_solve(args, rep):
    inst, target = _load_instance(args)
    b = None
    if args.target:
        with open(args.target) as fh:
            target, b = read_jet(fh.read())
    if target is None:
        raise InputError("need --target JETFILE")
    explicit = args.backend == "padic" or (args.backend is None and args.p is not None)
    if explicit or isinstance(b, PadicBackend):
        b = _backend(args) if explicit else b
    else:
        b = RealBackend(inst.tolerance.with_(eps_res=args.eps_res, eps_reg=args.eps_reg, radius=args.radius))
    seed = _seed(args)
    rep.add("seed", seed)
    sol = jet_search(inst, target, b, seed=seed)
    for v in sorted(sol.jet, key=lambda v: (v.base, v.order)):
        rep.add(f"{v.base}:{v.order}", b.format(sol.jet[v]))
    for v in sorted(sol.witnesses, key=lambda v: (v.base, v.order)):
        rep.add(f"witness.{v.base}:{v.order}", b.format(sol.witnesses[v]))
    rep.add("max_residual", b.format(max((b.size(r) for r in sol.residuals), default=0.0)))
    rep.add("max_distance", repr(max(sol.distances.values(), default=0.0)))
    rep.add("success", sol.success)
    rep.ok = sol.success
    if args.outfile:
        with open(args.outfile, "w") as fh:
            fh.write(write_jet(sol.jet, b))


def cmd_eval(args, rep):
    b = _backend(args)
    p = parse_epoly(_text_arg(args))
    pt = _assignments(args.point, b)
    rep.add("value", b.format(b.eval(p, pt)))


COMMANDS = {
    "normalize": (cmd_normalize, "delta-normalize a term", ["expr"]),
    "ord": (cmd_ord, "ordinal complexity of an E-polynomial", ["expr"]),
    "diff": (cmd_diff, "partial derivative along --var", ["expr", "var"]),
    "delta-shift": (cmd_delta_shift, "total delta-lift", ["expr"]),
    "jacobian": (cmd_jacobian, "symbolic Jacobian and determinant", ["system", "vars"]),
    "khov-build": (cmd_khov_build, "build a Khovanskii system", ["system", "unknowns", "params"]),
    "khov-check": (cmd_khov_check, "check a Khovanskii system at a point", ["system", "unknowns", "params", "point"]),
    "propagate": (cmd_propagate, "propagated derivatives of the unknowns", ["system", "unknowns", "params", "point", "jet", "levels"]),
    "torsor": (cmd_torsor, "torsor residuals of a tangent", ["system", "point", "tangent", "jet"]),
    "solve-jet": (cmd_solve_jet, "dependent tangent solve", ["system", "point", "free", "dependent", "jet"]),
    "newton": (cmd_newton, "real Newton solve", ["system", "unknowns", "params", "point", "tol"]),
    "hensel": (cmd_hensel, "p-adic Hensel lift", ["system", "unknowns", "params", "point"]),
    "star": (cmd_star, "star transform of a formula", ["formula"]),
    "dle-build": (cmd_dle_build, "build an instance file", ["demo"]),
    "dle-render": (cmd_dle_render, "render an instance", ["demo"]),
    "dle-solve": (cmd_dle_solve, "search for a jet near a target", ["demo", "target"]),
    "eval": (cmd_eval, "evaluate an E-polynomial", ["expr", "point"]),
}

_ARG_SPECS = {
    "expr": (("expr",), dict(nargs="?", help="term text")),
    "formula": (("formula",), dict(nargs="?", help="formula text")),
    "var": (("--var",), dict(required=True)),
    "system": (("--system",), dict(help="';'-separated E-polynomials")),
    "vars": (("--vars",), dict()),
    "unknowns": (("--unknowns",), dict()),
    "params": (("--params",), dict()),
    "point": (("--point",), dict(action="append", help="name=value[,name=value]")),
    "jet": (("--jet",), dict(action="append", help="parameter jet, name:order=value")),
    "tangent": (("--tangent",), dict(action="append")),
    "free": (("--free",), dict(action="append")),
    "dependent": (("--dependent",), dict(required=True)),
    "levels": (("--levels",), dict(type=int, default=1)),
    "tol": (("--tol",), dict(type=float, default=1e-12)),
    "demo": (("--demo",), dict(help="use a catalogued demo instance")),
    "target": (("--target",), dict(help="target jet file")),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--backend", choices=("real", "padic"))
    common.add_argument("--p", type=int)
    common.add_argument("--precision", type=int)
    common.add_argument("--eps-res", type=float)
    common.add_argument("--eps-reg", type=float)
    common.add_argument("--radius", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--json", action="store_true")
    common.add_argument("--in", dest="infile")
    common.add_argument("--out", dest="outfile")
    parser = argparse.ArgumentParser(prog="expderiv", description="Exponential polynomials with E-derivations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_, specs) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_)
        for key in specs:
            flags, kw = _ARG_SPECS[key]
            sp.add_argument(*flags, **kw)
    return parser


def run(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else 2
    rep = Report()
    func = COMMANDS[args.command][0]
    try:
        if args.p is not None:
            PadicBackend(args.p, args.precision or 20)  # validates p and N
        for name in ("eps_res", "eps_reg", "radius"):
            val = getattr(args, name)
            if val is not None and not val > 0:
                raise InputError(f"--{name.replace('_', '-')} must be positive")
        func(args, rep)
    except _VERDICT_ERRORS as exc:
        rep.add("verdict", False)
        rep.add("error", f"{type(exc).__name__}: {exc}")
        rep.emit(args.json, stdout)
        return 1
    except (InputError, ExpDerivError, ValueError, KeyError, OSError, ZeroDivisionError, OverflowError) as exc:
        stderr.write(f"expderiv {args.command}: {type(exc).__name__}: {exc}\n")
        return 2
    rep.emit(args.json, stdout)
    return 0 if rep.ok else 1


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
