"""Text formats for instances and jets.

Instance files are sectioned::

    [PHI]
    D(y) - 2*x*D(x)*y = 0
    [H]
    order: 1
    variables: x y
    constants:
    ell: 1
    family: y 0
      witnesses: z
      params: x
      eq: y - E(z)
      eq: -x^2 + z
    [PHISTARH]
    eq: ...
    neq: ...
    [TOLERANCE]
    eps_res: 1e-06

Jets are ``var:order=value`` lines, optionally preceded by a backend header
(``backend=real`` or ``p=<p> N=<N>``).  Floats are written with ``repr`` so
reading back is bit-exact.
"""

from __future__ import annotations

from typing import Dict, List, Optional

from .backends import Jet, PadicBackend, RealBackend, ToleranceSpec, make_backend
from .dle import DLEInstance, build_khovanskii_formula, build_phi_star_H
from .epoly import VarId
from .errors import ShapeError
from .terms import format_epoly, parse_epoly, parse_formula, print_formula

_TOL_FIELDS = ("eps_res", "eps_reg", "radius", "res_min_val", "reg_max_val", "nbhd_min_val")


def _sections(text: str) -> Dict[str, List[str]]:
    out: Dict[str, List[str]] = {}
    cur = None
    for raw in text.splitlines():
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            cur = line[1:-1].strip().upper()
            if cur in out:
                raise ShapeError(f"duplicate section [{cur}]")
            out[cur] = []
            continue
        if cur is None:
            raise ShapeError(f"content outside any section: {line!r}")
        out[cur].append(line)
    return out


def _kv(line: str):
    key, sep, val = line.strip().partition(":")
    if not sep:
        raise ShapeError(f"expected 'key: value', got {line!r}")
    return key.strip(), val.strip()


def write_tolerance(tol: ToleranceSpec) -> List[str]:
    lines = []
    for name in _TOL_FIELDS:
        val = getattr(tol, name)
        lines.append(f"{name}: {'none' if val is None else repr(val)}")
    return lines


def read_tolerance(lines: List[str]) -> ToleranceSpec:
    kw = {}
    for line in lines:
        key, val = _kv(line)
        if key not in _TOL_FIELDS:
            raise ShapeError(f"unknown tolerance field {key!r}")
        if val.lower() == "none":
            kw[key] = None
        elif key in ("eps_res", "eps_reg", "radius"):
            kw[key] = float(val)
        else:
            kw[key] = int(val)
    return ToleranceSpec(**kw)


def write_instance(inst: DLEInstance, include_core: bool = True) -> str:
    H = inst.H
    out = ["[PHI]", print_formula(inst.phi), "[H]",
           f"order: {H.order}",
           f"variables: {' '.join(H.variables)}",
           f"constants: {' '.join(H.constants)}".rstrip(),
           f"ell: {' '.join(str(e) for e in H.ells)}".rstrip()]
    for fam in H.families:
        out.append(f"family: {fam.var} {fam.level}")
        out.append(f"  witnesses: {' '.join(fam.witnesses)}".rstrip())
        out.append(f"  params: {' '.join(p.name for p in fam.system.parameters)}".rstrip())
        for f in fam.system.polys:
            out.append(f"  eq: {format_epoly(f)}")
    if include_core:
        out.append("[PHISTARH]")
        out += [f"eq: {format_epoly(q)}" for q in inst.equations]
        out.append(f"neq: {format_epoly(inst.inequation)}")
    out.append("[TOLERANCE]")
    out += write_tolerance(inst.tolerance)
    return "\n".join(out) + "\n"


def read_instance(text: str) -> DLEInstance:
    secs = _sections(text)
    for need in ("PHI", "H"):
        if need not in secs:
            raise ShapeError(f"instance lacks a [{need}] section")
    unknown = set(secs) - {"PHI", "H", "PHISTARH", "TOLERANCE"}
    if unknown:
        raise ShapeError(f"unknown sections {sorted(unknown)}")
    phi = parse_formula(" & ".join(line.strip() for line in secs["PHI"]))
    head = {}
    families = []
    for line in secs["H"]:
        key, val = _kv(line)
        if key == "family":
            parts = val.split()
            if len(parts) != 2:
                raise ShapeError(f"family line needs 'var level', got {val!r}")
            families.append([parts[0], int(parts[1]), [], [], []])
        elif line.startswith((" ", "\t")) and families:
            fam = families[-1]
            if key == "witnesses":
                fam[2] = val.split()
            elif key == "params":
                fam[4] = val.split()
            elif key == "eq":
                fam[3].append(val)
            else:
                raise ShapeError(f"unknown family field {key!r}")
        else:
            head[key] = val
    try:
        order = int(head["order"])
        variables = head["variables"].split()
    except KeyError as exc:
        raise ShapeError(f"[H] lacks {exc.args[0]!r}") from None
    H = build_khovanskii_formula(
        order, variables,
        [int(e) for e in head.get("ell", "").split()],
        head.get("constants", "").split(),
        [tuple(f) for f in families],
    )
    tol = read_tolerance(secs.get("TOLERANCE", []))
    inst = build_phi_star_H(phi, H, tolerance=tol)
    if "PHISTARH" in secs:
        eqs, neqs = [], []
        for line in secs["PHISTARH"]:
            key, val = _kv(line)
            if key == "eq":
                eqs.append(parse_epoly(val))
            elif key == "neq":
                neqs.append(parse_epoly(val))
            else:
                raise ShapeError(f"unknown [PHISTARH] field {key!r}")
        if tuple(eqs) != inst.equations or neqs != [inst.inequation]:
            raise ShapeError("[PHISTARH] does not match the system built from [PHI] and [H]")
    return inst


def write_jet(jet, backend=None) -> str:
    backend = backend or RealBackend()
    lines = [backend.header()]
    for v in sorted(jet, key=lambda v: (v.base, v.order)):
        lines.append(f"{v.base}:{v.order}={backend.format(jet[v])}")
    return "\n".join(lines) + "\n"


def read_jet(text: str, backend=None):
    """Parse a jet file; returns (jet, backend).  A header picks the backend."""
    vals = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("backend="):
            kind = line.split("=", 1)[1].strip()
            if kind != "real":
                raise ShapeError(f"unknown backend {kind!r}")
            backend = backend if isinstance(backend, RealBackend) else RealBackend()
            continue
        if line.startswith("p="):
            fields = dict(part.split("=", 1) for part in line.split())
            p, N = int(fields["p"]), int(fields["N"])
            if not (isinstance(backend, PadicBackend) and (backend.p, backend.N) == (p, N)):
                backend = PadicBackend(p, N, getattr(backend, "tol", None))
            continue
        lhs, sep, rhs = line.partition("=")
        base, sep2, order = lhs.partition(":")
        if not sep or not sep2 or not order.strip().isdigit():
            raise ShapeError(f"malformed jet line {line!r}")
        backend = backend or RealBackend()
        vals[VarId(base.strip(), int(order))] = backend.parse(rhs)
    backend = backend or RealBackend()
    return Jet(vals), backend
