"""Khovanskii formulas, the cleared starred systems they induce, and jet search.

A :class:`KhovanskiiFormula` of order m over variables x_1..x_n fixes a
non-increasing vector ell_0 >= ... >= ell_{m-1}.  At level i the first
ell_i variables are free and each later x_j carries a Khovanskii system
in the unknown (x_j, i) plus private witness variables (w, i).  Building an
instance adjoins, for every family unknown u, the clause
``det * succ(u) - num = 0`` where num/det is the first propagated
derivative of u, and collects all determinants into one inequation.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .backends import Jet, PadicBackend, Point, RealBackend, ToleranceSpec
from .differential import KhovanskiiSystem, jacobian, khovanskii_build, propagate_symbolic
from .epoly import EPoly, ONE, VarId
from .errors import (
    ExpDerivError,
    InfeasibleTarget,
    NoConvergence,
    ShapeError,
    SingularJacobian,
)
from .solvers import hensel_solve, neighborhood_check, newton_solve, propagate_numeric
from .terms import Atom, Formula, StarSystem, epoly_to_term, parse_formula, print_formula, star_transform


@dataclass(frozen=True)
class Family:
    var: str
    level: int
    witnesses: Tuple[str, ...]
    system: KhovanskiiSystem

    @property
    def unknowns(self):
        return self.system.unknowns


@dataclass(frozen=True)
class KhovanskiiFormula:
    order: int
    variables: Tuple[str, ...]
    ells: Tuple[int, ...]
    constants: Tuple[str, ...]
    families: Tuple[Family, ...]

    def family(self, var, level) -> Optional[Family]:
        for f in self.families:
            if f.var == var and f.level == level:
                return f
        return None

    def free(self, level) -> Tuple[str, ...]:
        return self.variables[: self.ells[level]] if level < self.order else self.variables

    def dependent(self, level) -> Tuple[str, ...]:
        return self.variables[self.ells[level]:] if level < self.order else ()

    def witness_names(self):
        return [w for f in self.families for w in f.witnesses]

    def polys(self):
        return [p for f in self.families for p in f.system.polys]


def build_khovanskii_formula(order, variables, ells, constants=(), families=()) -> KhovanskiiFormula:
    """Validate and assemble a Khovanskii formula.

    ``families`` holds (var, level, witnesses, polys, params) tuples with
    polys as EPolys or term text and params as VarIds or flat names.
    """
    from .terms import parse_epoly

    variables = tuple(variables)
    constants = tuple(constants)
    ells = tuple(int(e) for e in ells)
    if order < 0:
        raise ShapeError("order must be nonnegative")
    if len(ells) != order:
        raise ShapeError(f"need {order} partition entries, got {len(ells)}")
    if any(b > a for a, b in zip(ells, ells[1:])):
        raise ShapeError("partition must be non-increasing")
    if ells and (ells[0] > len(variables) or ells[-1] < 0):
        raise ShapeError("partition entries must lie in [0, n]")
    if len(set(variables)) != len(variables) or set(variables) & set(constants):
        raise ShapeError("variable and constant names must be distinct")
    used = set(variables) | set(constants)
    built = []
    seen = set()
    for var_, level, witnesses, polys, params in families:
        if var_ not in variables:
            raise ShapeError(f"family for unknown variable {var_}")
        if not 0 <= level < order:
            raise ShapeError(f"family level {level} outside 0..{order - 1}")
        if var_ not in variables[ells[level]:]:
            raise ShapeError(f"{var_} is free at level {level}; no family allowed")
        if (var_, level) in seen:
            raise ShapeError(f"duplicate family {var_}@{level}")
        seen.add((var_, level))
        witnesses = tuple(witnesses)
        for w in witnesses:
            if w in used or "__" in w:
                raise ShapeError(f"witness name {w} is not fresh")
            used.add(w)
        polys = [parse_epoly(p) if isinstance(p, str) else EPoly.coerce(p) for p in polys]
        unknowns = (VarId(var_, level),) + tuple(VarId(w, level) for w in witnesses)
        params = tuple(p if isinstance(p, VarId) else VarId.from_name(p) for p in params)
        for p in params:
            if p.base in constants:
                continue
            if p.base not in variables or p.order > level or p.base not in variables[: ells[p.order]]:
                raise ShapeError(f"parameter {p.name} is not an admissible lower-level free coordinate")
        for f in polys:
            for v in f.variables():
                if v not in unknowns and v not in params:
                    raise ShapeError(f"variable {v.name} of family {var_}@{level} is not declared")
        built.append(Family(var_, level, witnesses, khovanskii_build(polys, unknowns, params)))
    for level in range(order):
        for v in variables[ells[level]:]:
            if (v, level) not in seen:
                raise ShapeError(f"dependent coordinate {v}@{level} has no Khovanskii system")
    built.sort(key=lambda f: (f.level, variables.index(f.var)))
    return KhovanskiiFormula(order, variables, ells, constants, tuple(built))


@dataclass(frozen=True)
class Clause:
    target: VarId
    det: EPoly
    num: EPoly

    def equation(self) -> EPoly:
        succ = EPoly.coerce(self.target)
        if self.num.is_zero():
            return succ
        return self.det * succ - self.num


@dataclass(frozen=True)
class DLEInstance:
    phi: Formula
    star: StarSystem
    H: KhovanskiiFormula
    equations: Tuple[EPoly, ...]
    inequation: EPoly
    clauses: Tuple[Clause, ...]
    tolerance: ToleranceSpec = ToleranceSpec()

    @property
    def order(self):
        return self.H.order

    def jet_vars(self):
        return [VarId(x, j) for x in self.H.variables for j in range(self.order + 1)]

    def witness_vars(self):
        out = []
        for f in self.H.families:
            for w in f.witnesses:
                out += [VarId(w, f.level), VarId(w, f.level + 1)]
        return out

    def constant_vars(self):
        vs = set()
        for q in list(self.equations) + [self.inequation]:
            vs |= {v for v in q.variables() if v.base in self.H.constants}
        return sorted(vs)


def build_phi_star_H(star, H: KhovanskiiFormula, phi: Optional[Formula] = None,
                     tolerance: Optional[ToleranceSpec] = None) -> DLEInstance:
    if isinstance(star, (str, Formula)):
        phi = parse_formula(star) if isinstance(star, str) else star
        star = star_transform(phi)
    if star.order != H.order:
        raise ShapeError(f"formula has order {star.order} but H has order {H.order}")
    extra = set(star.variables) - set(H.variables) - set(H.constants)
    if extra:
        raise ShapeError(f"formula variables {sorted(extra)} are not declared in H")
    eqs: List[EPoly] = list(star.equations)
    clauses: List[Clause] = []
    ineq = ONE
    for q in star.inequations:
        ineq = ineq * q
    dets = []
    for fam in H.families:
        eqs.extend(fam.system.polys)
        level1 = propagate_symbolic(fam.system, 1)[0]
        for u, t in zip(fam.unknowns, level1):
            c = Clause(u.succ(), t.den, t.num)
            clauses.append(c)
            eqs.append(c.equation())
        if fam.system.jac_det not in dets:
            dets.append(fam.system.jac_det)
    for d in dets:
        ineq = ineq * d
    return DLEInstance(phi, star, H, tuple(eqs), ineq, tuple(clauses), tolerance or ToleranceSpec())


# -- rendering -----------------------------------------------------------------

def core_formula(inst: DLEInstance) -> Formula:
    atoms = [Atom(epoly_to_term(q), "=") for q in inst.equations]
    atoms.append(Atom(epoly_to_term(inst.inequation), "!="))
    return Formula(tuple(atoms))


def h_formula(inst: DLEInstance) -> Optional[Formula]:
    atoms = [Atom(epoly_to_term(q), "=") for q in inst.H.polys()]
    for f in inst.H.families:
        atoms.append(Atom(epoly_to_term(f.system.jac_det), "!="))
    return Formula(tuple(atoms)) if atoms else None


def render_instance(inst: DLEInstance) -> str:
    m = inst.order
    xs = ", ".join(v.name for v in inst.jet_vars())
    ws = ", ".join(v.name for v in inst.witness_vars())
    hpart = "H & PHI*_H" if inst.H.families else "PHI*_H"
    exists = f"exists {ws} : " if ws else ""
    lines = [
        f"forall d : forall {xs} :",
        f"  ({exists}{hpart}) -> (exists alpha : PHI(alpha) & chi(delta^{m}(alpha) - ({xs}), d))",
        f"PHI: {print_formula(inst.phi)}",
    ]
    hf = h_formula(inst)
    if hf is not None:
        lines.append(f"H: {print_formula(hf)}")
    lines.append(f"PHI*_H: {print_formula(core_formula(inst))}")
    return "\n".join(lines) + "\n"


def parse_rendered_core(text: str) -> Formula:
    for line in text.splitlines():
        if line.startswith("PHI*_H:"):
            return parse_formula(line[len("PHI*_H:"):])
    raise ValueError("rendered text has no PHI*_H line")


# -- jet search ----------------------------------------------------------------

@dataclass
class JetSolution:
    jet: Jet
    witnesses: Point
    residuals: List
    inequation: object
    distances: Dict[VarId, float]
    success: bool
    seed: int
    perturbation: Dict[VarId, object] = field(default_factory=dict)


def _split_target(inst, target):
    consts = set(inst.H.constants)
    jet_vals, const_vals = {}, {}
    for k, v in target.items():
        (const_vals if k.base in consts else jet_vals)[k] = v
    missing = [v.name for v in inst.jet_vars() if v not in jet_vals]
    if missing:
        raise ShapeError(f"target jet lacks {', '.join(missing)}")
    return jet_vals, const_vals


def _solve_square(fs, unknowns, vals, backend):
    if isinstance(backend, PadicBackend):
        return dict(hensel_solve(fs, unknowns, (), vals, backend))
    return dict(newton_solve(fs, unknowns, (), vals, tol=min(1e-12, backend.tol.eps_res), backend=backend))


def _rank(backend, M) -> int:
    if not M or not M[0]:
        return 0
    if isinstance(backend, PadicBackend):
        # elimination with valuation threshold
        rows = [list(r) for r in M]
        cut = backend.N - 2
        rank = 0
        ncols = len(rows[0])
        for c in range(ncols):
            piv = None
            for r in range(rank, len(rows)):
                if rows[r][c].valuation < cut and (piv is None or rows[r][c].valuation < rows[piv][c].valuation):
                    piv = r
            if piv is None:
                continue
            rows[rank], rows[piv] = rows[piv], rows[rank]
            for r in range(len(rows)):
                if r != rank and not rows[r][c].is_zero():
                    f = rows[r][c] / rows[rank][c]
                    rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
            rank += 1
        return rank
    A = np.array(M, dtype=float)
    scale = max(1.0, float(np.abs(A).max()))
    return int(np.linalg.matrix_rank(A, tol=1e-7 * scale))


def _perturb(backend, rng, magnitude):
    k = rng.randint(-1000, 1000)
    if isinstance(backend, PadicBackend):
        # p-adically small: divisible by p^(magnitude)
        return backend.scalar(Fraction(k if k % backend.p else k + 1) * backend.p ** int(magnitude))
    return float(Fraction(k, 1000) * Fraction(magnitude))


def jet_search(inst: DLEInstance, target, backend=None, seed: int = 0,
               magnitude=None, witness_seed=None, loose: Optional[float] = None) -> JetSolution:
    """Find a jet satisfying the instance near ``target``.

    The free level-0 coordinates are moved by seeded pseudo-random offsets
    (a heuristic stand-in for generic independent elements); everything
    else is re-solved: first each level-0 Khovanskii family, then clause
    successors via propagation, then a Newton solve over a regular square
    minor of the full cleared system.
    """
    backend = backend or RealBackend(inst.tolerance)
    tol = backend.tol
    H = inst.H
    jet_vals, const_vals = _split_target(inst, target)
    vals = {k: backend.scalar(v) for k, v in {**const_vals, **jet_vals}.items()}
    for w in inst.witness_vars():
        seedv = None if witness_seed is None else witness_seed.get(w)
        vals[w] = backend.scalar(seedv if seedv is not None else 0)

    # 1. feasibility: re-solve every family at the target, then check all of PHI*_H
    if loose is None:
        loose = max(tol.radius, tol.eps_res ** 0.5) if not isinstance(backend, PadicBackend) else None
    try:
        for fam in H.families:
            sol = _solve_square(fam.system.polys, fam.unknowns, vals, backend)
            for u in fam.unknowns:
                if u.base == fam.var:
                    if not backend.close(sol[u], vals[u], tol):
                        raise InfeasibleTarget(f"{u.name} of the target is not a root of its Khovanskii system")
                else:
                    vals[u] = sol[u]
        _seed_clauses(inst, vals, backend, only_witnesses=True)
    except (SingularJacobian, NoConvergence) as exc:
        raise InfeasibleTarget(f"target violates H: {exc}") from None
    res0 = [backend.eval(q, vals) for q in inst.equations]
    bad = [i for i, r in enumerate(res0) if not _loosely_zero(backend, r, loose)]
    if bad:
        raise InfeasibleTarget(f"target violates equations {bad} of PHI*_H")
    if not backend.regular_ok(backend.eval(inst.inequation, vals), tol):
        raise InfeasibleTarget("target makes the inequation vanish")

    # 2. perturb the free level-0 coordinates
    rng = random.Random(seed)
    if magnitude is None:
        magnitude = tol.radius / 10 if not isinstance(backend, PadicBackend) else tol.nbhd_min_val + 1
    free0 = [VarId(x, 0) for x in (H.free(0) if H.order else H.variables)]
    pert = {}
    for v in free0:
        d = _perturb(backend, rng, magnitude)
        pert[v] = d
        vals[v] = vals[v] + d

    # 3-4. level-0 families, then their successors
    for fam in H.families:
        if fam.level == 0:
            vals.update(_solve_square(fam.system.polys, fam.unknowns, vals, backend))
    _seed_clauses(inst, vals, backend)

    # 5. joint Newton solve over a regular square minor
    fixed = set(free0) | set(inst.constant_vars())
    _joint_solve(inst, vals, fixed, backend)

    # 6. verification
    residuals = [backend.eval(q, vals) for q in inst.equations]
    ineq = backend.eval(inst.inequation, vals)
    jet = Jet({v: vals[v] for v in inst.jet_vars()}, order=inst.order)
    tgt = Jet({v: backend.scalar(jet_vals[v]) for v in inst.jet_vars()}, order=inst.order)
    distances = {v: backend.distance(jet[v], tgt[v]) for v in inst.jet_vars()}
    ok = (all(backend.residual_ok(r, tol) for r in residuals)
          and backend.regular_ok(ineq, tol)
          and neighborhood_check(jet, tgt, backend, tol))
    witnesses = Point({v: vals[v] for v in inst.witness_vars()})
    return JetSolution(jet, witnesses, residuals, ineq, distances, ok, seed, pert)


def _loosely_zero(backend, r, loose):
    if isinstance(backend, PadicBackend):
        return r.valuation >= max(1, backend.res_min_val // 2)
    return abs(r) <= loose


def _seed_clauses(inst, vals, backend, only_witnesses=False):
    """Fill successors of family unknowns from one propagation step."""
    for fam in inst.H.families:
        params = {}
        for k, v in vals.items():
            if k not in fam.unknowns:
                params[k] = v
        pt = {u: vals[u] for u in fam.unknowns}
        try:
            jet = propagate_numeric(fam.system, pt, params, 1, backend)
        except ShapeError:
            continue  # successors of some parameter are not known yet
        for u in fam.unknowns:
            if only_witnesses and u.base == fam.var:
                continue
            vals[u.succ()] = jet[u.succ()]


def _column_priority(inst, fixed):
    H = inst.H
    clause_targets = [c.target for c in inst.clauses]
    fam_unknowns = [u for f in H.families for u in f.unknowns]
    rest = sorted(
        (v for v in inst.jet_vars() if v not in clause_targets and v not in fam_unknowns),
        key=lambda v: (-v.order, -H.variables.index(v.base)),
    )
    order = []
    for v in clause_targets + fam_unknowns + rest:
        if v not in fixed and v not in order:
            order.append(v)
    return order


def _joint_solve(inst, vals, fixed, backend):
    eqs = list(inst.equations)
    if not eqs:
        return
    # H equations and clauses first: they are regular by construction
    n_phi = len(inst.star.equations)
    row_order = list(range(n_phi, len(eqs))) + list(range(n_phi))
    cols_all = _column_priority(inst, fixed)
    if not cols_all:
        return
    J = jacobian(eqs, cols_all)
    Jv = backend.eval_matrix(J, vals)
    rows: List[int] = []
    for r in row_order:
        if _rank(backend, [Jv[i] for i in rows + [r]]) == len(rows) + 1:
            rows.append(r)
    cols: List[int] = []
    sub = lambda cs: [[Jv[r][c] for c in cs] for r in rows]
    for c in range(len(cols_all)):
        if len(cols) == len(rows):
            break
        if _rank(backend, sub(cols + [c])) == len(cols) + 1:
            cols.append(c)
    if len(cols) < len(rows):
        raise SingularJacobian("no regular square minor in the cleared system")
    unknowns = [cols_all[c] for c in cols]
    fs = [eqs[r] for r in rows]
    vals.update(_solve_square(fs, unknowns, vals, backend))


def demo_catalog():
    """Five small instances with consistent targets: (name, instance, target jet)."""
    import math

    V = VarId
    out = []

    def add(name, phi, H, target):
        out.append((name, build_phi_star_H(phi, H), Jet(target)))

    add("linear", "D(x) - x = 0",
        build_khovanskii_formula(1, ["x"], [1]),
        {V("x", 0): 1.0, V("x", 1): 1.0})
    add("exp-dependent", "E(x) - 2 + D(x) = 0",
        build_khovanskii_formula(1, ["x"], [0], families=[("x", 0, (), ["E(x) - 2"], ())]),
        {V("x", 0): math.log(2), V("x", 1): 0.0})
    add("gaussian", "D(y) - 2*x*D(x)*y = 0",
        build_khovanskii_formula(1, ["x", "y"], [1], families=[
            ("y", 0, ("z",), ["y - E(z)", "z - x^2"], ("x",))]),
        {V("x", 0): 0.5, V("x", 1): 1.0, V("y", 0): math.exp(0.25), V("y", 1): math.exp(0.25)})
    add("harmonic", "D(D(x)) + x = 0",
        build_khovanskii_formula(2, ["x"], [1, 1]),
        {V("x", 0): 1.0, V("x", 1): 0.0, V("x", 2): -1.0})
    add("sqrt-constant", "2*y*D(y) - 1 = 0",
        build_khovanskii_formula(1, ["y"], [0], constants=["c"], families=[
            ("y", 0, (), ["y^2 - c"], ("c",))]),
        {V("y", 0): 2.0, V("y", 1): 0.25, V("c", 0): 4.0, V("c", 1): 1.0})
    return out
