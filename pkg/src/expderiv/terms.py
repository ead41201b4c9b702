"""Surface syntax for L_E / L_delta terms and conjunctive formulas.

Grammar::

    term := sum
    sum  := prod (('+'|'-') prod)*
    prod := unary ('*' unary)*
    unary := '-' unary | atom ('^' nat)?
    atom := rat | ident | 'E' '(' term ')' | 'D' '(' term ')'
          | 'inv' '(' term ')' | '(' term ')'
    rat  := int ('/' posint)?

Formulas are atoms ``term = 0`` or ``term != 0`` joined by ``&``.  A
binary subtraction ``a - b`` parses as ``Add(a, Neg(b))``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Tuple, Union

from .epoly import EPoly, VarId, ZERO, exp_apply
from .errors import DomainError, ParseError, UnsupportedError

RESERVED = {"E", "D", "inv"}


# -- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Rat:
    value: Fraction

    def __post_init__(self):
        v = Fraction(self.value)
        if v < 0:
            raise ValueError("rational literals are nonnegative; use Neg")
        object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Add:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Neg:
    arg: "Term"


@dataclass(frozen=True)
class Mul:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Pow:
    base: "Term"
    exp: int

    def __post_init__(self):
        if not isinstance(self.exp, int) or self.exp < 0:
            raise ValueError("powers take natural exponents")


@dataclass(frozen=True)
class Exp:
    arg: "Term"


@dataclass(frozen=True)
class D:
    arg: "Term"


@dataclass(frozen=True)
class Inv:
    arg: "Term"


Term = Union[Rat, Var, Add, Neg, Mul, Pow, Exp, D, Inv]


@dataclass(frozen=True)
class Atom:
    term: Term
    rel: str  # "=" or "!="

    def __post_init__(self):
        if self.rel not in ("=", "!="):
            raise ValueError(f"unknown relation {self.rel!r}")


@dataclass(frozen=True)
class Formula:
    atoms: Tuple[Atom, ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("a formula needs at least one atom")
        object.__setattr__(self, "atoms", tuple(self.atoms))


# -- lexer / parser ----------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z][A-Za-z0-9_]*)|(!=|[-+*^/()=&]))")


def _tokenize(text: str):
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[bad]!r}", bad, text)
        start = m.start(m.lastindex)
        if m.group(1) is not None:
            toks.append(("num", m.group(1), start))
        elif m.group(2) is not None:
            toks.append(("id", m.group(2), start))
        else:
            toks.append(("op", m.group(3), start))
        pos = m.end()
    toks.append(("eof", "", n))
    return toks


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return ParseError(msg, tok[2], self.text)

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] == "num":
            raise self.error(f"expected {value!r}", tok)
        return tok

    def at_op(self, *ops):
        kind, val, _ = self.peek()
        return kind == "op" and val in ops

    def term(self):
        left = self.prod()
        while self.at_op("+", "-"):
            op = self.take()[1]
            right = self.prod()
            left = Add(left, right if op == "+" else Neg(right))
        return left

    def prod(self):
        left = self.unary()
        while self.at_op("*"):
            self.take()
            left = Mul(left, self.unary())
        return left

    def unary(self):
        if self.at_op("-"):
            self.take()
            return Neg(self.unary())
        base = self.atom()
        if self.at_op("^"):
            self.take()
            tok = self.take()
            if tok[0] != "num":
                raise self.error("expected a natural exponent", tok)
            return Pow(base, int(tok[1]))
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            value = Fraction(int(val))
            if self.at_op("/"):
                self.take()
                dtok = self.take()
                if dtok[0] != "num":
                    raise self.error("expected a denominator", dtok)
                den = int(dtok[1])
                if den == 0:
                    raise self.error("zero denominator in rational literal", dtok)
                value = Fraction(int(val), den)
            return Rat(value)
        if kind == "id":
            if val in RESERVED:
                self.expect("(")
                inner = self.term()
                self.expect(")")
                return {"E": Exp, "D": D, "inv": Inv}[val](inner)
            return Var(val)
        if kind == "op" and val == "(":
            inner = self.term()
            self.expect(")")
            return inner
        raise ParseError("unexpected " + (repr(val) if val else "end of input"), pos, self.text)

    def finish(self):
        if self.peek()[0] != "eof":
            raise self.error(f"unexpected trailing {self.peek()[1]!r}")


def parse_term(text: str) -> Term:
    p = _Parser(text)
    t = p.term()
    p.finish()
    return t


def parse_formula(text: str) -> Formula:
    p = _Parser(text)
    atoms = [_parse_atom(p)]
    while p.at_op("&"):
        p.take()
        atoms.append(_parse_atom(p))
    p.finish()
    return Formula(tuple(atoms))


def _parse_atom(p: _Parser) -> Atom:
    lhs = p.term()
    if not p.at_op("=", "!="):
        raise p.error("expected '=' or '!='")
    rel = p.take()[1]
    rhs = p.term()
    if rhs != Rat(Fraction(0)):
        lhs = Add(lhs, Neg(rhs))
    return Atom(lhs, rel)


# -- printer -----------------------------------------------------------------

def _fmt_rat(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def _p_atom(t) -> str:
    if isinstance(t, Rat):
        s = _fmt_rat(t.value)
        return s if t.value.denominator == 1 else f"({s})"
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Exp):
        return f"E({_p_sum(t.arg)})"
    if isinstance(t, D):
        return f"D({_p_sum(t.arg)})"
    if isinstance(t, Inv):
        return f"inv({_p_sum(t.arg)})"
    return f"({_p_sum(t)})"


def _p_unary(t) -> str:
    if isinstance(t, Neg):
        return "-" + _p_unary(t.arg)
    if isinstance(t, Pow):
        return f"{_p_atom(t.base)}^{t.exp}"
    if isinstance(t, Rat):
        return _fmt_rat(t.value)
    if isinstance(t, (Add, Mul)):
        return f"({_p_sum(t)})"
    return _p_atom(t)


def _p_prod(t) -> str:
    if isinstance(t, Mul):
        return f"{_p_prod(t.left)}*{_p_unary(t.right)}"
    return _p_unary(t)


def _p_sum(t) -> str:
    if isinstance(t, Add):
        if isinstance(t.right, Neg):
            return f"{_p_sum(t.left)} - {_p_prod(t.right.arg)}"
        return f"{_p_sum(t.left)} + {_p_prod(t.right)}"
    return _p_prod(t)


def print_term(t: Term) -> str:
    return _p_sum(t)


def print_formula(phi: Formula) -> str:
    return " & ".join(f"{print_term(a.term)} {a.rel} 0" for a in phi.atoms)


# -- delta normalization -----------------------------------------------------

def _is_dvar(t) -> bool:
    while isinstance(t, D):
        t = t.arg
    return isinstance(t, Var)


def _push_d(t) -> Term:
    """D applied to an already normalized term."""
    if isinstance(t, Rat):
        return Rat(Fraction(0))
    if isinstance(t, Var) or (isinstance(t, D) and _is_dvar(t)):
        return D(t)
    if isinstance(t, Add):
        return Add(_push_d(t.left), _push_d(t.right))
    if isinstance(t, Neg):
        return Neg(_push_d(t.arg))
    if isinstance(t, Mul):
        return Add(Mul(_push_d(t.left), t.right), Mul(t.left, _push_d(t.right)))
    if isinstance(t, Pow):
        if t.exp == 0:
            return Rat(Fraction(0))
        if t.exp == 1:
            return _push_d(t.base)
        return Mul(Mul(Rat(Fraction(t.exp)), Pow(t.base, t.exp - 1)), _push_d(t.base))
    if isinstance(t, Exp):
        return Mul(_push_d(t.arg), t)
    if isinstance(t, Inv):
        raise UnsupportedError("D over inv(...) is not supported; clear the denominator first")
    raise TypeError(f"not a term: {t!r}")


def delta_normalize(t: Term) -> Term:
    if isinstance(t, (Rat, Var)):
        return t
    if isinstance(t, D):
        return _push_d(delta_normalize(t.arg))
    if isinstance(t, (Add, Mul)):
        return type(t)(delta_normalize(t.left), delta_normalize(t.right))
    if isinstance(t, Pow):
        return Pow(delta_normalize(t.base), t.exp)
    if isinstance(t, (Neg, Exp, Inv)):
        return type(t)(delta_normalize(t.arg))
    raise TypeError(f"not a term: {t!r}")


def d_depth(t: Term) -> int:
    """Maximal nesting depth of D in t."""
    if isinstance(t, (Rat, Var)):
        return 0
    if isinstance(t, D):
        return 1 + d_depth(t.arg)
    if isinstance(t, (Add, Mul)):
        return max(d_depth(t.left), d_depth(t.right))
    if isinstance(t, Pow):
        return d_depth(t.base)
    return d_depth(t.arg)


# -- conversion to E-polynomials --------------------------------------------

def term_to_erational(t: Term):
    """Fold a D-normalized term into an ERational (num, den) pair."""
    from .differential import ERational

    def go(t):
        if isinstance(t, Rat):
            return ERational.of(EPoly.coerce(t.value))
        if isinstance(t, Var):
            return ERational.of(EPoly.coerce(VarId.from_name(t.name)))
        if isinstance(t, D):
            k, inner = 0, t
            while isinstance(inner, D):
                k, inner = k + 1, inner.arg
            if not isinstance(inner, Var):
                raise UnsupportedError("D must be normalized onto variables first")
            v = VarId.from_name(inner.name)
            return ERational.of(EPoly.coerce(v.succ(k)))
        if isinstance(t, Add):
            return go(t.left) + go(t.right)
        if isinstance(t, Neg):
            return -go(t.arg)
        if isinstance(t, Mul):
            return go(t.left) * go(t.right)
        if isinstance(t, Pow):
            return go(t.base) ** t.exp
        if isinstance(t, Exp):
            a = go(t.arg)
            if not a.is_polynomial():
                raise UnsupportedError("E of a quotient has no E-polynomial normal form")
            return ERational.of(exp_apply(a.as_epoly()))
        if isinstance(t, Inv):
            return go(t.arg).reciprocal()
        raise TypeError(f"not a term: {t!r}")

    return go(t)


def term_to_epoly(t: Term) -> EPoly:
    r = term_to_erational(delta_normalize(t))
    if not r.is_polynomial():
        raise UnsupportedError("term has a nonconstant denominator")
    return r.as_epoly()


def epoly_to_term(p: EPoly) -> Term:
    """AST whose E-polynomial value is p; a canonical, readable rendering."""
    out = None
    for a, P in p.sorted_terms():
        efac = Exp(epoly_to_term(a)) if a.terms else None
        for mono, c in sorted(P.terms.items(), key=lambda mc: _mono_sort(mc[0])):
            factors: List[Term] = []
            for v, e in mono:
                factors.append(Var(v.name) if e == 1 else Pow(Var(v.name), e))
            if efac is not None:
                factors.append(efac)
            mag = abs(c)
            if mag != 1 or not factors:
                factors.insert(0, Rat(mag))
            if out is None and c < 0:
                # lead with the sign on the first factor: -2*x rather than -(2*x)
                factors[0] = Neg(factors[0])
            body = factors[0]
            for f in factors[1:]:
                body = Mul(body, f)
            if out is None:
                out = body
            else:
                out = Add(out, Neg(body) if c < 0 else body)
    return out if out is not None else Rat(Fraction(0))


def _mono_sort(mono):
    return (-sum(e for _, e in mono), tuple((v.base, v.order, -e) for v, e in mono))


def format_epoly(p: EPoly) -> str:
    return print_term(epoly_to_term(p))


def parse_epoly(text: str) -> EPoly:
    return term_to_epoly(parse_term(text))


# -- star transform ----------------------------------------------------------

@dataclass(frozen=True)
class StarSystem:
    order: int
    equations: Tuple[EPoly, ...]
    inequations: Tuple[EPoly, ...]
    variables: Tuple[str, ...]

    def varids(self):
        return [VarId(b, j) for b in self.variables for j in range(self.order + 1)]


def star_transform(phi) -> StarSystem:
    """Replace every D^j(x) by the fresh variable (x, j) and fold to E-polynomials.

    Denominators introduced by ``inv`` become extra inequations.
    """
    if isinstance(phi, str):
        phi = parse_formula(phi)
    eqs: List[EPoly] = []
    neqs: List[EPoly] = []
    bases: List[str] = []

    def note_vars(p: EPoly):
        for v in sorted(p.variables(), key=lambda v: (v.order, v.base)):
            if v.base not in bases:
                bases.append(v.base)

    def add_neq(q: EPoly):
        if q.is_zero():
            raise DomainError("inequation 0 != 0 is unsatisfiable")
        if q.is_poly() and not q.variables():
            return  # nonzero rational, vacuous
        if q not in neqs:
            neqs.append(q)

    for atom in phi.atoms:
        r = term_to_erational(delta_normalize(atom.term))
        if r.den.is_zero():
            raise DomainError("division by zero")
        # first-appearance order walks the printed atom left to right
        for name in _var_names(atom.term):
            b = VarId.from_name(name).base
            if b not in bases:
                bases.append(b)
        note_vars(r.num)
        note_vars(r.den)
        if atom.rel == "=":
            eqs.append(r.num)
        else:
            add_neq(r.num)
        add_neq(r.den)
    order = 0
    for q in eqs + neqs:
        for v in q.variables():
            order = max(order, v.order)
    return StarSystem(order, tuple(eqs), tuple(neqs), tuple(bases))


def _var_names(t) -> List[str]:
    if isinstance(t, Var):
        return [t.name]
    if isinstance(t, Rat):
        return []
    if isinstance(t, (Add, Mul)):
        return _var_names(t.left) + _var_names(t.right)
    if isinstance(t, Pow):
        return _var_names(t.base)
    return _var_names(t.arg)
