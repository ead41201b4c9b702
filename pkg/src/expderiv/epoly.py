"""Exact exponential polynomials over the rationals.

An element of the free partial E-ring Q[X]^E is stored in group-ring normal
form: a finite map from exponents to ordinary polynomial coefficients,

    p = sum_a  P_a(X) * E(a),

where every exponent ``a`` is itself an :class:`EPoly` with zero rational
constant, and ``P_a`` is a nonzero :class:`Poly`.  The exponent ``0`` carries
the ordinary polynomial part.  Because the exponent group is free, two
values are equal exactly when their maps are equal, so structural equality
is semantic equality.

Variables are :class:`VarId` pairs ``(base, order)``; ``order`` counts how
many times the derivation has been applied to ``base``.
"""

from __future__ import annotations

import functools
from fractions import Fraction
from numbers import Rational
from typing import Callable, Dict, Iterable, Mapping, NamedTuple, Optional, Tuple

from .errors import DomainError, PreconditionError, ShapeError

__all__ = [
    "VarId",
    "Poly",
    "EPoly",
    "OrdinalCNF",
    "ZERO",
    "ONE",
    "var",
    "const",
    "exp_apply",
    "add",
    "mul",
    "scalar_const",
    "height",
    "layer_decompose",
    "rank_component",
    "ord",
    "ord_reduce",
    "compare_canonical",
    "substitute",
]


class VarId(NamedTuple):
    base: str
    order: int = 0

    def succ(self, k: int = 1) -> "VarId":
        return VarId(self.base, self.order + k)

    @property
    def name(self) -> str:
        """Flat identifier used in text: ``x`` for order 0, ``x__2`` otherwise."""
        if self.order == 0:
            return self.base
        return f"{self.base}__{self.order}"

    @classmethod
    def from_name(cls, name: str) -> "VarId":
        head, sep, tail = name.rpartition("__")
        if sep and head and tail.isdigit():
            return cls(head, int(tail))
        return cls(name, 0)

    def __str__(self):
        return self.name


Monomial = Tuple[Tuple[VarId, int], ...]

_ONE_MONO: Monomial = ()


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for v, e in m2:
        d[v] = d.get(v, 0) + e
    return tuple(sorted(d.items()))


def _mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def _mono_key(m: Monomial):
    return (_mono_degree(m), tuple((v.base, v.order, e) for v, e in m))


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, Rational)):
        return Fraction(c)
    raise TypeError(f"expected a rational coefficient, got {type(c).__name__}")


class Poly:
    """Sparse multivariate polynomial with rational coefficients."""

    __slots__ = ("_terms", "_hash", "_key")

    def __init__(self, terms: Optional[Mapping[Monomial, object]] = None):
        clean: Dict[Monomial, Fraction] = {}
        for mono, c in (terms or {}).items():
            mono = tuple(sorted((v, e) for v, e in mono if e))
            for _, e in mono:
                if e < 0:
                    raise ValueError("negative exponent in monomial")
            c = _as_fraction(c)
            total = clean.get(mono, Fraction(0)) + c
            if total:
                clean[mono] = total
            else:
                clean.pop(mono, None)
        self._terms = clean
        self._hash = None
        self._key = None

    @classmethod
    def _make(cls, terms: Dict[Monomial, Fraction]) -> "Poly":
        obj = cls.__new__(cls)
        obj._terms = terms
        obj._hash = None
        obj._key = None
        return obj

    @classmethod
    def constant(cls, c) -> "Poly":
        c = _as_fraction(c)
        return cls._make({_ONE_MONO: c} if c else {})

    @classmethod
    def variable(cls, v: VarId) -> "Poly":
        return cls._make({((v, 1),): Fraction(1)})

    @property
    def terms(self) -> Mapping[Monomial, Fraction]:
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    def constant_term(self) -> Fraction:
        return self._terms.get(_ONE_MONO, Fraction(0))

    def total_degree(self) -> int:
        if not self._terms:
            return 0
        return max(_mono_degree(m) for m in self._terms)

    def variables(self):
        return {v for m in self._terms for v, _ in m}

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return hash(self) == hash(other) and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def sort_key(self):
        if self._key is None:
            self._key = tuple(sorted((_mono_key(m), c) for m, c in self._terms.items()))
        return self._key

    def __add__(self, other: "Poly") -> "Poly":
        if not other._terms:
            return self
        if not self._terms:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            s = out.get(m, 0) + c
            if s:
                out[m] = s
            else:
                del out[m]
        return Poly._make(out)

    def __neg__(self) -> "Poly":
        return Poly._make({m: -c for m, c in self._terms.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def scale(self, c) -> "Poly":
        c = _as_fraction(c)
        if not c:
            return Poly._make({})
        return Poly._make({m: c * k for m, k in self._terms.items()})

    def __mul__(self, other: "Poly") -> "Poly":
        if not self._terms or not other._terms:
            return Poly._make({})
        out: Dict[Monomial, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = _mono_mul(m1, m2)
                s = out.get(m, 0) + c1 * c2
                if s:
                    out[m] = s
                else:
                    del out[m]
        return Poly._make(out)

    def derive(self, image: Callable[[VarId], Optional["Poly"]]) -> "Poly":
        """Apply the derivation trivial on Q sending each variable v to image(v)."""
        out = Poly._make({})
        for m, c in self._terms.items():
            for i, (v, e) in enumerate(m):
                dv = image(v)
                if dv is None or dv.is_zero():
                    continue
                rest = list(m)
                if e == 1:
                    del rest[i]
                else:
                    rest[i] = (v, e - 1)
                out = out + Poly._make({tuple(rest): c * e}) * dv
        return out

    def __repr__(self):
        return f"Poly({dict(self._terms)!r})"


_POLY_ZERO = Poly._make({})
_POLY_ONE = Poly._make({_ONE_MONO: Fraction(1)})


class EPoly:
    """Canonical normal form of an element of Q[X]^E.

    Instances are immutable and hashable; build them with :func:`var`,
    :func:`const`, :func:`exp_apply` and the arithmetic operators.
    """

    __slots__ = ("_terms", "_hash", "_key", "_height", "_vars")

    def __init__(self, terms: Optional[Mapping["EPoly", Poly]] = None):
        clean: Dict[EPoly, Poly] = {}
        for a, P in (terms or {}).items():
            if not isinstance(a, EPoly) or not isinstance(P, Poly):
                raise TypeError("EPoly terms map EPoly exponents to Poly coefficients")
            if a._terms and scalar_const(a) != 0:
                raise DomainError("exponent key has nonzero rational constant")
            P = clean.get(a, _POLY_ZERO) + P
            if P.is_zero():
                clean.pop(a, None)
            else:
                clean[a] = P
        self._init(clean)

    def _init(self, terms):
        self._terms = terms
        self._hash = None
        self._key = None
        self._height = None
        self._vars = None

    @classmethod
    def _make(cls, terms: Dict["EPoly", Poly]) -> "EPoly":
        obj = cls.__new__(cls)
        obj._init(terms)
        return obj

    # -- constructors -------------------------------------------------
    @classmethod
    def from_poly(cls, P: Poly) -> "EPoly":
        return cls._make({} if P.is_zero() else {ZERO: P})

    @classmethod
    def coerce(cls, x) -> "EPoly":
        if isinstance(x, EPoly):
            return x
        if isinstance(x, Poly):
            return cls.from_poly(x)
        if isinstance(x, VarId):
            return cls.from_poly(Poly.variable(x))
        return cls.from_poly(Poly.constant(x))

    # -- structure ----------------------------------------------------
    @property
    def terms(self) -> Mapping["EPoly", Poly]:
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self):
        return bool(self._terms)

    def sorted_terms(self):
        return sorted(self._terms.items(), key=lambda kv: kv[0].sort_key())

    def poly_part(self) -> Poly:
        return self._terms.get(ZERO, _POLY_ZERO)

    def is_poly(self) -> bool:
        return all(a is ZERO or not a._terms for a in self._terms)

    def height(self) -> int:
        if self._height is None:
            h = 0
            for a in self._terms:
                if a._terms:
                    h = max(h, a.height() + 1)
            self._height = h
        return self._height

    def variables(self):
        if self._vars is None:
            vs = set()
            for a, P in self._terms.items():
                vs |= P.variables()
                vs |= a.variables()
            self._vars = frozenset(vs)
        return self._vars

    def sort_key(self):
        if self._key is None:
            items = sorted((a.sort_key(), P.sort_key()) for a, P in self._terms.items())
            self._key = (self.height(), len(self._terms), tuple(items))
        return self._key

    def __eq__(self, other):
        if not isinstance(other, EPoly):
            if isinstance(other, (int, Fraction, Poly, VarId)):
                return self == EPoly.coerce(other)
            return NotImplemented
        if self is other:
            return True
        return hash(self) == hash(other) and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other) -> "EPoly":
        other = EPoly.coerce(other)
        if not other._terms:
            return self
        if not self._terms:
            return other
        out = dict(self._terms)
        for a, P in other._terms.items():
            Q = out.get(a)
            if Q is None:
                out[a] = P
            else:
                S = Q + P
                if S.is_zero():
                    del out[a]
                else:
                    out[a] = S
        return EPoly._make(out)

    __radd__ = __add__

    def __neg__(self) -> "EPoly":
        return EPoly._make({a: -P for a, P in self._terms.items()})

    def __sub__(self, other) -> "EPoly":
        return self + (-EPoly.coerce(other))

    def __rsub__(self, other) -> "EPoly":
        return EPoly.coerce(other) - self

    def __mul__(self, other) -> "EPoly":
        other = EPoly.coerce(other)
        if not self._terms or not other._terms:
            return ZERO
        out: Dict[EPoly, Poly] = {}
        for a, P in self._terms.items():
            for b, Q in other._terms.items():
                if not a._terms:
                    key = b
                elif not b._terms:
                    key = a
                else:
                    key = a + b
                R = P * Q
                prev = out.get(key)
                if prev is not None:
                    R = prev + R
                if R.is_zero():
                    out.pop(key, None)
                else:
                    out[key] = R
        return EPoly._make(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "EPoly":
        if not isinstance(n, int) or n < 0:
            raise ValueError("EPoly powers must be nonnegative integers")
        result, base = ONE, self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def __repr__(self):
        return f"EPoly({str(self)!r})"

    def __str__(self):
        from .terms import format_epoly

        return format_epoly(self)


ZERO = EPoly._make({})
ONE = EPoly._make({ZERO: _POLY_ONE})


def var(name, order: int = 0) -> EPoly:
    if isinstance(name, VarId):
        return EPoly.coerce(name)
    return EPoly.coerce(VarId(name, order))


def const(c) -> EPoly:
    return EPoly.coerce(c)


def add(p: EPoly, q: EPoly) -> EPoly:
    return p + q


def mul(p: EPoly, q: EPoly) -> EPoly:
    return p * q


def scalar_const(p: EPoly) -> Fraction:
    P = p._terms.get(ZERO)
    return P.constant_term() if P is not None else Fraction(0)


def exp_apply(p) -> EPoly:
    """E(p); defined only when p has zero rational constant."""
    p = EPoly.coerce(p)
    if scalar_const(p) != 0:
        raise DomainError(f"E is undefined on arguments with nonzero constant ({scalar_const(p)})")
    return EPoly._make({p: _POLY_ONE})


def height(p: EPoly) -> int:
    return p.height()


def layer_decompose(p: EPoly):
    """Split p into (p_0, ..., p_k) with p_0 in Q[X] and p_i in A_i.

    A term ``P*E(a)`` with ``a != 0`` lands in component ``height(a) + 1``.
    """
    k = p.height()
    buckets = [dict() for _ in range(k + 1)]
    for a, P in p._terms.items():
        idx = 0 if not a._terms else a.height() + 1
        buckets[idx][a] = P
    return [EPoly._make(b) for b in buckets]


def _top_part(a: EPoly) -> EPoly:
    return layer_decompose(a)[a.height()]


def rank_component(p_i: EPoly, i: int) -> int:
    if i == 0:
        if any(a._terms for a in p_i._terms):
            raise ShapeError("component 0 must be an ordinary polynomial")
        if not p_i._terms:
            return 0
        return p_i.poly_part().total_degree() + 1
    tops = set()
    for a in p_i._terms:
        if not a._terms or a.height() + 1 != i:
            raise ShapeError(f"term with exponent {a} does not belong to layer {i}")
        tops.add(_top_part(a))
    return len(tops)


@functools.total_ordering
class OrdinalCNF:
    """Ordinal below omega^omega, sum_i omega^i * coefficients[i]."""

    __slots__ = ("coefficients",)

    def __init__(self, coefficients: Iterable[int] = ()):
        cs = [int(c) for c in coefficients]
        if any(c < 0 for c in cs):
            raise ValueError("ordinal coefficients are natural numbers")
        while cs and cs[-1] == 0:
            cs.pop()
        self.coefficients = tuple(cs)

    def _cmp_key(self):
        return (len(self.coefficients), tuple(reversed(self.coefficients)))

    def __eq__(self, other):
        if isinstance(other, int):
            other = OrdinalCNF([other])
        if not isinstance(other, OrdinalCNF):
            return NotImplemented
        return self.coefficients == other.coefficients

    def __lt__(self, other):
        if isinstance(other, int):
            other = OrdinalCNF([other])
        if not isinstance(other, OrdinalCNF):
            return NotImplemented
        return self._cmp_key() < other._cmp_key()

    def __hash__(self):
        return hash(self.coefficients)

    def __str__(self):
        parts = []
        for i in range(len(self.coefficients) - 1, -1, -1):
            c = self.coefficients[i]
            if not c:
                continue
            if i == 0:
                parts.append(str(c))
            elif i == 1:
                parts.append(f"w*{c}")
            else:
                parts.append(f"w^{i}*{c}")
        return "+".join(parts) if parts else "0"

    def __repr__(self):
        return f"OrdinalCNF({list(self.coefficients)})"


def ord(p: EPoly) -> OrdinalCNF:  # noqa: A001 - mirrors the mathematical name
    if p.is_zero():
        return OrdinalCNF()
    comps = layer_decompose(p)
    return OrdinalCNF(rank_component(c, i) for i, c in enumerate(comps))


def ord_reduce(p: EPoly):
    """Return (q, E(q)*p) with ord(E(q)*p) < ord(p); needs p != 0 and p_0 = 0."""
    if p.is_zero():
        raise PreconditionError("ord_reduce needs a nonzero argument")
    comps = layer_decompose(p)
    if not comps[0].is_zero():
        raise PreconditionError("ord_reduce needs a vanishing polynomial component")
    lowest = next(c for c in comps if not c.is_zero())
    a = min(lowest._terms, key=lambda e: e.sort_key())
    q = -a
    return q, exp_apply(q) * p


def compare_canonical(p: EPoly, q: EPoly) -> int:
    kp, kq = p.sort_key(), q.sort_key()
    return (kp > kq) - (kp < kq)


def substitute(p: EPoly, bindings: Mapping[VarId, object]) -> EPoly:
    """Homomorphic image of p under variable -> EPoly bindings."""
    binds = {v: EPoly.coerce(b) for v, b in bindings.items()}
    memo: Dict[EPoly, EPoly] = {}

    def poly_image(P: Poly) -> EPoly:
        out = ZERO
        for mono, c in P.terms.items():
            t = EPoly.coerce(c)
            for v, e in mono:
                b = binds.get(v)
                t = t * (b ** e if b is not None else EPoly.coerce(v) ** e)
            out = out + t
        return out

    def go(q: EPoly) -> EPoly:
        hit = memo.get(q)
        if hit is not None:
            return hit
        out = ZERO
        for a, P in q._terms.items():
            coef = poly_image(P)
            if a._terms:
                coef = coef * exp_apply(go(a))
            out = out + coef
        memo[q] = out
        return out

    return go(p)
