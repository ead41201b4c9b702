"""E-derivations on exponential polynomials and the implicit-derivative machinery.

Parameters are ordinary variables: the derivation acts on a parameter ``c``
(of any order) by sending it to its successor ``c`` of the next order, so the
coefficient part ``p^delta`` of a delta-lift is simply the parameter slice of
:func:`delta_shift`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .epoly import EPoly, ONE, Poly, VarId, ZERO, exp_apply
from .errors import DomainError, ShapeError, SingularJacobian


# -- rational E-functions ----------------------------------------------------

class ERational:
    """Formal quotient num/den of E-polynomials; never auto-cancelled."""

    __slots__ = ("num", "den")

    def __init__(self, num: EPoly, den: EPoly = ONE):
        num, den = EPoly.coerce(num), EPoly.coerce(den)
        if den.is_zero():
            raise DomainError("zero denominator")
        self.num = num
        self.den = den

    @classmethod
    def of(cls, p) -> "ERational":
        return cls(EPoly.coerce(p), ONE)

    def is_polynomial(self) -> bool:
        return self.den.is_poly() and not self.den.variables()

    def as_epoly(self) -> EPoly:
        if not self.is_polynomial():
            raise ShapeError("not a polynomial: denominator has variables")
        c = self.den.poly_part().constant_term()
        return self.num if c == 1 else self.num * EPoly.coerce(1 / c)

    def __add__(self, other):
        other = _as_erat(other)
        if self.den == other.den:
            return ERational(self.num + other.num, self.den)
        if other.den == ONE:
            return ERational(self.num + other.num * self.den, self.den)
        if self.den == ONE:
            return ERational(self.num * other.den + other.num, other.den)
        return ERational(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __neg__(self):
        return ERational(-self.num, self.den)

    def __sub__(self, other):
        return self + (-_as_erat(other))

    def __rsub__(self, other):
        return _as_erat(other) - self

    def __mul__(self, other):
        other = _as_erat(other)
        return ERational(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        return ERational(self.num ** n, self.den ** n)

    def reciprocal(self) -> "ERational":
        if self.num.is_zero():
            raise DomainError("division by zero")
        return ERational(self.den, self.num)

    def __eq__(self, other):
        if not isinstance(other, ERational):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash((self.num, self.den))

    def evaluate(self, backend, point):
        widened = getattr(backend, "widened", None)
        if widened is None:
            return self._evaluate(backend, point)
        # p-adic: the expanded numerator and the det power cancel heavily, so
        # evaluate with N guard digits and round the quotient back
        wide = widened(backend.N)
        pt = {k: wide.scalar(backend.scalar(v).to_fraction()) for k, v in point.items()}
        return backend.scalar(self._evaluate(wide, pt).to_fraction())

    def _evaluate(self, backend, point):
        d = backend.eval(self.den, point)
        if backend.is_zero(d):
            raise DomainError("denominator vanishes at the point")
        return backend.eval(self.num, point) / d

    def __repr__(self):
        return f"ERational(({self.num}) / ({self.den}))"


def _as_erat(x) -> ERational:
    return x if isinstance(x, ERational) else ERational.of(x)


# -- derivations -------------------------------------------------------------

def derive(p: EPoly, image: Callable[[VarId], Optional[EPoly]]) -> EPoly:
    """The E-derivation trivial on Q that maps each variable v to image(v).

    On group-ring terms: d(P * E(a)) = (dP + P * da) * E(a).
    """
    memo: Dict[EPoly, EPoly] = {}
    pmemo: Dict[Poly, EPoly] = {}

    def dpoly(P: Poly) -> EPoly:
        hit = pmemo.get(P)
        if hit is not None:
            return hit
        out = ZERO
        for v in sorted(P.variables()):
            img = image(v)
            if img is None or img.is_zero():
                continue
            dP = P.derive(lambda u, v=v: _POLY_ONE if u == v else None)
            out = out + EPoly.from_poly(dP) * img
        pmemo[P] = out
        return out

    def go(q: EPoly) -> EPoly:
        hit = memo.get(q)
        if hit is not None:
            return hit
        out = ZERO
        for a, P in q.terms.items():
            coef = dpoly(P)
            if a.terms:
                da = go(a)
                if not da.is_zero():
                    coef = coef + EPoly.from_poly(P) * da
                if not coef.is_zero():
                    coef = coef * exp_apply(a)
            out = out + coef
        memo[q] = out
        return out

    return go(EPoly.coerce(p))


_POLY_ONE = Poly.constant(1)


def partial_derivative(p: EPoly, v: VarId) -> EPoly:
    p = EPoly.coerce(p)
    if v not in p.variables():
        return ZERO
    return derive(p, lambda u: ONE if u == v else None)


def delta_shift(p: EPoly, only: Optional[Callable[[VarId], bool]] = None) -> EPoly:
    """Total delta-lift: sum over variables v of d_v p * succ(v).

    ``only`` restricts the sum to variables satisfying the predicate.
    """
    def image(v):
        if only is not None and not only(v):
            return None
        return EPoly.coerce(v.succ())

    return derive(p, image)


def parameter_shift(p: EPoly, unknowns: Sequence[VarId]) -> EPoly:
    """f^delta: the slice of delta_shift(p) over everything but the unknowns."""
    unk = set(unknowns)
    return delta_shift(p, only=lambda v: v not in unk)


# -- Jacobians ---------------------------------------------------------------

def jacobian(fs: Sequence[EPoly], variables: Sequence[VarId]) -> List[List[EPoly]]:
    return [[partial_derivative(f, v) for v in variables] for f in fs]


class _Minors:
    """Memoized Laplace expansion over an EPoly matrix."""

    def __init__(self, M):
        self.M = M
        self.memo = {}

    def det(self, rows: Tuple[int, ...], cols: Tuple[int, ...]) -> EPoly:
        if not rows:
            return ONE
        key = (rows, cols)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        r, rest = rows[0], rows[1:]
        out = ZERO
        for k, c in enumerate(cols):
            entry = self.M[r][c]
            if entry.is_zero():
                continue
            sub = self.det(rest, cols[:k] + cols[k + 1:])
            if sub.is_zero():
                continue
            term = entry * sub
            out = out + term if k % 2 == 0 else out - term
        self.memo[key] = out
        return out


def _check_square(M):
    n = len(M)
    if any(len(row) != n for row in M):
        raise ShapeError(f"matrix is not square ({n} rows)")
    return n


def matrix_det(M: Sequence[Sequence[EPoly]]) -> EPoly:
    n = _check_square(M)
    return _Minors(M).det(tuple(range(n)), tuple(range(n)))


def adjugate(M: Sequence[Sequence[EPoly]]) -> List[List[EPoly]]:
    n = _check_square(M)
    mins = _Minors(M)
    idx = tuple(range(n))
    adj = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            m = mins.det(idx[:i] + idx[i + 1:], idx[:j] + idx[j + 1:])
            adj[j][i] = m if (i + j) % 2 == 0 else -m
    return adj


def jacobian_det(fs: Sequence[EPoly], variables: Sequence[VarId]) -> EPoly:
    if len(fs) != len(variables):
        raise ShapeError(f"{len(fs)} polynomials but {len(variables)} variables")
    return matrix_det(jacobian(fs, variables))


def gradient_slice(f: EPoly, variables: Sequence[VarId], indices: Sequence[int]) -> List[EPoly]:
    """Partials of f along variables[i] for i in indices (0-based, increasing)."""
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise ValueError("slice indices must be strictly increasing")
    out = []
    for i in indices:
        if i < 0 or i >= len(variables):
            raise IndexError(f"slice index {i} out of range")
        out.append(partial_derivative(f, variables[i]))
    return out


# -- Khovanskii systems ------------------------------------------------------

@dataclass(frozen=True)
class VarPartition:
    unknowns: Tuple[VarId, ...]
    parameters: Tuple[VarId, ...]

    def __post_init__(self):
        if set(self.unknowns) & set(self.parameters):
            raise ShapeError("unknowns and parameters overlap")


@dataclass(frozen=True)
class KhovanskiiSystem:
    polys: Tuple[EPoly, ...]
    unknowns: Tuple[VarId, ...]
    parameters: Tuple[VarId, ...]
    jac_det: EPoly
    _cache: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    @property
    def n(self):
        return len(self.polys)

    def jac(self):
        if "jac" not in self._cache:
            self._cache["jac"] = jacobian(self.polys, self.unknowns)
        return self._cache["jac"]

    def adj(self):
        if "adj" not in self._cache:
            self._cache["adj"] = adjugate(self.jac())
        return self._cache["adj"]

    def verify_cache(self) -> bool:
        return matrix_det(self.jac()) == self.jac_det


def khovanskii_build(fs, unknowns, parameters=()) -> KhovanskiiSystem:
    fs = tuple(EPoly.coerce(f) for f in fs)
    unknowns = tuple(unknowns)
    if len(fs) != len(unknowns):
        raise ShapeError(f"{len(fs)} polynomials but {len(unknowns)} unknowns")
    if len(set(unknowns)) != len(unknowns):
        raise ShapeError("repeated unknown")
    known = set(unknowns)
    others = set()
    for f in fs:
        others |= set(f.variables()) - known
    if not parameters:
        parameters = sorted(others)
    parameters = tuple(parameters)
    VarPartition(unknowns, parameters)
    allowed = set(parameters)
    for v in others:
        if v not in allowed and not _is_param_successor(v, allowed):
            raise ShapeError(f"variable {v.name} is neither unknown nor parameter")
    J = jacobian(fs, unknowns)
    sys_ = KhovanskiiSystem(fs, unknowns, parameters, matrix_det(J))
    sys_._cache["jac"] = J
    return sys_


def _is_param_successor(v: VarId, params) -> bool:
    return any(p.base == v.base and p.order <= v.order for p in params)


def propagate_symbolic(H: KhovanskiiSystem, levels: int) -> List[List[ERational]]:
    """Rational expressions for delta^k of each unknown, k = 1..levels.

    Level 1 solves J * du = -f^delta with the adjugate.  Each later level
    differentiates the previous one, replacing unknown successors by the
    level-1 expressions and parameters by their successors.  The level-k
    denominator is jac_det ** (2k - 1).
    """
    if levels < 1:
        raise ValueError("need at least one level")
    det = H.jac_det
    if det.is_zero():
        raise SingularJacobian("symbolic Jacobian determinant is zero")
    unk = H.unknowns
    n = len(unk)
    fdelta = [parameter_shift(f, unk) for f in H.polys]
    adj = H.adj()
    N1 = []
    for i in range(n):
        s = ZERO
        for j in range(n):
            if not adj[i][j].is_zero() and not fdelta[j].is_zero():
                s = s + adj[i][j] * fdelta[j]
        N1.append(-s)
    out = [[ERational(N1[i], det) for i in range(n)]]

    def total(p: EPoly) -> EPoly:
        """det * delta(p), with unknown successors replaced by N1 / det."""
        acc = det * parameter_shift(p, unk)
        for u, Nu in zip(unk, N1):
            if Nu.is_zero():
                continue
            d = partial_derivative(p, u)
            if not d.is_zero():
                acc = acc + d * Nu
        return acc

    B = total(det)
    nums, e = N1, 1
    for _ in range(levels - 1):
        new = []
        for num in nums:
            A = total(num)
            new.append(A * det - EPoly.coerce(e) * num * B)
        nums, e = new, e + 2
        den = det ** e
        out.append([ERational(q, den) for q in nums])
    return out


# -- torsors -----------------------------------------------------------------

def _merge_point(point, parameter_jet):
    vals = {}
    if parameter_jet is not None:
        vals.update(parameter_jet.items() if hasattr(parameter_jet, "items") else parameter_jet)
    vals.update(point.items() if hasattr(point, "items") else point)
    return vals


def torsor_residual(generators, point, tangent, parameter_jet, backend) -> list:
    """Residuals sum_i d_{u_i} f(a) b_i + f^delta(a) for each generator f.

    The unknowns u_i are the keys of ``tangent``; every other variable is a
    parameter whose successors are read from ``parameter_jet``.
    """
    unk = list(tangent.keys())
    vals = _merge_point(point, parameter_jet)
    out = []
    for f in generators:
        f = EPoly.coerce(f)
        r = backend.eval(parameter_shift(f, unk), vals)
        for u in unk:
            d = partial_derivative(f, u)
            if not d.is_zero():
                r = r + backend.eval(d, vals) * tangent[u]
        out.append(r)
    return out


def torsor_member(generators, point, tangent, parameter_jet, backend, tol=None):
    """(member, residuals, values); tol defaults to the backend's own."""
    vals = _merge_point(point, parameter_jet)
    values = [backend.eval(EPoly.coerce(f), vals) for f in generators]
    res = torsor_residual(generators, point, tangent, parameter_jet, backend)
    ok = all(backend.residual_ok(x, tol) for x in values + res)
    return ok, res, values


def solve_dependent_jet(fs, point, free_tangents, dependent, parameter_jet, backend):
    """Tangent values for the dependent unknowns making every torsor residual 0.

    b_dep = -J_dep^{-1} (f^delta(a) + sum_free d_free f(a) b_free)
    """
    fs = [EPoly.coerce(f) for f in fs]
    dependent = list(dependent)
    if len(fs) != len(dependent):
        raise ShapeError(f"{len(fs)} equations for {len(dependent)} dependent unknowns")
    unk = dependent + [v for v in free_tangents if v not in dependent]
    vals = _merge_point(point, parameter_jet)
    J = [[backend.eval(partial_derivative(f, v), vals) for v in dependent] for f in fs]
    rhs = []
    for f in fs:
        r = backend.eval(parameter_shift(f, unk), vals)
        for v, b in free_tangents.items():
            d = partial_derivative(f, v)
            if not d.is_zero():
                r = r + backend.eval(d, vals) * b
        rhs.append(-r)
    sol = backend.solve(J, rhs)
    return dict(zip(dependent, sol))
