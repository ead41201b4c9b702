"""Numeric fields for evaluating E-polynomials: floats (E = exp) and Q_p (E = exp on pZ_p).

A backend bundles scalar construction, homomorphic evaluation, small dense
linear algebra and the tolerance predicates used by every verifier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Dict, Iterable, Mapping, Optional

import numpy as np

from .epoly import EPoly, Poly, VarId
from .errors import DomainError, ShapeError, SingularJacobian
from .padic import PadicScalar, exp_padic, is_prime


@dataclass(frozen=True)
class ToleranceSpec:
    eps_res: float = 1e-6
    eps_reg: float = 1e-9
    radius: float = 1e-2
    # p-adic counterparts; None means "derive from the precision N"
    res_min_val: Optional[int] = None
    reg_max_val: Optional[int] = None
    nbhd_min_val: int = 1

    def __post_init__(self):
        for name in ("eps_res", "eps_reg", "radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("res_min_val", "reg_max_val", "nbhd_min_val"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be nonnegative")

    def with_(self, **kw) -> "ToleranceSpec":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


class Point(Mapping):
    """Immutable assignment VarId -> scalar."""

    def __init__(self, values=(), **named):
        d = dict(values.items() if hasattr(values, "items") else values)
        for k, v in named.items():
            d[VarId.from_name(k)] = v
        self._d = {(k if isinstance(k, VarId) else VarId.from_name(k)): v for k, v in d.items()}

    def __getitem__(self, k):
        if isinstance(k, str):
            k = VarId.from_name(k)
        return self._d[k]

    def __iter__(self):
        return iter(self._d)

    def __len__(self):
        return len(self._d)

    def __hash__(self):
        return hash(frozenset(self._d.items()))

    def __eq__(self, other):
        if isinstance(other, Mapping):
            return dict(self.items()) == dict(other.items())
        return NotImplemented

    def merged(self, other) -> "Point":
        d = dict(self._d)
        d.update(other)
        return type(self)(d)

    def __repr__(self):
        inner = ", ".join(f"{k.name}={v}" for k, v in sorted(self._d.items()))
        return f"{type(self).__name__}({inner})"


class Jet(Point):
    """Values of delta^j(x) for j <= order, keyed by VarId(x, j)."""

    def __init__(self, values=(), order: Optional[int] = None, **named):
        super().__init__(values, **named)
        top = max((k.order for k in self._d), default=0)
        self.order = top if order is None else order
        if top > self.order:
            raise ShapeError(f"jet entry of order {top} exceeds declared order {self.order}")

    def bases(self):
        out = []
        for k in sorted(self._d, key=lambda v: (v.order, v.base)):
            if k.base not in out:
                out.append(k.base)
        return out

    def is_total(self, bases: Iterable[str]) -> bool:
        return all(VarId(b, j) in self._d for b in bases for j in range(self.order + 1))

    def merged(self, other) -> "Jet":
        d = dict(self._d)
        d.update(other)
        order = max(self.order, getattr(other, "order", 0))
        return Jet(d, order=max(order, max((k.order for k in d), default=0)))


class _Evaluator:
    """Shared homomorphic evaluation with per-call memoization of exponents."""

    def _eval_poly(self, P: Poly, point):
        total = self.zero()
        for mono, c in P.terms.items():
            t = self.scalar(c)
            for v, e in mono:
                try:
                    x = point[v]
                except KeyError:
                    raise ShapeError(f"point does not bind {v.name}") from None
                t = t * (self.scalar(x) ** e)
            total = total + t
        return total

    def eval(self, p, point):
        p = EPoly.coerce(p)
        memo: Dict[EPoly, object] = {}

        def go(q: EPoly):
            hit = memo.get(q)
            if hit is not None:
                return hit
            total = self.zero()
            for a, P in q.terms.items():
                t = self._eval_poly(P, point)
                if a.terms:
                    t = t * self.exp(go(a))
                total = total + t
            memo[q] = self.check(total)
            return memo[q]

        return go(p)

    def eval_matrix(self, M, point):
        return [[self.eval(e, point) for e in row] for row in M]

    def check(self, x):
        return x


class RealBackend(_Evaluator):
    name = "real"

    def __init__(self, tol: Optional[ToleranceSpec] = None):
        self.tol = tol or ToleranceSpec()

    def with_tol(self, tol):
        return RealBackend(tol)

    def scalar(self, x) -> float:
        return float(x)

    def zero(self):
        return 0.0

    def one(self):
        return 1.0

    def exp(self, x):
        return math.exp(x)

    def check(self, x):
        if not math.isfinite(x):
            raise OverflowError("non-finite value during evaluation")
        return x

    def is_zero(self, x):
        return x == 0

    def size(self, x) -> float:
        return abs(x)

    def residual_ok(self, x, tol=None) -> bool:
        tol = tol or self.tol
        return abs(x) <= tol.eps_res

    def regular_ok(self, d, tol=None) -> bool:
        tol = tol or self.tol
        return abs(d) >= tol.eps_reg

    def close(self, a, b, tol=None) -> bool:
        tol = tol or self.tol
        return abs(a - b) <= tol.radius

    def distance(self, a, b):
        return abs(a - b)

    def det(self, M) -> float:
        if not M:
            return 1.0
        return float(np.linalg.det(np.array(M, dtype=float)))

    def solve(self, A, b):
        if not A:
            return []
        A = np.array(A, dtype=float)
        b = np.array(b, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ShapeError("linear solve needs a square matrix")
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] < self.tol.eps_reg:
            raise SingularJacobian(f"smallest singular value {s[-1]:.3g} below {self.tol.eps_reg:g}")
        return [float(x) for x in np.linalg.solve(A, b)]

    def rank_ok(self, M, tol=None) -> bool:
        """Full row rank with smallest singular value above the floor."""
        tol = tol or self.tol
        rows = len(M)
        if rows == 0:
            return True
        A = np.array(M, dtype=float)
        if A.shape[1] < rows:
            return False
        s = np.linalg.svd(A, compute_uv=False)
        return bool(s[rows - 1] >= tol.eps_reg)

    def format(self, x) -> str:
        return repr(float(x))

    def parse(self, text: str) -> float:
        try:
            return float(Fraction(text.strip())) if "/" in text else float(text)
        except ValueError:
            raise ValueError(f"malformed real scalar {text!r}") from None

    def header(self) -> str:
        return "backend=real"


class PadicBackend(_Evaluator):
    name = "padic"

    def __init__(self, p: int, N: int, tol: Optional[ToleranceSpec] = None):
        if not is_prime(p):
            raise ValueError(f"p = {p} is not prime")
        if N < 1:
            raise ValueError("precision must be positive")
        self.p = p
        self.N = N
        self.tol = tol or ToleranceSpec()

    def with_tol(self, tol):
        return PadicBackend(self.p, self.N, tol)

    def widened(self, extra: int) -> "PadicBackend":
        """Same field with ``extra`` more digits of precision."""
        return PadicBackend(self.p, self.N + extra, self.tol)

    @property
    def res_min_val(self):
        return self.tol.res_min_val if self.tol.res_min_val is not None else self.N

    @property
    def reg_max_val(self):
        return self.tol.reg_max_val if self.tol.reg_max_val is not None else self.N // 2

    def scalar(self, x) -> PadicScalar:
        if isinstance(x, PadicScalar):
            if (x.p, x.N) != (self.p, self.N):
                raise ValueError("scalar belongs to a different p-adic field")
            return x
        if isinstance(x, float):
            x = Fraction(x)
        return PadicScalar.from_fraction(self.p, self.N, x)

    def zero(self):
        return PadicScalar.zero(self.p, self.N)

    def one(self):
        return PadicScalar(self.p, self.N, 0, 1)

    def exp(self, x):
        return exp_padic(x)

    def is_zero(self, x):
        return x.is_zero()

    def size(self, x) -> float:
        return abs(x)

    def residual_ok(self, x, tol=None) -> bool:
        mv = tol.res_min_val if tol is not None and tol.res_min_val is not None else self.res_min_val
        return x.valuation >= mv

    def regular_ok(self, d, tol=None) -> bool:
        mx = tol.reg_max_val if tol is not None and tol.reg_max_val is not None else self.reg_max_val
        return d.valuation <= mx

    def close(self, a, b, tol=None) -> bool:
        tol = tol or self.tol
        return (self.scalar(a) - self.scalar(b)).valuation >= tol.nbhd_min_val

    def distance(self, a, b):
        return abs(self.scalar(a) - self.scalar(b))

    def _eliminate(self, A, b=None):
        """Gaussian elimination pivoting on minimal valuation; returns (det, x)."""
        n = len(A)
        M = [list(map(self.scalar, row)) for row in A]
        rhs = list(map(self.scalar, b)) if b is not None else None
        det = self.one()
        for col in range(n):
            piv = min(range(col, n), key=lambda r: M[r][col].valuation)
            if M[piv][col].is_zero():
                return self.zero(), None
            if piv != col:
                M[col], M[piv] = M[piv], M[col]
                if rhs is not None:
                    rhs[col], rhs[piv] = rhs[piv], rhs[col]
                det = -det
            pv = M[col][col]
            det = det * pv
            for r in range(col + 1, n):
                if M[r][col].is_zero():
                    continue
                f = M[r][col] / pv
                for c in range(col, n):
                    M[r][c] = M[r][c] - f * M[col][c]
                if rhs is not None:
                    rhs[r] = rhs[r] - f * rhs[col]
        if rhs is None:
            return det, None
        x = [self.zero()] * n
        for r in range(n - 1, -1, -1):
            s = rhs[r]
            for c in range(r + 1, n):
                s = s - M[r][c] * x[c]
            x[r] = s / M[r][r]
        return det, x

    def det(self, M):
        if not M:
            return self.one()
        return self._eliminate(M)[0]

    def solve(self, A, b):
        if not A:
            return []
        if any(len(row) != len(A) for row in A):
            raise ShapeError("linear solve needs a square matrix")
        det, x = self._eliminate(A, b)
        if x is None or det.valuation > self.N - 1:
            raise SingularJacobian("p-adic matrix is singular at this precision")
        return x

    def rank_ok(self, M, tol=None) -> bool:
        """Some maximal minor has valuation at most the regularity threshold."""
        from itertools import combinations

        rows = len(M)
        if rows == 0:
            return True
        cols = len(M[0])
        if cols < rows:
            return False
        best = math.inf
        for sel in combinations(range(cols), rows):
            sub = [[row[c] for c in sel] for row in M]
            best = min(best, self.det(sub).valuation)
        return self.regular_ok(PadicScalar(self.p, self.N, best, 1) if best < math.inf else self.zero(), tol)

    def format(self, x) -> str:
        return str(self.scalar(x))

    def parse(self, text: str) -> PadicScalar:
        return PadicScalar.parse(text, self.p, self.N)

    def header(self) -> str:
        return f"p={self.p} N={self.N}"


def make_backend(kind: str = "real", p: Optional[int] = None, N: Optional[int] = None, tol=None):
    if kind == "real":
        return RealBackend(tol)
    if kind == "padic":
        if p is None:
            raise ValueError("the p-adic backend needs --p")
        return PadicBackend(p, N if N is not None else 20, tol)
    raise ValueError(f"unknown backend {kind!r}")


def eval_epoly(p: EPoly, pt, backend=None):
    """Evaluate p at pt over the backend (real by default)."""
    return (backend or RealBackend()).eval(p, pt)
