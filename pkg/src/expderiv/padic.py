"""Fixed relative precision p-adic numbers and the restricted exponential.

A nonzero value is ``p^v * u`` with ``u`` a unit known modulo ``p^N``.
Arithmetic keeps N significant digits, like floating point; digits lost to
cancellation are padded with zeros, so comparisons after long computations
should allow a little slack (see :meth:`PadicScalar.agrees`).
"""

from __future__ import annotations

import math
import re
from fractions import Fraction

from .errors import DomainError


def vp(n: int, p: int) -> int:
    """p-adic valuation of a nonzero integer."""
    if n == 0:
        raise ValueError("valuation of 0")
    n = abs(n)
    k = 0
    while n % p == 0:
        n //= p
        k += 1
    return k


def vp_factorial(i: int, p: int) -> int:
    """Legendre's formula: v_p(i!) = sum_k floor(i / p^k)."""
    s, q = 0, p
    while q <= i:
        s += i // q
        q *= p
    return s


def is_prime(p: int) -> bool:
    if p < 2:
        return False
    return all(p % d for d in range(2, math.isqrt(p) + 1))


class PadicScalar:
    __slots__ = ("p", "N", "v", "u")

    def __init__(self, p: int, N: int, v, u: int):
        # zero is u == 0 (v is then ignored and stored as None)
        self.p = p
        self.N = N
        if u == 0:
            self.v, self.u = None, 0
        else:
            self.v, self.u = v, u % (p ** N)

    # -- construction ------------------------------------------------------
    @classmethod
    def zero(cls, p, N):
        return cls(p, N, None, 0)

    @classmethod
    def from_fraction(cls, p: int, N: int, q) -> "PadicScalar":
        q = Fraction(q)
        if q == 0:
            return cls.zero(p, N)
        a, b = q.numerator, q.denominator
        va, vb = vp(a, p), vp(b, p)
        a //= p ** va
        b //= p ** vb
        mod = p ** N
        return cls(p, N, va - vb, a * pow(b, -1, mod) % mod)

    @classmethod
    def from_int(cls, p, N, n: int):
        return cls.from_fraction(p, N, n)

    def _like(self, v, u):
        return PadicScalar(self.p, self.N, v, u)

    def _coerce(self, other) -> "PadicScalar":
        if isinstance(other, PadicScalar):
            if other.p != self.p or other.N != self.N:
                raise ValueError("mixing p-adic scalars of different p or precision")
            return other
        if isinstance(other, (int, Fraction)):
            return PadicScalar.from_fraction(self.p, self.N, other)
        return NotImplemented

    # -- queries -----------------------------------------------------------
    def is_zero(self) -> bool:
        return self.u == 0

    @property
    def valuation(self):
        return math.inf if self.u == 0 else self.v

    def residue(self, k=None) -> int:
        """Integer representative mod p^k (default N); needs v >= 0."""
        k = self.N if k is None else k
        if self.u == 0:
            return 0
        if self.v < 0:
            raise DomainError("not a p-adic integer")
        return (self.p ** self.v * self.u) % (self.p ** k)

    def to_fraction(self) -> Fraction:
        if self.u == 0:
            return Fraction(0)
        return Fraction(self.u) * Fraction(self.p) ** self.v

    def agrees(self, other, k: int) -> bool:
        """v(self - other) >= k."""
        return (self - other).valuation >= k

    def rel_agrees(self, other, k: int) -> bool:
        """v(self - other) - v(self) >= k; both zero counts as agreement."""
        d = self - other
        if d.is_zero():
            return True
        if self.is_zero():
            return False
        return d.valuation - self.valuation >= k

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.u == 0:
            return other
        if other.u == 0:
            return self
        p, N = self.p, self.N
        m = min(self.v, other.v)
        mod = p ** N
        A = 0
        for s in (self, other):
            shift = s.v - m
            if shift < N:
                A += s.u * p ** shift
        A %= mod
        if A == 0:
            return self.zero(p, N)
        k = vp(A, p)
        return self._like(m + k, A // p ** k)

    __radd__ = __add__

    def __neg__(self):
        return self._like(self.v, -self.u)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.u == 0 or other.u == 0:
            return self.zero(self.p, self.N)
        return self._like(self.v + other.v, self.u * other.u)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if other.u == 0:
            raise ZeroDivisionError("p-adic division by zero")
        if self.u == 0:
            return self
        mod = self.p ** self.N
        return self._like(self.v - other.v, self.u * pow(other.u, -1, mod))

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, n: int):
        if n < 0:
            return PadicScalar.from_int(self.p, self.N, 1) / (self ** (-n))
        if self.u == 0:
            return self if n else self._like(0, 1)
        return self._like(self.v * n, pow(self.u, n, self.p ** self.N))

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = PadicScalar.from_fraction(self.p, self.N, other)
        if not isinstance(other, PadicScalar):
            return NotImplemented
        return (self.p, self.N, self.v, self.u) == (other.p, other.N, other.v, other.u)

    def __hash__(self):
        return hash((self.p, self.N, self.v, self.u))

    def __abs__(self):
        """p-adic absolute value p^(-v) as a float (0 for zero)."""
        return 0.0 if self.u == 0 else float(self.p) ** (-self.v)

    # -- text --------------------------------------------------------------
    def __str__(self):
        if self.u == 0:
            return "0"
        return f"{self.p}^{self.v} * {self.u} mod {self.p}^{self.N}"

    def __repr__(self):
        return f"PadicScalar({self})"

    @classmethod
    def parse(cls, text: str, p: int, N: int) -> "PadicScalar":
        text = text.strip()
        if text == "0":
            return cls.zero(p, N)
        m = _PADIC_RE.fullmatch(text)
        if not m:
            # plain rationals are accepted too
            try:
                return cls.from_fraction(p, N, Fraction(text))
            except (ValueError, ZeroDivisionError):
                raise ValueError(f"malformed p-adic scalar {text!r}") from None
        pp, v, u, pn, n = (int(g) for g in m.groups())
        if pp != p or pn != p or n != N:
            raise ValueError(f"scalar {text!r} does not match p={p} N={N}")
        if u % p == 0:
            raise ValueError("unit part must be prime to p")
        return cls(p, N, v, u)


_PADIC_RE = re.compile(r"(\d+)\^(-?\d+)\s*\*\s*(\d+)\s+mod\s+(\d+)\^(\d+)")


def exp_domain_min(p: int) -> int:
    return 2 if p == 2 else 1


def exp_padic(x: PadicScalar) -> PadicScalar:
    """exp(x) = sum x^i / i! for v(x) >= 1 (p odd) or v(x) >= 2 (p = 2)."""
    p, N = x.p, x.N
    if x.is_zero():
        return PadicScalar(p, N, 0, 1)
    if x.v < exp_domain_min(p):
        raise DomainError(f"p-adic E needs valuation >= {exp_domain_min(p)}, got {x.v}")
    mod = p ** N
    v, u = x.v, x.u
    total = 1
    upow = 1
    fact_unit = 1  # p-free part of i!
    i = 0
    while True:
        i += 1
        # every later term has valuation >= i*v - (i-1)/(p-1)
        if i * v - (i - 1) / (p - 1) >= N:
            break
        upow = upow * u % mod
        j = i
        while j % p == 0:
            j //= p
        fact_unit = fact_unit * j % mod
        e = i * v - vp_factorial(i, p)
        if e >= N:
            continue
        total = (total + p ** e * upow * pow(fact_unit, -1, mod)) % mod
    return PadicScalar(p, N, 0, total)


def E_p(u: PadicScalar) -> PadicScalar:
    """The restricted exponential on Z_p: exp(p*u), or exp(4*u) when p = 2."""
    if not u.is_zero() and u.v < 0:
        raise DomainError("E_p is defined on p-adic integers")
    return exp_padic(u * (4 if u.p == 2 else u.p))
