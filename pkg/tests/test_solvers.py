import math
import random
from fractions import Fraction
from math import factorial

import pytest

from expderiv.backends import Jet, PadicBackend, Point, RealBackend, ToleranceSpec, make_backend
from expderiv.differential import khovanskii_build, partial_derivative
from expderiv.epoly import VarId, exp_apply, var
from expderiv.errors import DomainError, HenselConditionFailed, NoConvergence, ShapeError, SingularJacobian
from expderiv.padic import PadicScalar, vp
from expderiv.solvers import (
    hensel_solve,
    khovanskii_check,
    neighborhood_check,
    newton_solve,
    propagate_numeric,
    regular_point_check,
)
from gen import VARS, rand_epoly

E = exp_apply
X, x, y, c = var("X"), var("x"), var("y"), var("c")
vX, vx, vy, vc = VarId("X"), VarId("x"), VarId("y"), VarId("c")
real = RealBackend()


# -- evaluation ---------------------------------------------------------------

def test_eval_examples():
    assert abs(real.eval(E(X) - 2, {vX: 0.6931472})) <= 1e-6
    assert real.eval(X * X + 1, {vX: 0.0}) == 1.0
    with pytest.raises(OverflowError):
        real.eval(E(X), {vX: 1e4})
    with pytest.raises(ShapeError):
        real.eval(X + y, {vX: 1.0})


def test_eval_padic_exp():
    Q5 = PadicBackend(5, 8)
    got = Q5.eval(E(X), {vX: 5})
    s = sum(Fraction(5) ** i / factorial(i) for i in range(60))
    assert got.residue() == s.numerator * pow(s.denominator, -1, 5 ** 8) % 5 ** 8
    # homomorphism E(2X) = E(X)^2
    assert Q5.eval(E(2 * X), {vX: 5}).agrees(got * got, 6)
    with pytest.raises(DomainError):
        Q5.eval(E(X), {vX: Fraction(1, 5)})


def test_eval_homomorphism_real_and_padic():
    rng = random.Random(2)
    Q7 = PadicBackend(7, 12)
    for _ in range(30):
        p, q = rand_epoly(rng, 2), rand_epoly(rng, 2)
        pt = {v: rng.uniform(-0.5, 0.5) for v in VARS}
        a, b = real.eval(p, pt), real.eval(q, pt)
        assert math.isclose(real.eval(p * q, pt), a * b, rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(real.eval(p + q, pt), a + b, rel_tol=1e-9, abs_tol=1e-9)
        ppt = {v: 7 * rng.randrange(7 ** 6) for v in VARS}
        try:
            a, b = Q7.eval(p, ppt), Q7.eval(q, ppt)
        except DomainError:
            continue  # an exponent with a 7 in a denominator leaves the E-domain
        assert Q7.eval(p * q, ppt).agrees(a * b, 10)
        assert Q7.eval(p + q, ppt).agrees(a + b, 10)


def test_gradient_matches_finite_differences():
    rng = random.Random(9)
    checked = 0
    while checked < 40:
        p = rand_epoly(rng, 2)
        v = rng.choice(VARS)
        pt = {w: rng.uniform(-1, 1) for w in VARS}
        d = real.eval(partial_derivative(p, v), pt)
        if not (1e-3 <= abs(d) <= 1e4):
            continue
        up, dn = dict(pt), dict(pt)
        up[v] += 1e-6
        dn[v] -= 1e-6
        fd = (real.eval(p, up) - real.eval(p, dn)) / 2e-6
        assert abs(fd - d) <= 1e-5 * abs(d)
        checked += 1


def test_backend_factory():
    assert isinstance(make_backend("real"), RealBackend)
    b = make_backend("padic", p=3, N=7)
    assert (b.p, b.N) == (3, 7)
    with pytest.raises(ValueError):
        make_backend("padic")
    with pytest.raises(ValueError):
        PadicBackend(4, 5)


def test_padic_linear_algebra():
    Q5 = PadicBackend(5, 10)
    A = [[Q5.scalar(5), Q5.scalar(1)], [Q5.scalar(1), Q5.scalar(2)]]
    assert Q5.det(A) == Q5.scalar(9)
    sol = Q5.solve(A, [Q5.scalar(1), Q5.scalar(0)])
    # exact solution (2/9, -1/9)
    assert sol[0].agrees(Q5.scalar(Fraction(2, 9)), 9)
    assert sol[1].agrees(Q5.scalar(Fraction(-1, 9)), 9)
    with pytest.raises(SingularJacobian):
        Q5.solve([[Q5.scalar(1), Q5.scalar(2)], [Q5.scalar(2), Q5.scalar(4)]], [Q5.one(), Q5.one()])


# -- Newton -------------------------------------------------------------------

def test_newton_examples():
    pt = newton_solve([y * y - c], [vy], [vc], {vy: 1.4, vc: 2.0})
    assert pt[vy] == pytest.approx(math.sqrt(2), abs=1e-12)
    assert abs(real.eval(y * y - c, pt)) <= 1e-10
    assert pt[vc] == 2.0
    pt = newton_solve([E(y) - 2], [vy], [], {vy: 0.7})
    assert pt[vy] == pytest.approx(0.6931472, abs=1e-7)
    assert abs(real.eval(E(y) - 2, pt)) <= 1e-10
    with pytest.raises(SingularJacobian):
        newton_solve([y * y], [vy], [], {vy: 0.0})
    with pytest.raises(NoConvergence):
        newton_solve([y * y + 1], [vy], [], {vy: 0.5})


def test_newton_system():
    # circle meets exponential curve near (0.6, 0.8)
    a, b = VarId("a"), VarId("b")
    fs = [var("a") ** 2 + var("b") ** 2 - 1, var("b") - E(var("a")) + 1]
    pt = newton_solve(fs, [a, b], [], {a: 0.5, b: 0.7})
    assert all(abs(real.eval(f, pt)) <= 1e-12 for f in fs)


# -- Hensel -------------------------------------------------------------------

@pytest.mark.parametrize("N", [8, 10, 16])
def test_hensel_sqrt17_2adic(N):
    Q2 = PadicBackend(2, N)
    pt = hensel_solve([x * x - 17], [vx], [], {vx: 1}, Q2)
    root = pt[vx]
    assert root.residue(2) == 1
    assert Q2.eval(x * x - 17, pt).valuation >= N


def test_hensel_sqrt2_7adic():
    Q7 = PadicBackend(7, 10)
    root = hensel_solve([x * x - 2], [vx], [], {vx: 3}, Q7)[vx]
    assert root.residue(1) == 3
    r = root.residue()
    assert (r * r - 2) % 7 ** 10 == 0


def test_hensel_nonresidue_fails():
    Q5 = PadicBackend(5, 10)
    for seed in range(5):
        with pytest.raises(HenselConditionFailed):
            hensel_solve([x * x - 3], [vx], [], {vx: seed}, Q5)


def _brute_force_lifts(f, seed, p, dv):
    """Roots mod p^3 of f congruent to seed mod p^(dv+1), by exhaustive search.

    A residue r mod p^3 is kept when some r' = r mod p^3 solves f mod
    p^(3+2dv); this avoids counting spurious roots produced by the derivative.
    """
    M = 3 + 2 * dv
    mod = p ** M
    keep = set()
    for r in range(mod):
        if (r - seed) % p ** (dv + 1) == 0 and f(r) % mod == 0:
            keep.add(r % p ** 3)
    return keep


@pytest.mark.parametrize("p, a, seed", [(2, 17, 1), (2, 41, 3), (5, 6, 1), (5, 11, 4), (7, 2, 3), (7, 2, 4)])
def test_hensel_lift_is_unique(p, a, seed):
    B = PadicBackend(p, 12)
    root = hensel_solve([x * x - a], [vx], [], {vx: seed}, B)[vx]
    dv = vp(2 * seed, p)
    assert _brute_force_lifts(lambda r: r * r - a, seed, p, dv) == {root.residue(3)}


def test_hensel_system():
    # x^2 + y = 6, y = x has the root (2, 2); seed it off by multiples of 7
    Q7 = PadicBackend(7, 12)
    fs = [x * x + y - 6, y - x]
    pt = hensel_solve(fs, [vx, vy], [], {vx: 2 + 49, vy: 2 - 7}, Q7)
    assert all(Q7.eval(f, pt).valuation >= 12 for f in fs)
    assert pt[vx].agrees(Q7.scalar(2), 12) and pt[vy].agrees(Q7.scalar(2), 12)


# -- Khovanskii check, regularity, propagation, neighborhoods -----------------

def test_khovanskii_check_examples():
    H = khovanskii_build([E(x) - 2], [vx])
    rep = khovanskii_check(H, {vx: 0.6931472})
    assert rep.verdict and rep.det == pytest.approx(2, abs=1e-6)
    assert rep.dim_bound == 0
    rep = khovanskii_check(khovanskii_build([x * x], [vx]), {vx: 0.0})
    assert not rep.verdict and rep.det == 0
    Q2 = PadicBackend(2, 10)
    root = hensel_solve([x * x - 17], [vx], [], {vx: 1}, Q2)
    rep = khovanskii_check(khovanskii_build([x * x - 17], [vx]), root, Q2)
    assert rep.verdict and rep.det.valuation == 1
    rep = khovanskii_check(khovanskii_build([y * y - c], [vy], [vc]), {vy: 2.0, vc: 4.0})
    assert rep.verdict and rep.dim_bound == 1


def test_regular_point_check_examples():
    x1, x2 = VarId("x1"), VarId("x2")
    g = var("x1") ** 2 + var("x2") ** 2 - 1
    assert regular_point_check([g], [x1, x2], [0, 1], {x1: 0.6, x2: 0.8})
    assert not regular_point_check([g], [x1, x2], [0, 1], {x1: 0.0, x2: 0.0})
    assert not regular_point_check([g, g], [x1, x2], [0, 1], {x1: 0.6, x2: 0.8})
    assert not regular_point_check([g, g], [x1, x2], [0], {x1: 0.6, x2: 0.8})
    Q5 = PadicBackend(5, 10)
    assert regular_point_check([g], [x1, x2], [0, 1], {x1: 3, x2: 4}, Q5)


def test_propagate_numeric_examples():
    H = khovanskii_build([y * y - c], [vy], [vc])
    jet = propagate_numeric(H, {vy: 2.0, vc: 4.0}, {VarId("c", 1): 1.0}, 1)
    assert jet[vy] == 2.0 and jet[VarId("y", 1)] == pytest.approx(0.25)
    jet = propagate_numeric(H, {vy: 2.0, vc: 4.0}, {VarId("c", k): 0.0 for k in (1, 2, 3)}, 3)
    assert all(jet[VarId("y", k)] == 0 for k in (1, 2, 3))
    H = khovanskii_build([E(y) - c], [vy], [vc])
    jet = propagate_numeric(H, {vy: math.log(2), vc: 2.0}, {VarId("c", 1): 1.0, VarId("c", 2): 0.0}, 2)
    assert jet[VarId("y", 1)] == pytest.approx(0.5)
    assert jet[VarId("y", 2)] == pytest.approx(-0.25)


def test_propagate_numeric_padic():
    # y^2 = c over Q_7 with c = 2 and c' = 1: y' = 1/(2y)
    Q7 = PadicBackend(7, 12)
    H = khovanskii_build([y * y - c], [vy], [vc])
    root = hensel_solve(H.polys, [vy], [vc], {vy: 3, vc: 2}, Q7)
    jet = propagate_numeric(H, root, {VarId("c", 1): 1}, 1, Q7)
    assert (jet[VarId("y", 1)] * 2 * root[vy]).agrees(Q7.one(), 10)


def test_neighborhood_examples():
    a = Jet({VarId("x"): 1.0, VarId("x", 1): 2.0})
    assert neighborhood_check(a, a)
    b = Jet({VarId("x"): 2.0, VarId("x", 1): 2.0})
    assert not neighborhood_check(a, b, RealBackend(), ToleranceSpec(radius=0.5))
    Q3 = PadicBackend(3, 10, ToleranceSpec(nbhd_min_val=4))
    u = Jet({VarId("x"): Q3.scalar(1)})
    w = Jet({VarId("x"): Q3.scalar(1 + 3 ** 4)})
    assert neighborhood_check(u, w, Q3)
    assert not neighborhood_check(u, Jet({VarId("x"): Q3.scalar(1 + 3 ** 3)}), Q3)
    with pytest.raises(Exception):
        neighborhood_check(a, Jet({VarId("x"): 1.0}))


def test_point_and_jet_containers():
    p = Point({"x": 1.0}, y=2.0)
    assert p["x"] == 1.0 and p[VarId("y")] == 2.0
    j = Jet({VarId("x"): 1.0, VarId("x", 1): 0.0})
    assert j.order == 1 and j.is_total(["x"])
    assert not j.is_total(["x", "y"])
