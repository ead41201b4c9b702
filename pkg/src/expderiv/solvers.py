"""Local implicit solving and verification over the numeric backends."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from .backends import Jet, PadicBackend, Point, RealBackend, ToleranceSpec
from .differential import (
    KhovanskiiSystem,
    delta_shift,
    gradient_slice,
    jacobian,
    khovanskii_build,
)
from .epoly import EPoly, VarId
from .errors import (
    HenselConditionFailed,
    NoConvergence,
    ShapeError,
    SingularJacobian,
)

MAX_NEWTON_ITER = 50


def _split(fs, unknowns, parameters, pt0):
    fs = [EPoly.coerce(f) for f in fs]
    unknowns = list(unknowns)
    if len(fs) != len(unknowns):
        raise ShapeError(f"{len(fs)} equations for {len(unknowns)} unknowns")
    vals = dict(pt0)
    for v in unknowns:
        if v not in vals:
            raise ShapeError(f"seed does not bind unknown {v.name}")
    return fs, unknowns, vals


def newton_solve(fs, unknowns, parameters, pt0, tol: float = 1e-12,
                 backend: Optional[RealBackend] = None, max_iter: int = MAX_NEWTON_ITER) -> Point:
    """Plain Newton iteration on the unknowns with every other coordinate fixed."""
    backend = backend or RealBackend()
    fs, unknowns, vals = _split(fs, unknowns, parameters, pt0)
    if not fs:
        return Point(vals)
    J = jacobian(fs, unknowns)
    det0 = backend.det(backend.eval_matrix(J, vals))
    if not abs(det0) >= backend.tol.eps_reg:
        raise SingularJacobian(f"|det J| = {abs(det0):.3g} at the seed is below {backend.tol.eps_reg:g}")
    res0 = None
    for _ in range(max_iter + 1):
        F = [backend.eval(f, vals) for f in fs]
        res = max(abs(x) for x in F)
        if res <= tol:
            return Point(vals)
        if res0 is None:
            res0 = res
        elif not math.isfinite(res) or res > 1e8 * max(res0, 1.0):
            raise NoConvergence(f"Newton diverged (residual {res:.3g})")
        step = backend.solve(backend.eval_matrix(J, vals), [-x for x in F])
        size = max(abs(s) for s in step)
        for v, s in zip(unknowns, step):
            vals[v] = vals[v] + s
        scale = max(1.0, max(abs(vals[v]) for v in unknowns))
        if size <= 1e-15 * scale:
            F = [backend.eval(f, vals) for f in fs]
            res = max(abs(x) for x in F)
            if res <= 1e4 * tol:
                return Point(vals)
            raise NoConvergence(f"Newton stalled at residual {res:.3g}")
    raise NoConvergence(f"no convergence in {max_iter} iterations (residual {res:.3g})")


def hensel_solve(fs, unknowns, parameters, pt0, backend: PadicBackend,
                 max_iter: int = 64) -> Point:
    """Multivariate Hensel lifting: x <- x - J(x)^-1 f(x) until v(f) >= N.

    Requires v(f_i(x0)) > 2 v(det J(x0)) for every i.
    """
    fs, unknowns, vals = _split(fs, unknowns, parameters, pt0)
    vals = {k: backend.scalar(v) for k, v in vals.items()}
    if not fs:
        return Point(vals)
    J = jacobian(fs, unknowns)
    target = backend.res_min_val
    F = [backend.eval(f, vals) for f in fs]
    d = backend.det(backend.eval_matrix(J, vals))
    if d.is_zero():
        raise HenselConditionFailed("Jacobian determinant vanishes at the seed")
    bad = [i for i, x in enumerate(F) if not x.valuation > 2 * d.valuation]
    if bad:
        vals_s = ", ".join(str(F[i].valuation) for i in bad)
        raise HenselConditionFailed(
            f"need v(f) > 2 v(det J) = {2 * d.valuation}; got v(f) = {vals_s}")
    for _ in range(max_iter):
        if all(x.valuation >= target for x in F):
            return Point(vals)
        step = backend.solve(backend.eval_matrix(J, vals), [-x for x in F])
        for v, s in zip(unknowns, step):
            vals[v] = vals[v] + s
        F = [backend.eval(f, vals) for f in fs]
    if all(x.valuation >= target for x in F):
        return Point(vals)
    raise NoConvergence("Hensel iteration did not reach the target valuation")


@dataclass
class KhovanskiiReport:
    values: List
    det: object
    residuals_ok: bool
    regular: bool
    dim_bound: int
    backend: str

    @property
    def verdict(self) -> bool:
        return self.residuals_ok and self.regular


def khovanskii_check(H: KhovanskiiSystem, pt, backend=None, tol: Optional[ToleranceSpec] = None):
    """Evaluate a Khovanskii system at a point: residuals plus det J regularity.

    ``dim_bound`` is the number of free coordinates of the ambient variety
    (total variables minus equations).
    """
    backend = backend or RealBackend()
    tol = tol or backend.tol
    values = [backend.eval(f, pt) for f in H.polys]
    det = backend.eval(H.jac_det, pt)
    nvars = len(set(H.unknowns) | set(H.parameters))
    return KhovanskiiReport(
        values=values,
        det=det,
        residuals_ok=all(backend.residual_ok(x, tol) for x in values),
        regular=backend.regular_ok(det, tol),
        dim_bound=nvars - len(H.polys),
        backend=backend.name,
    )


def regular_point_check(gs, variables, indices, pt, backend=None, tol=None) -> bool:
    """Whether the sliced gradients of gs are linearly independent at pt."""
    backend = backend or RealBackend()
    if len(indices) < len(gs):
        return False
    M = [[backend.eval(d, pt) for d in gradient_slice(EPoly.coerce(g), variables, indices)] for g in gs]
    return backend.rank_ok(M, tol)


def propagate_numeric(H: KhovanskiiSystem, pt, parameter_jet, levels: int, backend=None) -> Jet:
    """Jet of the unknowns up to order ``levels`` by repeated linear solves.

    delta^k(f) is affine in the order-k successors of the unknowns with
    coefficient matrix J, so each level is one solve J u_k = -r_k where r_k
    is delta^k(f) evaluated with those successors set to zero.
    """
    backend = backend or RealBackend()
    vals = {}
    vals.update(parameter_jet)
    vals.update(pt)
    vals = {k: backend.scalar(v) for k, v in vals.items()}
    unk = list(H.unknowns)
    Jnum = backend.eval_matrix(H.jac(), vals)
    out = {u: vals[u] for u in unk}
    gs = list(H.polys)
    for k in range(1, levels + 1):
        gs = [delta_shift(g) for g in gs]
        probe = dict(vals)
        for u in unk:
            probe[u.succ(k)] = backend.zero()
        r = [backend.eval(g, probe) for g in gs]
        sol = backend.solve(Jnum, [-x for x in r])
        for u, s in zip(unk, sol):
            vals[u.succ(k)] = s
            out[u.succ(k)] = s
    return Jet(out, order=max((u.order for u in unk), default=0) + levels)


def neighborhood_check(a, b, backend=None, tol=None) -> bool:
    backend = backend or RealBackend()
    if set(a.keys()) != set(b.keys()):
        raise ShapeError("neighborhood check needs jets of the same shape")
    return all(backend.close(a[k], b[k], tol) for k in a)
