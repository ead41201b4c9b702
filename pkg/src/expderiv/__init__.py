"""Exact exponential polynomials with E-derivations, plus real and p-adic backends."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DomainError,
    ExpDerivError,
    HenselConditionFailed,
    InfeasibleTarget,
    NoConvergence,
    ParseError,
    PreconditionError,
    ShapeError,
    SingularJacobian,
    UnsupportedError,
)
from .epoly import (  # noqa: E402
    EPoly,
    OrdinalCNF,
    Poly,
    VarId,
    compare_canonical,
    const,
    exp_apply,
    height,
    layer_decompose,
    ord,
    ord_reduce,
    rank_component,
    scalar_const,
    substitute,
    var,
)
from .terms import (  # noqa: E402
    delta_normalize,
    parse_epoly,
    parse_formula,
    parse_term,
    print_formula,
    print_term,
    star_transform,
)
from .differential import (  # noqa: E402
    ERational,
    KhovanskiiSystem,
    delta_shift,
    gradient_slice,
    jacobian,
    jacobian_det,
    khovanskii_build,
    partial_derivative,
    propagate_symbolic,
    solve_dependent_jet,
    torsor_residual,
)
from .padic import PadicScalar, exp_padic  # noqa: E402
from .backends import Jet, PadicBackend, Point, RealBackend, ToleranceSpec  # noqa: E402
from .solvers import (  # noqa: E402
    hensel_solve,
    khovanskii_check,
    neighborhood_check,
    newton_solve,
    propagate_numeric,
    regular_point_check,
)
from .dle import build_khovanskii_formula, build_phi_star_H, jet_search, render_instance  # noqa: E402
