"""Chern-Weil forms: even Chern character, Fedosov's transgressed odd character,
the transgressed even character, and Todd-form handling.

Normalisation: curvatures are stored already divided by -2*pi*i, i.e. a graded
connection with squares (nabla_pm)^2 = -2*pi*i*omega_pm enters through the
2-forms omega_pm, and

    ch_even  = tr e^{omega_+} - tr e^{omega_-},
    ch_odd   = -(1/2 pi i) Int_0^1 tr(a^{-1}(nabla a) e^{w(t)}) dt,
    w(t)     = (1-t) omega_+ + t a^{-1} omega_- a + (1/2 pi i) t(1-t) theta^2,

with nabla a = da + A_- a - a A_+ on hom.  The sign convention is pinned by
Int_{S^1} ch_odd(e^{i theta}) = -1 and by the transgression identity
d ch_odd(a) + ch_even = 0, both asserted in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, SingularValueError
from .formcalc import (Form, MatrixField, MixedForm, ext_d, pullback_insert,
                       pushforward, require_end_stable, trace_form, wedge)

TWO_PI_I = 2j * np.pi


# ---------------------------------------------------------------------------
# superbundles and symbols
# ---------------------------------------------------------------------------

@dataclass
class Superbundle:
    """Pair of ranks with connection 1-forms and/or normalized curvature 2-forms."""

    domain: object
    rank_plus: int
    rank_minus: int
    omega_plus: Form
    omega_minus: Form
    A_plus: Form = None
    A_minus: Form = None

    CURVATURE_TOL = 1e-9

    @classmethod
    def flat(cls, domain, rank_plus, rank_minus):
        return cls(domain, rank_plus, rank_minus,
                   Form.zero(domain, 2, (rank_plus, rank_plus)),
                   Form.zero(domain, 2, (rank_minus, rank_minus)))

    @classmethod
    def from_connections(cls, domain, A_plus, A_minus):
        """Curvatures omega = -(1/2 pi i)(dA + A ^ A)."""
        op = (-1.0 / TWO_PI_I) * (ext_d(A_plus) + wedge(A_plus, A_plus))
        om = (-1.0 / TWO_PI_I) * (ext_d(A_minus) + wedge(A_minus, A_minus))
        return cls(domain, A_plus.shape[0], A_minus.shape[0], op, om,
                   A_plus, A_minus)

    @classmethod
    def from_curvatures(cls, domain, omega_plus, omega_minus):
        """Curvature data without a global connection form (flagged by A=None)."""
        return cls(domain, omega_plus.shape[0], omega_minus.shape[0],
                   omega_plus, omega_minus)

    def validate(self):
        if self.omega_plus.shape != (self.rank_plus, self.rank_plus):
            raise ShapeError("omega_plus shape does not match rank_plus")
        if self.omega_minus.shape != (self.rank_minus, self.rank_minus):
            raise ShapeError("omega_minus shape does not match rank_minus")
        for A, omega in ((self.A_plus, self.omega_plus),
                         (self.A_minus, self.omega_minus)):
            if A is None:
                continue
            want = (-1.0 / TWO_PI_I) * (ext_d(A) + wedge(A, A))
            res = (want - omega).max_abs()
            scale = 1.0 + omega.max_abs()
            if res > self.CURVATURE_TOL * scale:
                raise ShapeError(
                    f"curvature inconsistent with connection: residual {res:.3e}")
        return self

    def extend(self, axis, position=None, role="fiber"):
        """Pull the bundle data back along a projection that forgets one axis."""
        lift = lambda w: pullback_insert(w, axis, position, role) if w is not None else None
        E = Superbundle(lift(self.omega_plus).domain, self.rank_plus, self.rank_minus,
                        lift(self.omega_plus), lift(self.omega_minus),
                        lift(self.A_plus), lift(self.A_minus))
        return E


@dataclass
class SymbolMap:
    """Invertible matrix field identifying E+ with E- over a sphere/boundary domain."""

    a: MatrixField
    delta: float = 1e-6

    def __post_init__(self):
        if self.a.rows != self.a.cols:
            raise ShapeError("symbol must be square")
        smin, node = self.a.min_singular_value()
        if smin <= self.delta:
            raise SingularValueError(
                f"symbol singular: min singular value {smin:.3e} at node {node}",
                worst_node=node, smin=smin)

    @property
    def domain(self):
        return self.a.domain


# ---------------------------------------------------------------------------
# characters
# ---------------------------------------------------------------------------

def form_exp(w: Form) -> MixedForm:
    """e^w as the finite wedge series of a 2-form (nilpotency truncates it)."""
    n = w.shape[0]
    out = MixedForm.constant(w.domain, np.eye(n))
    power = MixedForm.constant(w.domain, np.eye(n))
    for k in range(1, w.domain.dim // 2 + 1):
        power = power.wedge(w) * (1.0 / k)
        out = out + power
    return out


def ch_even(E: Superbundle) -> MixedForm:
    """tr e^{omega_+} - tr e^{omega_-}; closed, even, scalar-valued."""
    E.validate()
    return form_exp(E.omega_plus).trace() - form_exp(E.omega_minus).trace()


def _gauss_legendre(npts):
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _nabla(a: MatrixField, E: Superbundle) -> Form:
    """Induced connection on hom: nabla a = da + A_- a - a A_+."""
    da = ext_d(Form.from_field(a))
    a0 = Form.from_field(a)
    if E.A_minus is not None:
        da = da + wedge(E.A_minus, a0)
    if E.A_plus is not None:
        da = da - wedge(a0, E.A_plus)
    return da


def ch_odd(a, E: Superbundle) -> MixedForm:
    """Fedosov's transgressed odd Chern character of an invertible symbol.

    Exact Gauss-Legendre in t: the integrand is polynomial in t of degree
    at most 2*floor(dim/2) + 2, and dim + 2 nodes cover that.
    """
    if isinstance(a, SymbolMap):
        a = a.a
    if E.rank_plus != E.rank_minus:
        raise ShapeError("ch_odd needs rank_plus == rank_minus")
    ainv = Form.from_field(a.inverse())
    a0 = Form.from_field(a)
    nabla_a = _nabla(a, E)
    theta = wedge(ainv, nabla_a)
    conj_minus = wedge(wedge(ainv, E.omega_minus), a0)
    theta_sq = wedge(theta, theta)
    dim = a.domain.dim
    nodes, weights = _gauss_legendre(dim + 2)
    total = MixedForm(a.domain, (1, 1))
    for t, wt in zip(nodes, weights):
        w_t = t * conj_minus + (1.0 - t) * E.omega_plus \
            + (t * (1.0 - t) / TWO_PI_I) * theta_sq
        integrand = MixedForm.from_form(theta).wedge(form_exp(w_t)).trace()
        total = total + wt * integrand
    return (-1.0 / TWO_PI_I) * total


def transgression_residual(a, E: Superbundle) -> float:
    """Max-norm of d ch_odd(a) + ch_even(E), both on the symbol's domain."""
    return (ch_odd(a, E).ext_d() + ch_even(E)).max_abs()


def ch_even_transgressed(a, E: Superbundle, xi_axis, stab_tol=1e-8) -> MixedForm:
    """Even character of a stabilized symbol on Y x R_xi: Int i_{d_xi} ch_odd d xi.

    On odd forms the dx-last push-forward equals the contraction integral, so
    this is a plain axis push-forward of the Fedosov form.
    """
    if isinstance(a, SymbolMap):
        a = a.a
    for end in ("low", "high"):
        if not a.is_end_stable(xi_axis, end, stab_tol):
            from .errors import StabilizationError
            raise StabilizationError(
                f"symbol not stabilized at {end} end of the transgression axis")
    t = ch_odd(a, E)
    return t.map(lambda w: pushforward(w, xi_axis), degree_shift=-1)


def todd_form(domain, user_supplied: MixedForm = None, tol=1e-9) -> MixedForm:
    """Constant 1 by default (flat model geometries); user forms must be closed/even."""
    if user_supplied is None:
        return MixedForm.constant(domain, [[1.0]])
    if any(k % 2 for k in user_supplied.degrees):
        raise ShapeError("Todd form must be even")
    res = user_supplied.ext_d().max_abs()
    if res > tol * (1.0 + user_supplied.max_abs()):
        raise ShapeError(f"Todd form not closed: residual {res:.3e}")
    return user_supplied
