"""The five relative cochain complexes with their printed differentials.

Model geometries are products of circles and intervals:

* Pair          (u on X, v on dX)                      D = (d; i*, -d)
* SphereBundle  (u on Y, v on SW)                      D = (d; -pi*, -d)
* LineSubbundle (gamma on Lbar, beta on SU)            D = (d; -pi* nu_*, -d)
* Scattering    (a on X, (alpha on SW, beta on Wbar))  corner-matched pairs
* Zero          (a, (alpha, gamma), beta)              phi_1 = (-pi*; -pi* i*),
                                                       phi_2 = (-nu*, +pi* nu*)
* Transmission  (a, (alpha, v), beta)                  phi_1 = (-pi*; 0),
                                                       phi_2 = (+nu*, +pi*)

Sphere bundles of rank-one factors appear as two sheets (keys "+", "-"); the
sphere bundle of a rank-two bundle over the boundary is stored in blown-up
product coordinates (sheet x interval), which turns the fibre push-forward
into a plain axis push-forward and the pole restrictions into endpoint slices.
Cochain slots hold mixed-degree forms, so a whole Chern cocycle is one cochain.

Note on the transmission differential: the printed first chain map carries a
boundary-restriction entry into the dX slot which is inconsistent with the
slot's degree offset; it is dropped here, and the cocycle-closedness tests pin
the resulting sign conventions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, DegreeError, DomainMismatchError
from .formcalc import (Axis, Domain, Form, MatrixField, MixedForm, contract,
                       cumulative_integral, cumulative_integral_form, dx_wedge,
                       ext_d, ext_d_tangential, integrate_coeffwise,
                       integrate_top, interval, pullback_insert, pushforward,
                       resample_interval, restrict, restrict_at_node,
                       scale_by_field, wedge)

SHEETS = ("+", "-")
ENDS = ("low", "high")


# ---------------------------------------------------------------------------
# cochains as slot trees of mixed forms
# ---------------------------------------------------------------------------

def _tmap(fn, tree):
    if isinstance(tree, dict):
        return {k: _tmap(fn, v) for k, v in tree.items()}
    return fn(tree)


def _tzip(fn, t1, t2):
    if isinstance(t1, dict):
        return {k: _tzip(fn, t1[k], t2[k]) for k in t1}
    return fn(t1, t2)


def _tleaves(tree, path=()):
    if isinstance(tree, dict):
        for k, v in tree.items():
            yield from _tleaves(v, path + (k,))
    else:
        yield path, tree


@dataclass
class RelCochain:
    """Per-slot mixed forms matching one complex instance's blueprint."""

    slots: dict

    def __add__(self, other):
        return RelCochain(_tzip(lambda a, b: a + b, self.slots, other.slots))

    def __sub__(self, other):
        return RelCochain(_tzip(lambda a, b: a - b, self.slots, other.slots))

    def __mul__(self, scalar):
        return RelCochain(_tmap(lambda w: w * scalar, self.slots))

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def max_abs(self):
        return max((w.max_abs() for _, w in _tleaves(self.slots)), default=0.0)

    def map(self, fn):
        return RelCochain(_tmap(fn, self.slots))

    def leaves(self):
        return list(_tleaves(self.slots))


# ---------------------------------------------------------------------------
# collar cutoff
# ---------------------------------------------------------------------------

def _smoothstep_coeffs(p):
    # S_p(t): the unique degree-(2p+1) polynomial with S(0)=0, S(1)=1 and
    # p vanishing derivatives at both ends
    from math import comb
    c = np.zeros(2 * p + 2)
    for k in range(p + 1):
        c[p + 1 + k] = comb(p + k, k) * comb(2 * p + 1, p - k) * (-1.0) ** k
    return c


@dataclass(frozen=True)
class CutoffSpline:
    """rho = 1 below knot_a, 0 above knot_b, a C^p polynomial spline between.

    Knot defaults follow the collar construction (1 on x < 1/2, 0 on x > 3/4,
    in collar-normalized coordinates); smoothness p is a config knob because
    the spline region is what limits spectral differentiation of products.
    """

    knot_a: float = 0.5
    knot_b: float = 0.75
    p: int = 2

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        c = _smoothstep_coeffs(self.p)
        t = np.clip((tau - self.knot_a) / (self.knot_b - self.knot_a), 0.0, 1.0)
        s = np.polynomial.polynomial.polyval(t, c)
        out = 1.0 - s
        out[tau <= self.knot_a] = 1.0
        out[tau >= self.knot_b] = 0.0
        return out

    def deriv(self, tau):
        tau = np.asarray(tau, dtype=float)
        c = np.polynomial.polynomial.polyder(_smoothstep_coeffs(self.p))
        inside = (tau > self.knot_a) & (tau < self.knot_b)
        t = (tau - self.knot_a) / (self.knot_b - self.knot_a)
        out = np.zeros_like(tau)
        out[inside] = -np.polynomial.polynomial.polyval(t[inside], c) \
            / (self.knot_b - self.knot_a)
        return out


def _collar_fields(domain, axis, end, spline):
    """(rho, rho') as scalar fields on the domain, in collar coordinates."""
    i = domain.axis_index(axis)
    ax = domain.axes[i]
    x = ax.nodes
    if end == "low":
        tau = (x - ax.lo) / (ax.hi - ax.lo)
        sgn = 1.0
    else:
        tau = (ax.hi - x) / (ax.hi - ax.lo)
        sgn = -1.0
    rho = spline(tau)
    drho = sgn * spline.deriv(tau) / (ax.hi - ax.lo)
    shape = [1] * domain.dim
    shape[i] = ax.n
    rho_s = np.broadcast_to(rho.reshape(shape), domain.shape).astype(complex)
    drho_s = np.broadcast_to(drho.reshape(shape), domain.shape).astype(complex)
    return (MatrixField(domain, rho_s[..., None, None]),
            MatrixField(domain, drho_s[..., None, None]))


def _cumint_from_end(w: Form, axis, end) -> Form:
    """Antiderivative anchored at the chosen end of an interval axis."""
    q = cumulative_integral_form(w, axis)
    if end == "low":
        return q
    i = q.domain.axis_index(axis)
    out = Form.zero(q.domain, q.degree, q.shape)
    for J, f in q.components.items():
        sl = [slice(None)] * f.samples.ndim
        sl[i] = slice(-1, None)
        out.set_component(J, MatrixField(q.domain, f.samples - f.samples[tuple(sl)]))
    return out


def _mixed_cumint(m: MixedForm, axis, end) -> MixedForm:
    return m.map(lambda w: _cumint_from_end(w, axis, end))


def _mixed_contract(m: MixedForm, axis) -> MixedForm:
    return m.map(lambda w: contract(w, axis), degree_shift=-1)


def _mixed_dxw(m: MixedForm, axis) -> MixedForm:
    return m.map(lambda w: dx_wedge(w, axis), degree_shift=1)


def _mixed_scale(m: MixedForm, field) -> MixedForm:
    return m.map(lambda w: scale_by_field(w, field))


def _mixed_restrict(m: MixedForm, axis, end) -> MixedForm:
    return m.map(lambda w: restrict(w, axis, end))


def _mixed_pull(m: MixedForm, axis, position=None, role="base") -> MixedForm:
    return m.map(lambda w: pullback_insert(w, axis, position, role))


def _mixed_push(m: MixedForm, axis) -> MixedForm:
    return m.map(lambda w: pushforward(w, axis), degree_shift=-1)


def _top_integral(m: MixedForm) -> complex:
    k = m.domain.dim
    if k in m.parts:
        return integrate_top(m.parts[k])
    return 0.0 + 0.0j


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------

class _Instance:
    """Shared plumbing: constraint gating and residual reports."""

    variant = None

    def slot_domain(self, path):
        raise NotImplementedError

    def check_constraints(self, c) -> dict:
        return {}

    def require_constraints(self, c, tol=1e-9):
        report = self.check_constraints(c)
        scale = 1.0 + c.max_abs()
        bad = {k: v for k, v in report.items() if v > tol * scale}
        if bad:
            raise ConstraintError(
                f"{self.variant}: constraint violations {bad} (tol {tol:g})")
        return report

    def apply_D(self, c, check=True, tol=1e-9):
        if check:
            self.require_constraints(c, tol)
        return self._apply_D(c)

    def closedness_residual(self, c):
        return self.apply_D(c, check=False).max_abs()


class PairInstance(_Instance):
    """Forms on X paired with forms on its boundary slices: D = (d; i*, -d)."""

    variant = "pair"
    row_signs = {"u": 1.0, "v": -1.0}

    def __init__(self, domain_X: Domain, normal_axis, ends=("low",)):
        self.domain = domain_X
        self.axis = domain_X.axis(normal_axis) if isinstance(normal_axis, str) \
            else normal_axis
        if self.axis.kind != "interval":
            raise DomainMismatchError("boundary-normal axis must be an interval")
        self.ends = tuple(ends)
        self.boundary_domain = domain_X.drop(self.axis)

    def slot_domain(self, path):
        return self.domain if path[0] == "u" else self.boundary_domain

    def _apply_D(self, c):
        u = c.slots["u"]
        out_v = {e: _mixed_restrict(u, self.axis, e) - c.slots["v"][e].ext_d()
                 for e in self.ends}
        return RelCochain({"u": u.ext_d(), "v": out_v})

    def integrate_base(self, c):
        total = _top_integral(c.slots["u"])
        sign = {"low": 1.0, "high": -1.0}
        for e in self.ends:
            total += sign[e] * _top_integral(c.slots["v"][e])
        return total

    def retract_interior(self, c, end="low", spline=None, closed_tol=1e-9):
        """Collar retraction: T with DT - c = (omega, 0), omega interior.

        The returned omega is DT - c with the cutoff and cumulative factors
        differentiated by the product rule and the fundamental theorem of
        calculus, which keeps the boundary-slot residual identically zero and
        the boundary-node entries of omega structurally exact.
        """
        if end not in self.ends:
            raise DomainMismatchError(f"end {end!r} is not a boundary end")
        spline = spline or CutoffSpline()
        res = self.apply_D(c, check=False).max_abs()
        if res > closed_tol * (1.0 + c.max_abs()):
            raise ConstraintError(f"retraction input not closed: residual {res:.3e}")
        u, v = c.slots["u"], c.slots["v"][end]
        rho, drho = _collar_fields(self.domain, self.axis, end, spline)
        pos = self.domain.axis_index(self.axis)
        role = self.domain.roles[pos]
        u_n = _mixed_contract(u, self.axis)
        S = _mixed_cumint(u_n, self.axis, end) + _mixed_pull(v, self.axis, pos, role)
        T_u = _mixed_scale(S, rho)
        # omega = d(rho S) - u, with d(rho S) = rho' dx^S + rho(d_tan S + dx^u_n)
        dS = S.map(lambda w: ext_d_tangential(w, self.axis), degree_shift=1) \
            + _mixed_dxw(u_n, self.axis)
        omega = _mixed_dxw(_mixed_scale(S, drho), self.axis) \
            + _mixed_scale(dS, rho) - u
        T = RelCochain({"u": T_u,
                        "v": {e: MixedForm(self.boundary_domain) for e in self.ends}})
        resid = RelCochain({"u": omega,
                            "v": {e: _mixed_restrict(T_u, self.axis, e)
                                  - c.slots["v"][e] for e in self.ends}})
        return T, resid


class SphereBundleInstance(_Instance):
    """Base forms paired with sphere-bundle forms: D = (d; -pi*, -d).

    fiber: ("circle", Axis) for a circle sphere-fibre, or ("sheets",) for the
    two-point sphere of a rank-one bundle.
    """

    variant = "sphere-bundle"
    row_signs = {"u": 1.0, "v": -1.0}

    def __init__(self, base_domain: Domain, fiber=("sheets",)):
        self.base = base_domain
        self.fiber = fiber
        if fiber[0] == "circle":
            self.sphere_domain = base_domain.insert(fiber[1], role="sphere")
        elif fiber[0] == "sheets":
            self.sphere_domain = base_domain
        else:
            raise DomainMismatchError("fiber must be ('circle', axis) or ('sheets',)")

    def slot_domain(self, path):
        return self.base if path[0] == "u" else self.sphere_domain

    def _pull(self, u):
        if self.fiber[0] == "circle":
            pos = self.sphere_domain.axis_index(self.fiber[1])
            return _mixed_pull(u, self.fiber[1], pos, "sphere")
        return u

    def _apply_D(self, c):
        u = c.slots["u"]
        pu = self._pull(u)
        if self.fiber[0] == "sheets":
            v = {s: -1.0 * pu - c.slots["v"][s].ext_d() for s in SHEETS}
        else:
            v = -1.0 * pu - c.slots["v"].ext_d()
        return RelCochain({"u": u.ext_d(), "v": v})

    def integrate_base(self, c):
        if self.fiber[0] == "sheets":
            return _top_integral(c.slots["v"]["+"]) - _top_integral(c.slots["v"]["-"])
        return _top_integral(c.slots["v"])


class LineSubbundleInstance(_Instance):
    """Forms on the compactified line subbundle paired with sphere-of-quotient
    forms: D = (d; -pi* nu_*, -d), the degree-two chain-map variant."""

    variant = "line-subbundle"
    row_signs = {"gamma": 1.0, "beta": -1.0}

    def __init__(self, base_domain: Domain, ell_axis: Axis):
        self.base = base_domain
        self.ell = ell_axis
        self.lbar_domain = base_domain.insert(ell_axis, role="fiber")

    def slot_domain(self, path):
        return self.lbar_domain if path[0] == "gamma" else self.base

    def check_constraints(self, c) -> dict:
        g = c.slots["gamma"]
        hi = _mixed_restrict(g, self.ell, "high")
        lo = _mixed_restrict(g, self.ell, "low")
        return {"ends-match": (hi - lo).max_abs()}

    def _apply_D(self, c):
        g = c.slots["gamma"]
        nu = _mixed_push(g, self.ell)
        return RelCochain({
            "gamma": g.ext_d(),
            "beta": {s: -1.0 * nu - c.slots["beta"][s].ext_d() for s in SHEETS},
        })


class ScatteringInstance(_Instance):
    """Interior forms with corner-matched pairs on the two boundary hypersurfaces.

    X carries the boundary-normal axis; the rank-one fibre contributes two
    sheets at infinity (keys "+", "-") and a compactified-fibre slice over
    each boundary end.  Sheet "+" meets the xi-axis at its high end.
    """

    variant = "scattering"
    row_signs = {"a": 1.0, "alpha": -1.0, "beta": -1.0}

    def __init__(self, domain_X: Domain, normal_axis, xi_axis: Axis,
                 ends=("low", "high")):
        self.domain = domain_X
        self.axis = domain_X.axis(normal_axis) if isinstance(normal_axis, str) \
            else normal_axis
        self.xi = xi_axis
        self.ends = tuple(ends)
        self.base = domain_X.drop(self.axis)
        pos = domain_X.axis_index(self.axis)
        self.wbar_domain = self.base.insert(xi_axis, pos, "fiber")
        self._xi_end = {"+": "high", "-": "low"}

    def slot_domain(self, path):
        return self.wbar_domain if path[0] == "beta" else self.domain

    def check_constraints(self, c) -> dict:
        report = {}
        for e in self.ends:
            for s in SHEETS:
                lhs = _mixed_restrict(c.slots["alpha"][s], self.axis, e)
                rhs = _mixed_restrict(c.slots["beta"][e], self.xi, self._xi_end[s])
                report[f"corner[{e},{s}]"] = (lhs - rhs).max_abs()
        return report

    def _apply_D(self, c):
        a = c.slots["a"]
        alpha = {s: -1.0 * a - c.slots["alpha"][s].ext_d() for s in SHEETS}
        pos = self.wbar_domain.axis_index(self.xi)
        beta = {}
        for e in self.ends:
            ia = _mixed_restrict(a, self.axis, e)
            beta[e] = -1.0 * _mixed_pull(ia, self.xi, pos, "fiber") \
                - c.slots["beta"][e].ext_d()
        return RelCochain({"a": a.ext_d(), "alpha": alpha, "beta": beta})

    def integrate_base(self, c):
        """Boundary-circuit integral; orientation pinned by the index scenarios."""
        total = _top_integral(c.slots["alpha"]["+"]) \
            - _top_integral(c.slots["alpha"]["-"])
        sign = {"low": 1.0, "high": -1.0}
        for e in self.ends:
            total += sign[e] * _top_integral(c.slots["beta"][e])
        return total

    def _beta_decomposition(self, beta):
        """beta = pi* beta' + d beta'' on the compactified fibre slice."""
        b_n = _mixed_contract(beta, self.xi)
        beta2 = _mixed_cumint(b_n, self.xi, "low")
        beta_prime = _mixed_restrict(beta, self.xi, "low")
        pos = self.wbar_domain.axis_index(self.xi)
        back = _mixed_pull(beta_prime, self.xi, pos, "fiber") + beta2.ext_d()
        return beta_prime, beta2, (beta - back).max_abs()

    def retract_interior(self, c, end="low", spline=None, closed_tol=1e-9):
        """Collar retraction at one boundary end (proof construction of the
        scattering retraction, with the cutoff/cumulative factors handled by
        the product rule as in PairInstance.retract_interior)."""
        if end not in self.ends:
            raise DomainMismatchError(f"end {end!r} is not a boundary end")
        spline = spline or CutoffSpline()
        res = self.apply_D(c, check=False).max_abs()
        if res > closed_tol * (1.0 + c.max_abs()):
            raise ConstraintError(f"retraction input not closed: residual {res:.3e}")
        a = c.slots["a"]
        beta = c.slots["beta"][end]
        beta_prime, beta2, dec_res = self._beta_decomposition(beta)
        rho, drho = _collar_fields(self.domain, self.axis, end, spline)
        pos = self.domain.axis_index(self.axis)
        role = self.domain.roles[pos]

        def pullx(m):
            return _mixed_pull(m, self.axis, pos, role)

        a_n = _mixed_contract(a, self.axis)
        S_a = _mixed_cumint(a_n, self.axis, end) - pullx(beta_prime)
        T_a = _mixed_scale(S_a, rho)
        T_alpha, S_al, n_al = {}, {}, {}
        for s in SHEETS:
            g = -1.0 * c.slots["alpha"][s] - S_a
            n_al[s] = _mixed_contract(g, self.axis)
            w_s = _mixed_restrict(beta2, self.xi, self._xi_end[s])
            S_al[s] = _mixed_cumint(n_al[s], self.axis, end) - pullx(w_s)
            T_alpha[s] = _mixed_scale(S_al[s], rho)
        zero_beta = {e: MixedForm(self.wbar_domain) for e in self.ends}
        T = RelCochain({"a": T_a, "alpha": T_alpha,
                        "beta": dict(zero_beta, **{end: -1.0 * beta2})})

        def smart_d(S, n_part):
            dS = S.map(lambda w: ext_d_tangential(w, self.axis), degree_shift=1) \
                + _mixed_dxw(n_part, self.axis)
            return _mixed_dxw(_mixed_scale(S, drho), self.axis) \
                + _mixed_scale(dS, rho)

        omega_a = smart_d(S_a, a_n) - a
        omega_alpha = {s: -1.0 * T_a - smart_d(S_al[s], n_al[s])
                       - c.slots["alpha"][s] for s in SHEETS}
        omega_beta = {}
        xi_pos = self.wbar_domain.axis_index(self.xi)
        for e in self.ends:
            ia = _mixed_restrict(T_a, self.axis, e)
            db = T.slots["beta"][e].ext_d()
            omega_beta[e] = -1.0 * _mixed_pull(ia, self.xi, xi_pos, "fiber") \
                - db - c.slots["beta"][e]
        resid = RelCochain({"a": omega_a, "alpha": omega_alpha, "beta": omega_beta})
        return T, resid


class ZeroInstance(_Instance):
    """Boundary-fibred complex of the zero calculus in blown-up coordinates.

    Domains: X = (x, base); SW = two sheets of (x, base, s); Lbar = (base, s);
    SU = two sheets of (base).  The pole L+ sits at the high s-end.
    """

    variant = "zero"
    row_signs = {"a": 1.0, "alpha": -1.0, "gamma": -1.0, "beta": 1.0}

    def __init__(self, x_axis: Axis, base_domain: Domain, s_axis: Axis):
        self.x = x_axis
        self.s = s_axis
        self.base = base_domain
        self.domain = base_domain.insert(x_axis, 0, "boundary-normal")
        self.sw_domain = self.domain.insert(s_axis, role="sphere")
        self.lbar_domain = base_domain.insert(s_axis, role="fiber")
        self.su_domain = base_domain

    def slot_domain(self, path):
        return {"a": self.domain, "alpha": self.sw_domain,
                "gamma": self.lbar_domain, "beta": self.su_domain}[path[0]]

    def check_constraints(self, c) -> dict:
        report = {}
        pole = {"L+": "high", "L-": "low"}
        for p, send in pole.items():
            g = _mixed_restrict(c.slots["gamma"], self.s, send)
            for s in SHEETS:
                al = _mixed_restrict(
                    _mixed_restrict(c.slots["alpha"][s], self.x, "low"),
                    self.s, send)
                report[f"pole[{p},{s}]"] = (al - g).max_abs()
        return report

    def seam_residual(self, c):
        """Blown-representation validity: the sheets agree along the poles."""
        out = 0.0
        for send in ENDS:
            d = _mixed_restrict(c.slots["alpha"]["+"], self.s, send) \
                - _mixed_restrict(c.slots["alpha"]["-"], self.s, send)
            out = max(out, d.max_abs())
        return out

    def _apply_D(self, c):
        a = c.slots["a"]
        pa = _mixed_pull(a, self.s, role="sphere")
        alpha = {s: -1.0 * pa - c.slots["alpha"][s].ext_d() for s in SHEETS}
        ia = _mixed_restrict(a, self.x, "low")
        gamma = -1.0 * _mixed_pull(ia, self.s, role="fiber") \
            - c.slots["gamma"].ext_d()
        nu_gamma = _mixed_push(c.slots["gamma"], self.s)
        beta = {}
        for s in SHEETS:
            nu_alpha = _mixed_push(
                _mixed_restrict(c.slots["alpha"][s], self.x, "low"), self.s)
            beta[s] = -1.0 * nu_alpha + nu_gamma + c.slots["beta"][s].ext_d()
        return RelCochain({"a": a.ext_d(), "alpha": alpha,
                           "gamma": gamma, "beta": beta})

    def integrate_base(self, c):
        return (_top_integral(c.slots["alpha"]["+"])
                - _top_integral(c.slots["alpha"]["-"])
                - _top_integral(c.slots["beta"]["+"])
                + _top_integral(c.slots["beta"]["-"]))


class TransmissionInstance(_Instance):
    """Boundary-fibred complex of the transmission calculus (same geometry as
    ZeroInstance, with a plain boundary slot instead of the Lbar slot)."""

    variant = "transmission"
    row_signs = {"a": 1.0, "alpha": -1.0, "v": -1.0, "beta": 1.0}

    def __init__(self, x_axis: Axis, base_domain: Domain, s_axis: Axis):
        self.x = x_axis
        self.s = s_axis
        self.base = base_domain
        self.domain = base_domain.insert(x_axis, 0, "boundary-normal")
        self.sw_domain = self.domain.insert(s_axis, role="sphere")
        self.su_domain = base_domain

    def slot_domain(self, path):
        return {"a": self.domain, "alpha": self.sw_domain,
                "v": self.base, "beta": self.su_domain}[path[0]]

    def check_constraints(self, c) -> dict:
        report = {}
        for s in SHEETS:
            ia = _mixed_restrict(c.slots["alpha"][s], self.x, "low")
            hi = _mixed_restrict(ia, self.s, "high")
            lo = _mixed_restrict(ia, self.s, "low")
            report[f"Cpm[{s}]"] = (hi - lo).max_abs()
            dia = _mixed_restrict(c.slots["alpha"][s].ext_d(), self.x, "low")
            report[f"Cpm-d[{s}]"] = (_mixed_restrict(dia, self.s, "high")
                                     - _mixed_restrict(dia, self.s, "low")).max_abs()
        for send in ENDS:
            d = _mixed_restrict(
                _mixed_restrict(c.slots["alpha"]["+"], self.x, "low"), self.s, send) \
                - _mixed_restrict(
                    _mixed_restrict(c.slots["alpha"]["-"], self.x, "low"),
                    self.s, send)
            report[f"seam[{send}]"] = d.max_abs()
        return report

    def _apply_D(self, c):
        a = c.slots["a"]
        pa = _mixed_pull(a, self.s, role="sphere")
        alpha = {s: -1.0 * pa - c.slots["alpha"][s].ext_d() for s in SHEETS}
        v = -1.0 * c.slots["v"].ext_d()
        pv = c.slots["v"]
        beta = {}
        for s in SHEETS:
            nu_alpha = _mixed_push(
                _mixed_restrict(c.slots["alpha"][s], self.x, "low"), self.s)
            beta[s] = nu_alpha + pv + c.slots["beta"][s].ext_d()
        return RelCochain({"a": a.ext_d(), "alpha": alpha, "v": v, "beta": beta})

    def integrate_base(self, c):
        return (_top_integral(c.slots["alpha"]["+"])
                - _top_integral(c.slots["alpha"]["-"])
                - _top_integral(c.slots["beta"]["+"])
                + _top_integral(c.slots["beta"]["-"]))


# ---------------------------------------------------------------------------
# comparison maps Phi and Phi_Lbar
# ---------------------------------------------------------------------------

def _collapse_axis(m: MixedForm, axis, tol=1e-8):
    """Drop an axis along which the form is constant with no dx components."""
    def per_form(w):
        i = w.domain.axis_index(axis)
        for J, f in w.components.items():
            if i in J:
                if f.max_abs() > tol:
                    raise DomainMismatchError(
                        "collapse: form has components along the collapsed axis")
        out = restrict_at_node(w, axis, 0)
        chk = restrict_at_node(w, axis, w.domain.axes[i].n // 2)
        if (out - chk).max_abs() > tol * (1.0 + w.max_abs()):
            raise DomainMismatchError("collapse: form is not fiber-constant")
        return out
    return m.map(per_form)


def map_phi(instance: SphereBundleInstance, u: MixedForm, r_axis,
            sheets=None) -> RelCochain:
    """Compactly supported closed form on the total space -> sphere-bundle pair.

    u lives on base x [0,R]_r x fibre (or per-sheet copies for a rank-one
    bundle).  Returns (i_0^* u, (-1)^{k-1} R_* u) slotwise.
    """
    if instance.fiber[0] == "sheets":
        at_zero = {s: _mixed_restrict(sheets[s], r_axis, "low") for s in SHEETS}
        mismatch = (at_zero["+"] - at_zero["-"]).max_abs()
        if mismatch > 1e-8 * (1.0 + max(m.max_abs() for m in sheets.values())):
            raise DomainMismatchError("sheets disagree at the zero section")
        u0 = at_zero["+"]
        v = {s: _signed_radial_push(sheets[s], r_axis) for s in SHEETS}
        return RelCochain({"u": u0, "v": v})
    u0 = _collapse_axis(_mixed_restrict(u, r_axis, "low"), instance.fiber[1])
    return RelCochain({"u": u0, "v": _signed_radial_push(u, r_axis)})


def _signed_radial_push(m: MixedForm, r_axis) -> MixedForm:
    out = MixedForm(m.domain.drop(m.domain.axis(r_axis)
                                  if isinstance(r_axis, str) else r_axis))
    for k, w in m.parts.items():
        r = pushforward(w, r_axis) * ((-1.0) ** (k - 1))
        if r.components:
            out.parts[k - 1] = r
    return out


def map_phi_L(instance: LineSubbundleInstance, omega: MixedForm,
              w1_axis: Axis, w2_axis: Axis, half_n=None) -> RelCochain:
    """Compactly supported form on the rank-two boundary bundle (Cartesian
    model, w1 the line direction) -> line-subbundle pair.

    First slot: restriction to the w1-axis.  Second slot: signed half-plane
    integrals, one per sheet of the quotient sphere; the upper sheet carries
    the + orientation, pinned by the chain-map test.
    """
    if w2_axis.n % 2 == 0:
        raise DomainMismatchError("w2 axis needs an odd node count (centre node)")
    center = (w2_axis.n - 1) // 2
    first = omega.map(lambda w: restrict_at_node(w, w2_axis, center))
    m = half_n or w2_axis.n
    halves = {"+": interval(w2_axis.name, m, 0.0, w2_axis.hi),
              "-": interval(w2_axis.name, m, w2_axis.lo, 0.0)}
    orient = {"+": 1.0, "-": -1.0}
    second = {}
    for s in SHEETS:
        out = MixedForm(instance.base)
        for k, w in omega.parts.items():
            rw = resample_interval(w, w2_axis, halves[s])
            r = pushforward(pushforward(rw, halves[s]), w1_axis)
            r = r * (orient[s] * (-1.0) ** (k - 1))
            if r.components:
                out.parts[k - 2] = r
        second[s] = out
    return RelCochain({"gamma": first, "beta": second})


# ---------------------------------------------------------------------------
# module action and homotopy primitive
# ---------------------------------------------------------------------------

def module_action(instance, c: RelCochain, gamma: Form) -> RelCochain:
    """Wedge a cochain by a closed form on the first slot's domain.

    The transported factor on lower slots is the unsigned pullback; the third
    slot carries the parity twist that makes closed ^ closed closed (the
    printed statement assumes multiplicative chain maps, which push-forwards
    are not; the twist is pinned by the closedness post-condition).
    """
    g = MixedForm.from_form(gamma)
    eps = (-1.0) ** gamma.degree

    def wg(m, gg):
        return m.wedge(gg)

    if isinstance(instance, PairInstance):
        gv = {e: _mixed_restrict(g, instance.axis, e) for e in instance.ends}
        return RelCochain({"u": wg(c.slots["u"], g),
                           "v": {e: wg(c.slots["v"][e], gv[e])
                                 for e in instance.ends}})
    if isinstance(instance, SphereBundleInstance):
        gp = instance._pull(g)
        if instance.fiber[0] == "sheets":
            return RelCochain({"u": wg(c.slots["u"], g),
                               "v": {s: wg(c.slots["v"][s], gp) for s in SHEETS}})
        return RelCochain({"u": wg(c.slots["u"], g), "v": wg(c.slots["v"], gp)})
    if isinstance(instance, ScatteringInstance):
        gb = _mixed_restrict(g, instance.axis, "low")
        xpos = instance.wbar_domain.axis_index(instance.xi)
        gbar = {e: _mixed_pull(_mixed_restrict(g, instance.axis, e),
                               instance.xi, xpos, "fiber")
                for e in instance.ends}
        return RelCochain({"a": wg(c.slots["a"], g),
                           "alpha": {s: wg(c.slots["alpha"][s], g) for s in SHEETS},
                           "beta": {e: wg(c.slots["beta"][e], gbar[e])
                                    for e in instance.ends}})
    if isinstance(instance, ZeroInstance):
        gsw = _mixed_pull(g, instance.s, role="sphere")
        gbd = _mixed_restrict(g, instance.x, "low")
        glb = _mixed_pull(gbd, instance.s, role="fiber")
        return RelCochain({
            "a": wg(c.slots["a"], g),
            "alpha": {s: wg(c.slots["alpha"][s], gsw) for s in SHEETS},
            "gamma": wg(c.slots["gamma"], glb),
            "beta": {s: eps * wg(c.slots["beta"][s], gbd) for s in SHEETS},
        })
    if isinstance(instance, TransmissionInstance):
        gsw = _mixed_pull(g, instance.s, role="sphere")
        gbd = _mixed_restrict(g, instance.x, "low")
        return RelCochain({
            "a": wg(c.slots["a"], g),
            "alpha": {s: wg(c.slots["alpha"][s], gsw) for s in SHEETS},
            "v": wg(c.slots["v"], gbd),
            "beta": {s: eps * wg(c.slots["beta"][s], gbd) for s in SHEETS},
        })
    raise DomainMismatchError(f"module_action: unsupported instance {instance!r}")




def homotopy_primitive(extended_instance, family: RelCochain, r_axis,
                       closed_tol=1e-7) -> RelCochain:
    """Primitive of c(0) - c(1) for a closed one-parameter family.

    The family is a cochain of the r-extended instance (every slot domain
    carries the parameter interval); the primitive integrates the dr-parts
    with the (+, -, +) row-group signs, so that D(primitive) = c(0) - c(1).
    """
    res = extended_instance.apply_D(family, check=False).max_abs()
    if res > closed_tol * (1.0 + family.max_abs()):
        raise ConstraintError(f"family not D-closed: residual {res:.3e}")

    signs = extended_instance.row_signs

    def leaf(path, m):
        # primitive slot sign is the negative of the row's d-sign
        n = _mixed_contract(m, r_axis)
        return -signs[path[0]] * n.map(lambda w: integrate_coeffwise(w, r_axis))

    return RelCochain(_tmap_with_path(leaf, family.slots))


def restrict_family(family: RelCochain, r_axis, end) -> RelCochain:
    return family.map(lambda m: _mixed_restrict(m, r_axis, end))


def _tmap_with_path(fn, tree, path=()):
    if isinstance(tree, dict):
        return {k: _tmap_with_path(fn, v, path + (k,)) for k, v in tree.items()}
    return fn(path, tree)


def lift_exact_family(instance, extended_instance, c0: RelCochain,
                      b: RelCochain, r_axis) -> RelCochain:
    """The closed lift of the affine family c(r) = c0 + r D(b).

    The dr-compensator alternates sign with the row group, mirroring the
    extended differential's lower-triangular blocks.
    """
    Db = instance.apply_D(b, check=False)

    def pull(path, m):
        target = extended_instance.slot_domain(path)
        pos = target.axis_index(r_axis)
        return _mixed_pull(m, r_axis, pos, target.roles[pos])

    c0l = RelCochain(_tmap_with_path(pull, c0.slots))
    Dbl = RelCochain(_tmap_with_path(pull, Db.slots))
    bl = RelCochain(_tmap_with_path(pull, b.slots))

    def times_r(path, m):
        dom = m.domain
        i = dom.axis_index(r_axis)
        rvals = dom.axes[i].nodes
        shape = [1] * dom.dim
        shape[i] = dom.axes[i].n
        rf = MatrixField(dom, np.broadcast_to(
            rvals.reshape(shape), dom.shape).astype(complex)[..., None, None])
        return _mixed_scale(m, rf)

    signs = instance.row_signs

    def comp(path, m):
        return signs[path[0]] * _mixed_dxw(m, r_axis)

    return c0l + RelCochain(_tmap_with_path(times_r, Dbl.slots)) \
        + RelCochain(_tmap_with_path(comp, bl.slots))


# ---------------------------------------------------------------------------
# parameter lifts and seeded constraint-satisfying cochains
# ---------------------------------------------------------------------------

def lift_instance(instance, r_axis: Axis):
    """Same complex with every slot domain extended by a parameter interval."""
    if isinstance(instance, PairInstance):
        return PairInstance(instance.domain.insert(r_axis, role="parameter"),
                            instance.axis, instance.ends)
    if isinstance(instance, SphereBundleInstance):
        return SphereBundleInstance(
            instance.base.insert(r_axis, role="parameter"), instance.fiber)
    if isinstance(instance, LineSubbundleInstance):
        return LineSubbundleInstance(
            instance.base.insert(r_axis, role="parameter"), instance.ell)
    if isinstance(instance, ScatteringInstance):
        return ScatteringInstance(instance.domain.insert(r_axis, role="parameter"),
                                  instance.axis, instance.xi, instance.ends)
    if isinstance(instance, ZeroInstance):
        return ZeroInstance(instance.x,
                            instance.base.insert(r_axis, role="parameter"),
                            instance.s)
    if isinstance(instance, TransmissionInstance):
        return TransmissionInstance(instance.x,
                                    instance.base.insert(r_axis, role="parameter"),
                                    instance.s)
    raise DomainMismatchError(f"cannot lift {instance!r}")


def _blend_field(domain, axis, end):
    """(1 +- s)/2 profile: 1 at the chosen end, 0 at the other; polynomial."""
    i = domain.axis_index(axis)
    ax = domain.axes[i]
    t = (2.0 * ax.nodes - (ax.lo + ax.hi)) / (ax.hi - ax.lo)
    prof = 0.5 * (1.0 + t) if end == "high" else 0.5 * (1.0 - t)
    prof = prof.astype(complex)
    shape = [1] * domain.dim
    shape[i] = ax.n
    s = np.broadcast_to(prof.reshape(shape), domain.shape)
    return MatrixField(domain, s[..., None, None])


def _window_field(domain, axis):
    """(1 - t^2) profile vanishing exactly at both interval ends."""
    i = domain.axis_index(axis)
    ax = domain.axes[i]
    t = (2.0 * ax.nodes - (ax.lo + ax.hi)) / (ax.hi - ax.lo)
    prof = (1.0 - t * t).astype(complex)
    shape = [1] * domain.dim
    shape[i] = ax.n
    s = np.broadcast_to(prof.reshape(shape), domain.shape)
    return MatrixField(domain, s[..., None, None])


def _cutoff_field(domain, axis, end, spline=None):
    rho, _ = _collar_fields(domain, axis, end, spline or CutoffSpline())
    return rho


def random_cochain(instance, rng, degrees=(0, 1, 2), shape=(1, 1),
                   bandwidth=2, amplitude=1.0):
    """Seeded band-limited cochain satisfying the instance constraints exactly.

    Corner/pole matching is built in structurally: shared parts are pulled
    back, sheet- or end-specific parts carry polynomial windows that vanish
    exactly at the matched nodes.
    """
    from .randgen import band_limited_mixed

    def mixed(dom, degs=None, decay=None):
        return band_limited_mixed(dom, rng, degs if degs is not None else degrees,
                                  shape, bandwidth, amplitude, decay)

    if isinstance(instance, PairInstance):
        return RelCochain({
            "u": mixed(instance.domain),
            "v": {e: mixed(instance.boundary_domain) for e in instance.ends}})

    if isinstance(instance, SphereBundleInstance):
        if instance.fiber[0] == "sheets":
            v = {s: mixed(instance.sphere_domain) for s in SHEETS}
        else:
            v = mixed(instance.sphere_domain)
        return RelCochain({"u": mixed(instance.base), "v": v})

    if isinstance(instance, LineSubbundleInstance):
        # gamma with equal restrictions at both ell-ends: pullback + window
        base_part = mixed(instance.base)
        pos = instance.lbar_domain.axis_index(instance.ell)
        g = _mixed_pull(base_part, instance.ell, pos, "fiber")
        win = _window_field(instance.lbar_domain, instance.ell)
        g = g + _mixed_scale(mixed(instance.lbar_domain), win)
        return RelCochain({"gamma": g,
                           "beta": {s: mixed(instance.base) for s in SHEETS}})

    if isinstance(instance, ScatteringInstance):
        a = mixed(instance.domain)
        alpha = {s: mixed(instance.domain) for s in SHEETS}
        beta = {}
        xpos = instance.wbar_domain.axis_index(instance.xi)
        for e in instance.ends:
            b = mixed(instance.wbar_domain)
            for s in SHEETS:
                want = _mixed_restrict(alpha[s], instance.axis, e)
                have = _mixed_restrict(b, instance.xi, instance._xi_end[s])
                corr = _mixed_pull(want - have, instance.xi, xpos, "fiber")
                blend = _blend_field(instance.wbar_domain, instance.xi,
                                     instance._xi_end[s])
                b = b + _mixed_scale(corr, blend)
            beta[e] = b
        return RelCochain({"a": a, "alpha": alpha, "beta": beta})

    if isinstance(instance, (ZeroInstance, TransmissionInstance)):
        # alpha sheets: shared s-constant part + windowed sheet parts, then a
        # blended correction matching the pole values of gamma (zero case)
        a = mixed(instance.domain)
        shared = _mixed_pull(mixed(instance.domain), instance.s, role="sphere")
        win = _window_field(instance.sw_domain, instance.s)
        hi_decay = _cutoff_field(instance.sw_domain, instance.x, "low")
        alpha = {}
        for s in SHEETS:
            ind = _mixed_scale(mixed(instance.sw_domain), win)
            alpha[s] = shared + ind
        if isinstance(instance, TransmissionInstance):
            v = mixed(instance.base)
            beta = {s: mixed(instance.su_domain) for s in SHEETS}
            return RelCochain({"a": a, "alpha": alpha, "v": v, "beta": beta})
        gamma = mixed(instance.lbar_domain)
        spos = instance.sw_domain.axis_index(instance.s)
        rho = _cutoff_field(instance.sw_domain, instance.x, "low")
        for s in SHEETS:
            for send in ENDS:
                want = _mixed_restrict(gamma, instance.s, send)
                have = _mixed_restrict(
                    _mixed_restrict(alpha[s], instance.x, "low"), instance.s, send)
                corr = _mixed_pull(_mixed_pull(want - have, instance.s,
                                               None, "sphere"),
                                   instance.x, 0, "boundary-normal")
                blend = _blend_field(instance.sw_domain, instance.s, send)
                alpha[s] = alpha[s] + _mixed_scale(_mixed_scale(corr, blend), rho)
        beta = {s: mixed(instance.su_domain) for s in SHEETS}
        return RelCochain({"a": a, "alpha": alpha, "gamma": gamma, "beta": beta})

    raise DomainMismatchError(f"random_cochain: unsupported instance {instance!r}")
