import numpy as np
import pytest

from relchern import formcalc as fc
from relchern.errors import DegreeError, DomainMismatchError, ShapeError
from relchern.randgen import band_limited_form


def circle_domain(n=32):
    return fc.Domain((fc.circle("theta", n),))


def test_partial_derivative_constant_is_zero():
    dom = circle_domain()
    f = fc.MatrixField.constant(dom, [[3.0 + 1j]])
    df = fc.partial_derivative(f, "theta")
    assert df.max_abs() < 1e-13


def test_partial_derivative_circle_sin():
    dom = circle_domain(32)
    f = fc.MatrixField.from_function(dom, lambda theta: np.sin(theta))
    df = fc.partial_derivative(f, "theta")
    err = np.max(np.abs(df.samples[..., 0, 0] - np.cos(dom.axes[0].nodes)))
    assert err < 1e-12


def test_partial_derivative_chebyshev_cubic():
    x = fc.interval("x", 8, 0.0, 1.0)
    dom = fc.Domain((x,))
    f = fc.MatrixField.from_function(dom, lambda x: x ** 3)
    df = fc.partial_derivative(f, "x")
    err = np.max(np.abs(df.samples[..., 0, 0] - 3.0 * x.nodes ** 2))
    assert err < 1e-12


def test_partial_derivative_unknown_axis():
    dom = circle_domain()
    f = fc.MatrixField.constant(dom, [[1.0]])
    with pytest.raises(DomainMismatchError):
        fc.partial_derivative(f, "nope")


def test_ext_d_closed_one_form_on_torus():
    dom = fc.Domain((fc.circle("t1", 16), fc.circle("t2", 16)))
    f = fc.MatrixField.from_function(dom, lambda t1, t2: np.exp(1j * t1))
    w = fc.Form(dom, 1, (1, 1), {(0,): f})  # f(theta1) d theta1
    assert fc.ext_d(w).max_abs() < 1e-13


def test_ext_d_exact():
    dom = circle_domain()
    f = fc.MatrixField.from_function(dom, lambda theta: np.sin(theta))
    dw = fc.ext_d(fc.Form.from_field(f))
    err = np.max(np.abs(dw.component((0,)).samples[..., 0, 0]
                        - np.cos(dom.axes[0].nodes)))
    assert err < 1e-12


def test_ext_d_squared_zero():
    rng = np.random.default_rng(0)
    dom = fc.Domain((fc.circle("a", 16), fc.circle("b", 16),
                     fc.interval("x", 10, 0.0, 1.0)))
    w = band_limited_form(dom, rng, 1, shape=(2, 2))
    dd = fc.ext_d(fc.ext_d(w))
    assert dd.max_abs() < 1e-10 * (1.0 + w.max_abs())


def test_ext_d_top_degree_rejected():
    dom = circle_domain()
    w = fc.Form(dom, 1, (1, 1), {(0,): fc.MatrixField.constant(dom, [[1.0]])})
    with pytest.raises(DegreeError):
        fc.ext_d(w)


def test_wedge_scalar_one_forms():
    dom = fc.Domain((fc.circle("t1", 16), fc.circle("t2", 16)))
    f = fc.MatrixField.from_function(dom, lambda t1, t2: np.cos(t1))
    g = fc.MatrixField.from_function(dom, lambda t1, t2: np.sin(t2))
    a = fc.Form(dom, 1, (1, 1), {(0,): f})
    b = fc.Form(dom, 1, (1, 1), {(1,): g})
    ab = fc.wedge(a, b)
    want = f.samples * g.samples
    assert np.max(np.abs(ab.component((0, 1)).samples - want)) < 1e-14
    # antisymmetry for scalar odd forms
    aa = fc.wedge(a, a)
    assert aa.max_abs() == 0.0


def test_wedge_shape_mismatch():
    dom = circle_domain()
    a = fc.Form.from_field(fc.MatrixField.constant(dom, np.eye(2)))
    b = fc.Form.from_field(fc.MatrixField.constant(dom, np.eye(3)))
    with pytest.raises(ShapeError):
        fc.wedge(a, b)


def test_leibniz_rule():
    rng = np.random.default_rng(1)
    dom = fc.Domain((fc.circle("a", 24), fc.circle("b", 24)))
    alpha = band_limited_form(dom, rng, 1, shape=(2, 2), bandwidth=2)
    beta = band_limited_form(dom, rng, 0, shape=(2, 2), bandwidth=2)
    lhs = fc.ext_d(fc.wedge(alpha, beta))
    rhs = fc.wedge(fc.ext_d(alpha), beta) - fc.wedge(alpha, fc.ext_d(beta))
    scale = 1.0 + alpha.max_abs() * beta.max_abs()
    assert (lhs - rhs).max_abs() < 1e-9 * scale


def test_wedge_associativity():
    rng = np.random.default_rng(2)
    dom = fc.Domain((fc.circle("a", 24), fc.circle("b", 24),
                     fc.circle("c", 24)))
    u = band_limited_form(dom, rng, 1, shape=(2, 2), bandwidth=1)
    v = band_limited_form(dom, rng, 1, shape=(2, 2), bandwidth=1)
    w = band_limited_form(dom, rng, 1, shape=(2, 2), bandwidth=1)
    lhs = fc.wedge(fc.wedge(u, v), w)
    rhs = fc.wedge(u, fc.wedge(v, w))
    assert (lhs - rhs).max_abs() < 1e-9 * (1.0 + lhs.max_abs())


def test_contract_conventions():
    dom = fc.Domain((fc.circle("theta", 16), fc.interval("xi", 8, -1.0, 1.0)))
    one = fc.MatrixField.constant(dom, [[1.0]])
    dxi = fc.Form(dom, 1, (1, 1), {(1,): one})
    assert fc.contract(dxi, "xi").component(()).samples[0, 0, 0, 0] == 1.0
    ftheta = fc.Form(dom, 1, (1, 1), {(0,): one})
    assert fc.contract(ftheta, "xi").max_abs() == 0.0
    # i_xi (dtheta ^ dxi) = -dtheta
    w = fc.Form(dom, 2, (1, 1), {(0, 1): one})
    out = fc.contract(w, "xi")
    assert np.allclose(out.component((0,)).samples, -1.0)


def test_pushforward_separable():
    dom = fc.Domain((fc.circle("y", 16), fc.interval("s", 10, 0.0, 2.0)))
    f = fc.MatrixField.from_function(dom, lambda y, s: np.cos(y) * s)
    w = fc.Form(dom, 1, (1, 1), {(1,): f})  # f dy? no: component (1,) is ds
    out = fc.pushforward(w, "s")
    want = np.cos(dom.axes[0].nodes) * 2.0  # integral of s over [0, 2]
    assert np.max(np.abs(out.component(()).samples[..., 0, 0] - want)) < 1e-12


def test_pushforward_of_pullback_is_zero():
    dom = fc.Domain((fc.circle("y", 16),))
    w = fc.Form.from_field(fc.MatrixField.from_function(dom, lambda y: np.sin(y)))
    s = fc.interval("s", 8, 0.0, 1.0)
    pw = fc.pullback_insert(w, s)
    assert fc.pushforward(pw, "s").max_abs() == 0.0


def test_pushforward_defect_identity():
    # nu_* d alpha - d nu_* alpha = (-1)^k (restrict_hi - restrict_lo) alpha
    rng = np.random.default_rng(3)
    s = fc.interval("s", 12, -1.0, 1.0)
    dom = fc.Domain((fc.circle("y", 20), s))
    for k in (0, 1):
        alpha = band_limited_form(dom, rng, k, shape=(2, 2), bandwidth=2)
        lhs = fc.pushforward(fc.ext_d(alpha), "s")
        if k == 0:
            rhs = fc.Form.zero(dom.drop(s), 0, (2, 2))  # nu_* of a 0-form
        else:
            rhs = fc.ext_d(fc.pushforward(alpha, "s"))
        bdry = ((-1.0) ** k) * (fc.restrict(alpha, "s", "high")
                                - fc.restrict(alpha, "s", "low"))
        res = lhs - rhs - bdry
        assert res.max_abs() < 1e-8 * (1.0 + alpha.max_abs())


def test_restrict():
    x = fc.interval("x", 9, 0.0, 1.0)
    dom = fc.Domain((x, fc.circle("theta", 16)))
    xf = fc.MatrixField.from_function(dom, lambda x, theta: x + 0 * theta)
    w = fc.Form(dom, 1, (1, 1), {(1,): xf})      # x dtheta
    at0 = fc.restrict(w, "x", "low")
    assert at0.max_abs() == 0.0
    at1 = fc.restrict(w, "x", "high")
    assert np.allclose(at1.component((0,)).samples, 1.0)
    dx = fc.Form(dom, 1, (1, 1), {(0,): fc.MatrixField.constant(dom, [[1.0]])})
    assert fc.restrict(dx, "x", "low").max_abs() == 0.0
    with pytest.raises(DomainMismatchError):
        fc.restrict(w, "theta", "low")


def test_integrate_top_circle():
    dom = circle_domain()
    dth = fc.Form(dom, 1, (1, 1), {(0,): fc.MatrixField.constant(dom, [[1.0]])})
    assert abs(fc.integrate_top(dth) - 2.0 * np.pi) < 1e-12


def test_integrate_top_sin_squared():
    # analytic quadrature oracle: int_{T^2} sin^2(t1) dt1 dt2 = 2 pi^2
    dom = fc.Domain((fc.circle("t1", 32), fc.circle("t2", 16)))
    f = fc.MatrixField.from_function(dom, lambda t1, t2: np.sin(t1) ** 2)
    w = fc.Form(dom, 2, (1, 1), {(0, 1): f})
    assert abs(fc.integrate_top(w) - 2.0 * np.pi ** 2) < 1e-10


def test_stokes_on_torus():
    rng = np.random.default_rng(4)
    dom = fc.Domain((fc.circle("t1", 24), fc.circle("t2", 24)))
    w = band_limited_form(dom, rng, 1, bandwidth=3)
    val = fc.integrate_top(fc.trace_form(fc.ext_d(w)))
    assert abs(val) < 1e-10 * (1.0 + w.max_abs())


def test_cumulative_integral():
    x = fc.interval("x", 10, 0.0, 1.0)
    dom = fc.Domain((x,))
    f = fc.MatrixField.from_function(dom, lambda x: x ** 2)
    F = fc.cumulative_integral(f, "x")
    assert F.samples[0, 0, 0] == 0.0
    assert np.max(np.abs(F.samples[:, 0, 0] - x.nodes ** 3 / 3.0)) < 1e-13


def test_domain_invariants():
    with pytest.raises(ValueError):
        fc.circle("c", 7)                 # odd circle
    with pytest.raises(ValueError):
        fc.interval("i", 4, 0.0, 1.0)     # too few nodes
    with pytest.raises(ValueError):
        fc.Domain((fc.circle("a", 8), fc.circle("a", 8)))  # duplicate names
    with pytest.raises(ValueError):
        fc.Domain((fc.interval("x", 6, 0, 1), fc.interval("y", 6, 0, 1)),
                  ("boundary-normal", "boundary-normal"))


def test_mixed_form_algebra():
    rng = np.random.default_rng(5)
    dom = fc.Domain((fc.circle("a", 16), fc.circle("b", 16)))
    m = fc.MixedForm.constant(dom, [[1.0]])
    w = band_limited_form(dom, rng, 1)
    tot = m + fc.MixedForm.from_form(w)
    assert tot.degrees == [0, 1]
    sq = tot.wedge(tot)
    assert 2 in sq.parts or sq.part(2).max_abs() == 0.0
    assert (tot.select("odd") - fc.MixedForm.from_form(w)).max_abs() < 1e-14
