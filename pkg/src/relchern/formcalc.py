"""Grids, sampled matrix fields and exterior calculus on products of circles and intervals.

Circles carry uniform grids with Fourier spectral differentiation; intervals
carry Chebyshev-Lobatto grids with collocation differentiation.  On band-limited
(resolvable) data every identity of smooth exterior calculus then holds to
rounding, which is what makes d.d=0, Stokes and the push-forward defect testable
at 1e-10 instead of being buried in finite-difference error.

Sign conventions, fixed once and pinned by tests:

* components of a degree-k form are stored only for strictly increasing
  k-tuples of axis indices;
* ``ext_d``:      (dw)_J      = sum_{i in J} (-1)^{pos_J(i)} d_i w_{J\\{i}};
* ``contract``:   (i_X w)_K   = (-1)^{pos_J(i)} w_J  with J = sort(K+{i})
  (dx_i normalised to the first slot);
* ``pushforward``: dx_i is moved to the *last* slot, so
  (v_* w)_K = (-1)^{|J|-1-pos_J(i)} Int w_J dx_i, and on an interval axis
  v_*(dw) - d(v_* w) = (-1)^{deg w} (restrict_hi w - restrict_lo w).

All reductions use a fixed lexicographic order so reports are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import (DegreeError, DomainMismatchError, ShapeError,
                     SingularValueError, StabilizationError)

__all__ = [
    "Axis", "circle", "interval", "Domain", "MatrixField", "Form",
    "partial_derivative", "ext_d", "wedge", "trace_form", "contract",
    "pushforward", "restrict", "restrict_at_node", "pullback_insert",
    "integrate_top", "cumulative_integral", "resample_interval",
    "zero_form", "scalar_form",
]

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# axes and domains
# ---------------------------------------------------------------------------

def _fourier_diff_matrix(n):
    # standard spectral differentiation for an even number of uniform nodes
    j = np.arange(n)
    col = np.zeros(n)
    col[1:] = 0.5 * (-1.0) ** j[1:] / np.tan(j[1:] * np.pi / n)
    D = np.empty((n, n))
    for i in range(n):
        D[i] = np.roll(col, i)
    D[np.arange(n), np.arange(n)] = 0.0
    return -D


def _cheb_diff_matrix(n):
    # Trefethen's matrix on cos(pi*j/N), j = 0..N (descending node order)
    N = n - 1
    x = np.cos(np.pi * np.arange(n) / N)
    c = np.hstack([2.0, np.ones(N - 1), 2.0]) * (-1.0) ** np.arange(n)
    X = np.tile(x, (n, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return D


def _clenshaw_curtis_weights(n):
    # weights on cos(pi*j/N); exact for polynomials of degree <= n-1
    N = n - 1
    theta = np.pi * np.arange(n) / N
    w = np.zeros(n)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N * N - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2.0 * k * theta[1:N]) / (4 * k * k - 1)
        v -= np.cos(N * theta[1:N]) / (N * N - 1)
    else:
        w[0] = w[N] = 1.0 / (N * N)
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2.0 * k * theta[1:N]) / (4 * k * k - 1)
    w[1:N] = 2.0 * v / N
    return w


def _cheb_cumulative_matrix(n, nodes_desc):
    # samples -> antiderivative of the interpolant, zero at the first node
    V = np.polynomial.chebyshev.chebvander(nodes_desc, n - 1)
    Vinv = np.linalg.inv(V)
    rows = []
    for i in range(n):
        ci = np.zeros(n)
        ci[i] = 1.0
        Ci = np.polynomial.chebyshev.chebint(ci)
        vals = np.polynomial.chebyshev.chebval(nodes_desc, Ci)
        rows.append(vals - vals[0])
    A = np.array(rows).T  # cheb coeffs -> cumulative values from nodes_desc[0]
    return A @ Vinv


@dataclass(frozen=True)
class Axis:
    """One grid factor: a circle (period 2 pi) or an interval [lo, hi]."""

    name: str
    kind: str                   # "circle" | "interval"
    n: int
    lo: float = 0.0
    hi: float = TWO_PI

    def __post_init__(self):
        if self.kind == "circle":
            if self.n < 8 or self.n % 2:
                raise ValueError("circle axis needs an even node count >= 8")
        elif self.kind == "interval":
            if self.n < 5:
                raise ValueError("interval axis needs >= 5 nodes")
            if not self.lo < self.hi:
                raise ValueError("interval endpoints must satisfy lo < hi")
        else:
            raise ValueError(f"unknown axis kind {self.kind!r}")

    @property
    def nodes(self):
        if self.kind == "circle":
            return np.arange(self.n) * (TWO_PI / self.n)
        N = self.n - 1
        t = np.cos(np.pi * np.arange(self.n) / N)          # descending
        return 0.5 * (self.lo + self.hi) - 0.5 * (self.hi - self.lo) * t

    @property
    def diff_matrix(self):
        if self.kind == "circle":
            return _fourier_diff_matrix(self.n)
        return _cheb_diff_matrix(self.n) * (-2.0 / (self.hi - self.lo))

    @property
    def weights(self):
        if self.kind == "circle":
            return np.full(self.n, TWO_PI / self.n)
        return _clenshaw_curtis_weights(self.n) * 0.5 * (self.hi - self.lo)

    @property
    def cumulative_matrix(self):
        """Matrix mapping samples to the cumulative integral from the low end."""
        if self.kind == "circle":
            raise DomainMismatchError("cumulative integral needs an interval axis")
        N = self.n - 1
        t = np.cos(np.pi * np.arange(self.n) / N)  # node j sits at x(t_j), ascending in x
        Q = _cheb_cumulative_matrix(self.n, t) * (-0.5 * (self.hi - self.lo))
        Q[0, :] = 0.0           # exact zero at the low end (t = +1 is node 0)
        return Q


def circle(name, n):
    return Axis(name, "circle", n)


def interval(name, n, lo=0.0, hi=1.0):
    return Axis(name, "interval", n, lo, hi)


ROLES = ("base", "boundary-normal", "fiber", "sphere", "parameter")


@dataclass(frozen=True)
class Domain:
    """Ordered product of axes with per-axis role tags."""

    axes: tuple
    roles: tuple = None

    def __post_init__(self):
        axes = tuple(self.axes)
        roles = tuple(self.roles) if self.roles is not None else ("base",) * len(axes)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "roles", roles)
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise ValueError("axis names must be unique within a domain")
        if len(roles) != len(axes):
            raise ValueError("one role per axis required")
        for r in roles:
            if r not in ROLES:
                raise ValueError(f"unknown role {r!r}")
        if sum(r == "boundary-normal" for r in roles) > 1:
            raise ValueError("at most one boundary-normal axis")

    @property
    def dim(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(a.n for a in self.axes)

    def axis_index(self, axis):
        name = axis.name if isinstance(axis, Axis) else axis
        for i, a in enumerate(self.axes):
            if a.name == name:
                return i
        raise DomainMismatchError(f"axis {name!r} not in domain")

    def axis(self, name):
        return self.axes[self.axis_index(name)]

    def drop(self, axis):
        i = self.axis_index(axis)
        return Domain(self.axes[:i] + self.axes[i + 1:],
                      self.roles[:i] + self.roles[i + 1:])

    def insert(self, axis, position=None, role="base"):
        if position is None:
            position = len(self.axes)
        return Domain(self.axes[:position] + (axis,) + self.axes[position:],
                      self.roles[:position] + (role,) + self.roles[position:])

    def meshes(self):
        """Coordinate arrays (broadcast to the grid shape), keyed by axis name."""
        grids = np.meshgrid(*[a.nodes for a in self.axes], indexing="ij") \
            if self.axes else []
        return {a.name: g for a, g in zip(self.axes, grids)}


# ---------------------------------------------------------------------------
# matrix fields
# ---------------------------------------------------------------------------

@dataclass
class MatrixField:
    """Complex matrix sampled at every grid node, shape grid + (rows, cols)."""

    domain: Domain
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        want = self.domain.shape
        if self.samples.ndim != len(want) + 2 or self.samples.shape[:-2] != want:
            raise ShapeError(
                f"samples shape {self.samples.shape} does not match grid {want}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("non-finite entries in field samples")

    @property
    def rows(self):
        return self.samples.shape[-2]

    @property
    def cols(self):
        return self.samples.shape[-1]

    @property
    def shape(self):
        return (self.rows, self.cols)

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_function(cls, domain, fn, rows=1, cols=1):
        """Sample ``fn(**coords) -> (rows, cols) array or scalar`` on the grid."""
        mesh = domain.meshes()
        out = np.zeros(domain.shape + (rows, cols), dtype=complex)
        it = np.ndindex(*domain.shape) if domain.shape else iter([()])
        for idx in it:
            val = fn(**{k: v[idx] for k, v in mesh.items()})
            out[idx] = np.asarray(val, dtype=complex).reshape(rows, cols) \
                if np.ndim(val) else val * np.eye(rows, cols)
        return cls(domain, out)

    @classmethod
    def constant(cls, domain, matrix):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        out = np.broadcast_to(matrix, domain.shape + matrix.shape).copy()
        return cls(domain, out)

    @classmethod
    def zeros(cls, domain, rows=1, cols=1):
        return cls(domain, np.zeros(domain.shape + (rows, cols), dtype=complex))

    # -- algebra -------------------------------------------------------------

    def _check_same_domain(self, other):
        if self.domain != other.domain:
            raise DomainMismatchError("fields live on different domains")

    def __add__(self, other):
        self._check_same_domain(other)
        return MatrixField(self.domain, self.samples + other.samples)

    def __sub__(self, other):
        self._check_same_domain(other)
        return MatrixField(self.domain, self.samples - other.samples)

    def __neg__(self):
        return MatrixField(self.domain, -self.samples)

    def __mul__(self, scalar):
        return MatrixField(self.domain, self.samples * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check_same_domain(other)
        if self.cols != other.rows:
            raise ShapeError(f"cannot multiply {self.shape} by {other.shape}")
        return MatrixField(self.domain, self.samples @ other.samples)

    def trace(self):
        tr = np.trace(self.samples, axis1=-2, axis2=-1)
        return MatrixField(self.domain, tr[..., None, None])

    def conj_transpose(self):
        return MatrixField(self.domain, np.conj(np.swapaxes(self.samples, -1, -2)))

    def min_singular_value(self):
        s = np.linalg.svd(self.samples, compute_uv=False)
        smin = s[..., -1]
        flat = int(np.argmin(smin))
        node = np.unravel_index(flat, smin.shape) if smin.shape else ()
        return float(smin.reshape(-1)[flat]), node

    def inverse(self, delta=1e-6):
        if self.rows != self.cols:
            raise ShapeError("inverse needs a square field")
        smin, node = self.min_singular_value()
        if smin <= delta:
            raise SingularValueError(
                f"field is singular: min singular value {smin:.3e} at node {node}",
                worst_node=node, smin=smin)
        return MatrixField(self.domain, np.linalg.inv(self.samples))

    def max_abs(self):
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0

    def is_end_stable(self, axis, end, tol=0.0):
        """Check the field is constant at the two outermost nodes of an axis end."""
        i = self.domain.axis_index(axis)
        sl = [slice(None)] * self.samples.ndim
        sl[i] = 0 if end == "low" else -1
        a = self.samples[tuple(sl)]
        sl[i] = 1 if end == "low" else -2
        b = self.samples[tuple(sl)]
        return float(np.max(np.abs(a - b))) <= tol + 1e-14 * (1.0 + self.max_abs())


# ---------------------------------------------------------------------------
# forms
# ---------------------------------------------------------------------------

def _perm_sign(seq):
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@dataclass
class Form:
    """Degree-k matrix-valued form: components on increasing axis-index tuples."""

    domain: Domain
    degree: int
    shape: tuple
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        # formal degrees above dim are allowed but necessarily have no components,
        # so graded products truncate silently (nilpotency of the form algebra)
        if self.degree < 0:
            raise DegreeError(f"degree {self.degree} out of range")
        if self.degree > self.domain.dim and self.components:
            raise DegreeError("components present above the top degree")
        for J, f in self.components.items():
            if len(J) != self.degree or list(J) != sorted(set(J)):
                raise ValueError(f"component key {J} is not an increasing {self.degree}-tuple")
            if f.domain != self.domain or f.shape != tuple(self.shape):
                raise DomainMismatchError("component field mismatch")

    # -- constructors --------------------------------------------------------

    @classmethod
    def zero(cls, domain, degree, shape=(1, 1)):
        return cls(domain, degree, tuple(shape), {})

    @classmethod
    def from_field(cls, f):
        """Wrap a MatrixField as a degree-0 form."""
        return cls(f.domain, 0, f.shape, {(): f})

    def component(self, J):
        J = tuple(J)
        if J in self.components:
            return self.components[J]
        return MatrixField.zeros(self.domain, *self.shape)

    def set_component(self, J, f):
        J = tuple(J)
        if f.max_abs() == 0.0:
            self.components.pop(J, None)
        else:
            self.components[J] = f

    # -- linear algebra ------------------------------------------------------

    def __add__(self, other):
        if (self.domain, self.degree, tuple(self.shape)) != \
           (other.domain, other.degree, tuple(other.shape)):
            raise DomainMismatchError("cannot add incompatible forms")
        out = Form.zero(self.domain, self.degree, self.shape)
        for J in sorted(set(self.components) | set(other.components)):
            out.set_component(J, self.component(J) + other.component(J))
        return out

    def __sub__(self, other):
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, scalar):
        out = Form.zero(self.domain, self.degree, self.shape)
        for J, f in self.components.items():
            out.set_component(J, f * scalar)
        return out

    __rmul__ = __mul__

    def max_abs(self):
        return max((f.max_abs() for f in self.components.values()), default=0.0)

    def copy(self):
        return Form(self.domain, self.degree, tuple(self.shape),
                    {J: MatrixField(self.domain, f.samples.copy())
                     for J, f in self.components.items()})


def scalar_form(domain, value):
    """Constant scalar 0-form."""
    return Form.from_field(MatrixField.constant(domain, [[value]]))


def zero_form(domain, degree, shape=(1, 1)):
    return Form.zero(domain, degree, shape)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def partial_derivative(f: MatrixField, axis) -> MatrixField:
    """Spectral derivative of a field along one axis of its domain."""
    i = f.domain.axis_index(axis)
    D = f.domain.axes[i].diff_matrix
    out = np.tensordot(D, np.moveaxis(f.samples, i, 0), axes=([1], [0]))
    return MatrixField(f.domain, np.moveaxis(out, 0, i))


def ext_d(w: Form) -> Form:
    """Exterior derivative; rejects top-degree input with a degree error."""
    if w.degree >= w.domain.dim:
        raise DegreeError("ext_d of a top-degree form overflows the dimension")
    out = Form.zero(w.domain, w.degree + 1, w.shape)
    acc = {}
    for K, f in w.components.items():
        for i in range(w.domain.dim):
            if i in K:
                continue
            J = tuple(sorted(K + (i,)))
            sign = (-1.0) ** J.index(i)
            term = sign * partial_derivative(f, w.domain.axes[i])
            acc[J] = term if J not in acc else acc[J] + term
    for J in sorted(acc):
        out.set_component(J, acc[J])
    return out


def wedge(a: Form, b: Form) -> Form:
    """Graded product with matrix-coefficient multiplication."""
    if a.domain != b.domain:
        raise DomainMismatchError("wedge operands live on different domains")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"coefficient shapes {a.shape} and {b.shape} do not chain")
    k = a.degree + b.degree
    out = Form.zero(a.domain, k, (a.shape[0], b.shape[1]))
    if k > a.domain.dim:
        return out
    acc = {}
    for K, fa in a.components.items():
        for L, fb in b.components.items():
            if set(K) & set(L):
                continue
            J = tuple(sorted(K + L))
            sign = _perm_sign(K + L)
            term = sign * (fa @ fb)
            acc[J] = term if J not in acc else acc[J] + term
    for J in sorted(acc):
        out.set_component(J, acc[J])
    return out


def trace_form(w: Form) -> Form:
    """Scalar-valued form obtained by tracing the matrix coefficients."""
    out = Form.zero(w.domain, w.degree, (1, 1))
    for J, f in w.components.items():
        out.set_component(J, f.trace())
    return out


def contract(w: Form, axis) -> Form:
    """Interior product with the coordinate vector of one axis (dx first)."""
    i = w.domain.axis_index(axis)
    if w.degree == 0:
        return Form.zero(w.domain, 0, w.shape)
    out = Form.zero(w.domain, w.degree - 1, w.shape)
    for J, f in w.components.items():
        if i not in J:
            continue
        K = tuple(j for j in J if j != i)
        out.set_component(K, ((-1.0) ** J.index(i)) * f)
    return out


def _integrate_axis(f: MatrixField, i: int) -> MatrixField:
    ax = f.domain.axes[i]
    w = ax.weights
    out = np.tensordot(w, np.moveaxis(f.samples, i, 0), axes=([0], [0]))
    return MatrixField(f.domain.drop(ax), out)


def pushforward(w: Form, axis) -> Form:
    """Integrate dx_axis-components over the axis (dx moved last); drop the rest.

    Circle axes use the trapezoid rule (spectrally exact), interval axes
    Clenshaw-Curtis, so the discrete fundamental theorem of calculus holds to
    rounding and the push-forward defect identity is testable at 1e-8.
    """
    i = w.domain.axis_index(axis)
    dom = w.domain.drop(w.domain.axes[i])
    if w.degree == 0:
        return Form.zero(dom, 0, w.shape)
    out = Form.zero(dom, w.degree - 1, w.shape)
    for J, f in w.components.items():
        if i not in J:
            continue
        sign = (-1.0) ** (len(J) - 1 - J.index(i))
        K = tuple(j if j < i else j - 1 for j in J if j != i)
        out.set_component(K, sign * _integrate_axis(f, i))
    return out


def restrict(w: Form, axis, end) -> Form:
    """Evaluate at an interval endpoint node and drop dx_axis components."""
    i = w.domain.axis_index(axis)
    ax = w.domain.axes[i]
    if ax.kind != "interval":
        raise DomainMismatchError(f"axis {ax.name!r} has no boundary")
    if end not in ("low", "high"):
        raise ValueError("end must be 'low' or 'high'")
    node = 0 if end == "low" else ax.n - 1
    return restrict_at_node(w, axis, node)


def restrict_at_node(w: Form, axis, node: int) -> Form:
    """Pull back along the slice {x_axis = node}; exact (no interpolation)."""
    i = w.domain.axis_index(axis)
    dom = w.domain.drop(w.domain.axes[i])
    out = Form.zero(dom, w.degree, w.shape)
    for J, f in w.components.items():
        if i in J:
            continue
        K = tuple(j if j < i else j - 1 for j in J)
        sl = [slice(None)] * f.samples.ndim
        sl[i] = node
        out.set_component(K, MatrixField(dom, f.samples[tuple(sl)]))
    return out


def pullback_insert(w: Form, new_axis: Axis, position=None, role="base") -> Form:
    """Constant extension along a new axis (pullback under the projection)."""
    dom = w.domain.insert(new_axis, position, role)
    pos = dom.axis_index(new_axis)
    out = Form.zero(dom, w.degree, w.shape)
    for J, f in w.components.items():
        K = tuple(j if j < pos else j + 1 for j in J)
        samples = np.expand_dims(f.samples, pos)
        samples = np.broadcast_to(samples, dom.shape + f.shape).copy()
        out.set_component(K, MatrixField(dom, samples))
    return out


def integrate_top(w: Form) -> complex:
    """Full tensor-product quadrature of a scalar top-degree form."""
    if w.degree != w.domain.dim:
        raise DegreeError("integrate_top needs a top-degree form")
    if tuple(w.shape) != (1, 1):
        raise ShapeError("integrate_top needs a scalar-valued form")
    if w.domain.dim == 0:
        return complex(w.component(()).samples[0, 0])
    J = tuple(range(w.domain.dim))
    f = w.component(J)
    weights = w.domain.axes[0].weights
    for a in w.domain.axes[1:]:
        weights = np.multiply.outer(weights, a.weights)
    vals = f.samples[..., 0, 0]
    return complex(np.sum((weights * vals).ravel(order="C")))


def cumulative_integral(f: MatrixField, axis) -> MatrixField:
    """Antiderivative from the low end of an interval axis (exact zero there)."""
    i = f.domain.axis_index(axis)
    Q = f.domain.axes[i].cumulative_matrix
    out = np.tensordot(Q, np.moveaxis(f.samples, i, 0), axes=([1], [0]))
    return MatrixField(f.domain, np.moveaxis(out, 0, i))


def resample_interval(w: Form, axis, new_axis: Axis) -> Form:
    """Barycentric re-interpolation of an interval axis onto a new interval axis."""
    i = w.domain.axis_index(axis)
    old = w.domain.axes[i]
    if old.kind != "interval" or new_axis.kind != "interval":
        raise DomainMismatchError("resample_interval needs interval axes")
    x, y = old.nodes, new_axis.nodes
    N = old.n - 1
    bw = np.ones(old.n) * (-1.0) ** np.arange(old.n)
    bw[0] *= 0.5
    bw[-1] *= 0.5
    diff = y[:, None] - x[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-14)
    with np.errstate(divide="ignore", invalid="ignore"):
        C = bw[None, :] / diff
    C[exact] = 0.0
    denom = C.sum(axis=1)
    M = C / denom[:, None]
    for r, c in zip(*np.nonzero(exact)):
        M[r, :] = 0.0
        M[r, c] = 1.0
    dom = Domain(w.domain.axes[:i] + (new_axis,) + w.domain.axes[i + 1:],
                 w.domain.roles)
    out = Form.zero(dom, w.degree, w.shape)
    # same geometric coordinate, different node set: coefficients just resample
    for J, f in w.components.items():
        s = np.tensordot(M, np.moveaxis(f.samples, i, 0), axes=([1], [0]))
        s = np.moveaxis(s, 0, i)
        out.set_component(J, MatrixField(dom, s))
    return out


def require_end_stable(w: Form, axis, tol=1e-12):
    """Raise unless every component of w is constant at both ends of the axis."""
    for J, f in w.components.items():
        for end in ("low", "high"):
            if not f.is_end_stable(axis, end, tol):
                raise StabilizationError(
                    f"component {J} not stabilized at {end} end of {axis!r}")


def dx_wedge(w: Form, axis) -> Form:
    """Left wedge by dx_axis of a form without dx_axis components (dx first)."""
    i = w.domain.axis_index(axis)
    out = Form.zero(w.domain, w.degree + 1, w.shape)
    if w.degree + 1 > w.domain.dim:
        return out
    for K, f in w.components.items():
        if i in K:
            raise DegreeError("dx_wedge operand already contains the axis")
        J = tuple(sorted(K + (i,)))
        out.set_component(J, ((-1.0) ** J.index(i)) * f)
    return out


def ext_d_tangential(w: Form, skip_axis) -> Form:
    """Exterior derivative with the partial derivative along one axis omitted."""
    i = w.domain.axis_index(skip_axis)
    out = Form.zero(w.domain, w.degree + 1, w.shape)
    if w.degree + 1 > w.domain.dim:
        return out
    acc = {}
    for K, f in w.components.items():
        for j in range(w.domain.dim):
            if j in K or j == i:
                continue
            J = tuple(sorted(K + (j,)))
            term = ((-1.0) ** J.index(j)) * partial_derivative(f, w.domain.axes[j])
            acc[J] = term if J not in acc else acc[J] + term
    for J in sorted(acc):
        out.set_component(J, acc[J])
    return out


def cumulative_integral_form(w: Form, axis) -> Form:
    """Component-wise antiderivative from the low end of an interval axis.

    The operand must not contain dx_axis; component tuples are unchanged.
    """
    i = w.domain.axis_index(axis)
    out = Form.zero(w.domain, w.degree, w.shape)
    for J, f in w.components.items():
        if i in J:
            raise DegreeError("cumulative_integral_form operand contains the axis")
        out.set_component(J, cumulative_integral(f, w.domain.axes[i]))
    return out


def integrate_coeffwise(w: Form, axis) -> Form:
    """Integrate every component's coefficients over an axis (no dx bookkeeping)."""
    i = w.domain.axis_index(axis)
    dom = w.domain.drop(w.domain.axes[i])
    out = Form.zero(dom, w.degree, w.shape)
    for J, f in w.components.items():
        if i in J:
            raise DegreeError("integrate_coeffwise operand contains the axis")
        K = tuple(j if j < i else j - 1 for j in J)
        out.set_component(K, _integrate_axis(f, i))
    return out


def scale_by_field(w: Form, field: MatrixField) -> Form:
    """Pointwise scaling of every component by a scalar (1x1) field."""
    if field.shape != (1, 1):
        raise ShapeError("scale_by_field needs a scalar field")
    out = Form.zero(w.domain, w.degree, w.shape)
    s = field.samples[..., 0, 0][..., None, None]
    for J, f in w.components.items():
        out.set_component(J, MatrixField(w.domain, f.samples * s))
    return out


# ---------------------------------------------------------------------------
# mixed-degree forms
# ---------------------------------------------------------------------------

class MixedForm:
    """Formal sum of forms of several degrees (the shape Chern characters take)."""

    def __init__(self, domain, shape=(1, 1), parts=None):
        self.domain = domain
        self.shape = tuple(shape)
        self.parts = {}
        for k, w in (parts or {}).items():
            if w.domain != domain or tuple(w.shape) != self.shape or w.degree != k:
                raise DomainMismatchError("inconsistent mixed-form part")
            if w.components:
                self.parts[k] = w

    @classmethod
    def from_form(cls, w):
        return cls(w.domain, w.shape, {w.degree: w})

    @classmethod
    def constant(cls, domain, matrix):
        return cls.from_form(Form.from_field(MatrixField.constant(domain, matrix)))

    @property
    def degrees(self):
        return sorted(self.parts)

    def part(self, k):
        if k in self.parts:
            return self.parts[k]
        return Form.zero(self.domain, k, self.shape)

    def _binary(self, other, op):
        out = MixedForm(self.domain, self.shape)
        for k in sorted(set(self.parts) | set(other.parts)):
            w = op(self.part(k), other.part(k))
            if w.components:
                out.parts[k] = w
        return out

    def __add__(self, other):
        if isinstance(other, Form):
            other = MixedForm.from_form(other)
        return self._binary(other, lambda a, b: a + b)

    def __sub__(self, other):
        if isinstance(other, Form):
            other = MixedForm.from_form(other)
        return self._binary(other, lambda a, b: a - b)

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, scalar):
        out = MixedForm(self.domain, self.shape)
        for k, w in self.parts.items():
            out.parts[k] = w * scalar
        return out

    __rmul__ = __mul__

    def map(self, op, degree_shift=0, domain=None, shape=None):
        """Apply a per-form linear map to every part."""
        results = {}
        for k, w in self.parts.items():
            r = op(w)
            if r.components:
                results[k + degree_shift] = r
        dom = domain
        shp = shape
        if dom is None or shp is None:
            probe = op(self.part(self.degrees[0] if self.parts else 0))
            dom = dom or probe.domain
            shp = shp or probe.shape
        return MixedForm(dom, shp, results)

    def wedge(self, other):
        if isinstance(other, Form):
            other = MixedForm.from_form(other)
        out = MixedForm(self.domain, (self.shape[0], other.shape[1]))
        for ka, wa in self.parts.items():
            for kb, wb in other.parts.items():
                if ka + kb > self.domain.dim:
                    continue
                w = wedge(wa, wb)
                if not w.components:
                    continue
                k = ka + kb
                out.parts[k] = out.parts[k] + w if k in out.parts else w
        return out

    def ext_d(self):
        out = MixedForm(self.domain, self.shape)
        for k, w in self.parts.items():
            if k >= self.domain.dim:
                continue  # d of a top-degree part vanishes identically
            r = ext_d(w)
            if r.components:
                out.parts[k + 1] = r
        return out

    def trace(self):
        out = MixedForm(self.domain, (1, 1))
        for k, w in self.parts.items():
            r = trace_form(w)
            if r.components:
                out.parts[k] = r
        return out

    def select(self, parity):
        """Even or odd part ("even" | "odd")."""
        keep = 0 if parity == "even" else 1
        return MixedForm(self.domain, self.shape,
                         {k: w for k, w in self.parts.items() if k % 2 == keep})

    def max_abs(self):
        return max((w.max_abs() for w in self.parts.values()), default=0.0)

    def copy(self):
        return MixedForm(self.domain, self.shape,
                         {k: w.copy() for k, w in self.parts.items()})
