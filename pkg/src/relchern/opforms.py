"""Operator-valued differential forms over a parameter domain.

An "element" is any object exposing the small algebra protocol used here:
``add``, ``scale``, ``mul``, ``zero_like``, ``map_arrays`` and a renormalized
``trace`` returning one complex number per parameter node.  Elements are
batched: every stored array carries a leading axis that runs over the
flattened parameter grid, so products and traces broadcast over all nodes at
once and exterior derivatives are linear maps applied along that axis.

Sign conventions match ``formcalc`` exactly (components on increasing axis
tuples, shuffle signs at operation time), so the scalar trace of an operator
form is an honest ``formcalc`` form.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainMismatchError
from .formcalc import Domain, Form, MatrixField, MixedForm, _perm_sign


def grid_linop(domain: Domain, axis, matrix, arr):
    """Apply a node-space linear map along one grid axis of a batched array."""
    i = domain.axis_index(axis)
    lead = arr.reshape(domain.shape + arr.shape[1:])
    out = np.tensordot(matrix, np.moveaxis(lead, i, 0), axes=([1], [0]))
    out = np.moveaxis(out, 0, i)
    return out.reshape(arr.shape)


class OperatorForm:
    """Single-degree form whose coefficients are batched algebra elements."""

    def __init__(self, domain: Domain, degree: int, components: dict):
        self.domain = domain
        self.degree = degree
        self.components = {tuple(J): e for J, e in components.items()
                           if not e.is_zero()}

    @classmethod
    def from_element(cls, domain, elem):
        return cls(domain, 0, {(): elem})

    def component(self, J, template):
        J = tuple(J)
        if J in self.components:
            return self.components[J]
        return template.zero_like()

    def _template(self):
        return next(iter(self.components.values()))

    def is_zero(self):
        return not self.components

    def __add__(self, other):
        if isinstance(other, OperatorForm):
            if other.degree != self.degree and (self.components and other.components):
                raise DomainMismatchError("cannot add operator forms of unequal degree")
            out = dict(self.components)
            for J, e in other.components.items():
                out[J] = out[J].add(e) if J in out else e
            deg = self.degree if self.components else other.degree
            return OperatorForm(self.domain, deg, out)
        raise TypeError

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c):
        return OperatorForm(self.domain, self.degree,
                            {J: e.scale(c) for J, e in self.components.items()})

    def __mul__(self, c):
        return self.scale(c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scale(-1.0)

    def wedge(self, other) -> "OperatorForm":
        out = {}
        for K, a in self.components.items():
            for L, b in other.components.items():
                if set(K) & set(L):
                    continue
                J = tuple(sorted(K + L))
                if len(J) > self.domain.dim:
                    continue
                term = a.mul(b).scale(float(_perm_sign(K + L)))
                out[J] = out[J].add(term) if J in out else term
        return OperatorForm(self.domain, self.degree + other.degree, out)

    def d(self) -> "OperatorForm":
        """Exterior derivative along the parameter axes (spectral)."""
        out = {}
        for K, e in self.components.items():
            for i, ax in enumerate(self.domain.axes):
                if i in K:
                    continue
                J = tuple(sorted(K + (i,)))
                sign = (-1.0) ** J.index(i)
                term = e.map_arrays(
                    lambda arr: grid_linop(self.domain, ax, ax.diff_matrix, arr)
                ).scale(sign)
                out[J] = out[J].add(term) if J in out else term
        return OperatorForm(self.domain, self.degree + 1, out)

    def trace_form(self) -> Form:
        """Renormalized trace of every coefficient, as a scalar form."""
        comps = {}
        for J, e in self.components.items():
            tr = np.asarray(e.trace()).reshape(self.domain.shape + (1, 1))
            comps[J] = MatrixField(self.domain, tr)
        return Form(self.domain, self.degree, (1, 1), comps)


class MixedOperatorForm:
    """Formal sum of operator forms of several degrees."""

    def __init__(self, domain, parts=None):
        self.domain = domain
        self.parts = {k: w for k, w in (parts or {}).items() if not w.is_zero()}

    @classmethod
    def from_element(cls, domain, elem):
        return cls(domain, {0: OperatorForm.from_element(domain, elem)})

    @classmethod
    def from_form(cls, w: OperatorForm):
        return cls(w.domain, {w.degree: w})

    def part(self, k):
        return self.parts.get(k)

    def __add__(self, other):
        if isinstance(other, OperatorForm):
            other = MixedOperatorForm.from_form(other)
        out = dict(self.parts)
        for k, w in other.parts.items():
            out[k] = out[k] + w if k in out else w
        return MixedOperatorForm(self.domain, out)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c):
        return MixedOperatorForm(self.domain,
                                 {k: w.scale(c) for k, w in self.parts.items()})

    def __mul__(self, c):
        return self.scale(c)

    __rmul__ = __mul__

    def wedge(self, other):
        if isinstance(other, OperatorForm):
            other = MixedOperatorForm.from_form(other)
        out = MixedOperatorForm(self.domain)
        for ka, wa in self.parts.items():
            for kb, wb in other.parts.items():
                if ka + kb > self.domain.dim:
                    continue
                w = wa.wedge(wb)
                k = ka + kb
                out.parts[k] = out.parts[k] + w if k in out.parts else w
        return MixedOperatorForm(self.domain,
                                 {k: w for k, w in out.parts.items()
                                  if not w.is_zero()})

    def exp(self) -> "MixedOperatorForm":
        """Finite exponential series of a degree-two operator form."""
        template = None
        for w in self.parts.values():
            template = w._template()
            break
        if template is None:
            raise ValueError("exp of an empty form needs an identity template")
        out = MixedOperatorForm.from_element(self.domain, template.identity_like())
        power = out
        for k in range(1, self.domain.dim // 2 + 1):
            power = power.wedge(self).scale(1.0 / k)
            if not power.parts:
                break
            out = out + power
        return out

    def exp_with_identity(self, ident) -> "MixedOperatorForm":
        out = MixedOperatorForm.from_element(self.domain, ident)
        power = out
        for k in range(1, self.domain.dim // 2 + 1):
            power = power.wedge(self).scale(1.0 / k)
            if not power.parts:
                break
            out = out + power
        return out

    def trace_mixed(self) -> MixedForm:
        out = MixedForm(self.domain, (1, 1))
        for k, w in self.parts.items():
            f = w.trace_form()
            if f.components:
                out.parts[k] = f
        return out
