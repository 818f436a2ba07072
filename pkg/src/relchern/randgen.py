"""Seeded band-limited random fields and forms for property tests and scenarios.

Everything here is driven by a numpy Generator so that a config seed fixes all
test data bit-for-bit.  "Band-limited" means: a short trigonometric sum on
circle axes and a low-degree polynomial in the affine coordinate on interval
axes, so spectral grids resolve the data (and all its products that appear in
the tested identities) exactly.
"""

from __future__ import annotations

import numpy as np

from .formcalc import Domain, Form, MatrixField, MixedForm

__all__ = ["band_limited_field", "band_limited_form", "band_limited_mixed"]


def _axis_profile(axis, rng, bandwidth, decay_at=()):
    """Random smooth profile sampled on one axis; optionally flat-zero at ends."""
    x = axis.nodes
    if axis.kind == "circle":
        out = np.zeros(axis.n, dtype=complex)
        for k in range(1, bandwidth + 1):
            c = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            out += (c[0] * np.exp(1j * k * x) + c[1] * np.exp(-1j * k * x)) / k
        return out + rng.standard_normal() + 1j * rng.standard_normal()
    t = (2.0 * x - (axis.lo + axis.hi)) / (axis.hi - axis.lo)
    coeffs = rng.standard_normal(bandwidth + 1) + 1j * rng.standard_normal(bandwidth + 1)
    out = np.polynomial.polynomial.polyval(t, coeffs)
    if "low" in decay_at:
        out = out * (1.0 + t) ** 2 / 2.0
    if "high" in decay_at:
        out = out * (1.0 - t) ** 2 / 2.0
    return out


def band_limited_field(domain: Domain, rng, rows=1, cols=1, bandwidth=2,
                       amplitude=1.0, decay=None):
    """Random separable-sum band-limited matrix field.

    ``decay`` maps axis name -> tuple of ends at which the field must vanish
    to second order (used to keep model data supported away from artificial
    grid edges).
    """
    decay = decay or {}
    n_terms = 2
    total = np.zeros(domain.shape + (rows, cols), dtype=complex)
    for _ in range(n_terms):
        coef = (rng.standard_normal((rows, cols))
                + 1j * rng.standard_normal((rows, cols)))
        prof = np.ones(domain.shape, dtype=complex)
        for i, ax in enumerate(domain.axes):
            p = _axis_profile(ax, rng, bandwidth, decay.get(ax.name, ()))
            shape = [1] * len(domain.axes)
            shape[i] = ax.n
            prof = prof * p.reshape(shape)
        total += prof[..., None, None] * coef
    scale = np.max(np.abs(total))
    if scale > 0:
        total *= amplitude / scale
    return MatrixField(domain, total)


def band_limited_form(domain: Domain, rng, degree, shape=(1, 1), bandwidth=2,
                      amplitude=1.0, decay=None):
    """Random band-limited form with every degree-``degree`` component filled."""
    from itertools import combinations
    out = Form.zero(domain, degree, shape)
    for J in combinations(range(domain.dim), degree):
        out.set_component(J, band_limited_field(domain, rng, shape[0], shape[1],
                                                bandwidth, amplitude, decay))
    return out


def band_limited_mixed(domain: Domain, rng, degrees, shape=(1, 1), bandwidth=2,
                       amplitude=1.0, decay=None):
    parts = {k: band_limited_form(domain, rng, k, shape, bandwidth, amplitude, decay)
             for k in degrees if k <= domain.dim}
    return MixedForm(domain, shape, parts)


def invertible_symbol(domain: Domain, rng, size=1, bandwidth=2, margin=0.35):
    """Random invertible matrix field: exp of a small band-limited field."""
    from scipy.linalg import expm
    h = band_limited_field(domain, rng, size, size, bandwidth, amplitude=margin)
    return MatrixField(domain, expm(h.samples))
