"""Gauss rules on the reference interval, triangle and tetrahedron."""
from dataclasses import dataclass
from functools import lru_cache
from math import ceil

import numpy as np
from scipy.special import roots_jacobi

from femkit import reference
from femkit.errors import DegreeOutOfRange

MAX_DEGREE = 20


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (npts, tdim) reference coordinates
    weights: np.ndarray  # (npts,), summing to the reference volume
    degree: int

    def __len__(self):
        return len(self.weights)


def _jacobi_and_derivative(m, alpha, x):
    """P_m^(alpha, 0)(x) and its derivative by the three-term recurrence."""
    a = alpha
    p0, d0 = np.ones_like(x), np.zeros_like(x)
    p1 = 0.5 * ((a + 2) * x + a)
    d1 = np.full_like(x, 0.5 * (a + 2))
    if m == 0:
        return p0, d0
    for n in range(2, m + 1):
        s = 2 * n + a
        c0 = 2 * n * (n + a) * (s - 2)
        c1 = (s - 1) * s * (s - 2)
        c2 = (s - 1) * a * a
        c3 = 2 * (n + a - 1) * (n - 1) * s
        p2 = ((c1 * x + c2) * p1 - c3 * p0) / c0
        d2 = ((c1 * x + c2) * d1 + c1 * p1 - c3 * d0) / c0
        p0, p1, d0, d1 = p1, p2, d1, d2
    return p1, d1


def _gauss_jacobi01(m, alpha):
    """``m``-point rule for ``int_0^1 f(t) (1 - t)^alpha dt``, in long double.

    scipy's nodes are polished by Newton steps in extended precision and the
    weights recomputed from 2^(alpha+1) / ((1 - x^2) P_m'(x)^2), which holds
    for Gauss-Jacobi rules with beta = 0. This keeps the collapsed
    tetrahedron rules exact to about one ulp.
    """
    x = roots_jacobi(m, alpha, 0.0)[0].astype(np.longdouble)
    for _ in range(3):
        p, dp = _jacobi_and_derivative(m, alpha, x)
        x = x - p / dp
    _, dp = _jacobi_and_derivative(m, alpha, x)
    w = np.longdouble(2.0) ** (alpha + 1) / ((1 - x * x) * dp * dp)
    return (x + 1) / 2, w / np.longdouble(2.0) ** (alpha + 1)


@lru_cache(maxsize=None)
def _rule(tdim, degree):
    m = ceil((degree + 1) / 2)
    if tdim == 0:
        return np.zeros((1, 0)), np.ones(1)
    a, wa = _gauss_jacobi01(m, 0)
    if tdim == 1:
        return a[:, None].astype(float), wa.astype(float)
    b, wb = _gauss_jacobi01(m, 1)
    if tdim == 2:
        A, B = np.meshgrid(a, b, indexing="ij")
        pts = np.column_stack([(A * (1 - B)).ravel(), B.ravel()])
        return pts.astype(float), np.outer(wa, wb).ravel().astype(float)
    c, wc = _gauss_jacobi01(m, 2)
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    pts = np.column_stack([(A * (1 - B) * (1 - C)).ravel(), (B * (1 - C)).ravel(), C.ravel()])
    w = (wa[:, None, None] * wb[None, :, None] * wc[None, None, :]).ravel()
    return pts.astype(float), w.astype(float)


def quadrature_rule(cell, degree):
    """Rule exact for polynomials of total degree ``degree`` on ``cell``.

    Intervals use Gauss-Legendre with ``ceil((degree + 1) / 2)`` points;
    simplices use collapsed (Duffy) tensor Gauss-Jacobi rules.
    """
    tdim = reference.cell_tdim(cell) if not isinstance(cell, int) else cell
    if not 1 <= degree <= MAX_DEGREE:
        raise DegreeOutOfRange(f"quadrature degree {degree} outside 1..{MAX_DEGREE}")
    pts, w = _rule(tdim, degree)
    return QuadratureRule(pts.copy(), w.copy(), degree)


def facet_rule(tdim, degree):
    """Rule on the reference facet simplex (dimension ``tdim - 1``)."""
    if tdim == 1:
        return QuadratureRule(np.zeros((1, 0)), np.ones(1), degree)
    return quadrature_rule(tdim - 1, degree)


def map_facet_points(tdim, facet, facet_points, vertex_order=None):
    """Reference-cell coordinates of facet-rule points on local facet ``facet``.

    ``vertex_order`` permutes the facet's local vertices, which is how the
    points are seen from the neighbouring cell of an interior facet.
    """
    fv = list(reference.sub_entities(tdim, tdim - 1)[facet])
    if vertex_order is not None:
        fv = [fv[i] for i in vertex_order]
    V = reference.reference_vertices(tdim)[fv]
    lam = reference.barycentric(tdim - 1, facet_points) if tdim > 1 else np.ones((len(facet_points), 1))
    return lam @ V
