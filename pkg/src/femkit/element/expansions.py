"""Orthonormal (Dubiner) polynomial bases on the reference simplices.

The recurrences work on "jets": arrays of shape ``(1 + tdim, npts)`` whose
row 0 holds values and rows ``1..tdim`` the partial derivatives with
respect to the reference coordinates. Every recurrence step is a product
or linear combination, so derivatives come out exactly and without the
collapsed-coordinate singularity.
"""
import numpy as np


def _mul(a, b):
    out = np.empty_like(a)
    out[0] = a[0] * b[0]
    out[1:] = a[0] * b[1:] + a[1:] * b[0]
    return out


def _coord_jets(points):
    """Jets of the coordinates mapped from ``[0, 1]`` simplices to ``[-1, 1]``."""
    npts, tdim = points.shape
    jets = []
    for k in range(tdim):
        j = np.zeros((1 + tdim, npts))
        j[0] = 2.0 * points[:, k] - 1.0
        j[1 + k] = 2.0
        jets.append(j)
    return jets


def _const(value, like):
    j = np.zeros_like(like)
    j[0] = value
    return j


def _jrc(a, b, n):
    """Three-term recurrence coefficients of Jacobi polynomials ``P_n^{(a,b)}``."""
    an = (2 * n + 1 + a + b) * (2 * n + 2 + a + b) / (2.0 * (n + 1) * (n + 1 + a + b))
    bn = (a * a - b * b) * (2 * n + 1 + a + b) / (2.0 * (n + 1) * (2 * n + a + b) * (n + 1 + a + b))
    cn = (n + a) * (n + b) * (2 * n + 2 + a + b) / ((n + 1) * (n + 1 + a + b) * (2 * n + a + b))
    return an, bn, cn


def _line(points, n):
    (x,) = _coord_jets(points)
    res = [None] * (n + 1)
    res[0] = _const(1.0, x)
    if n >= 1:
        res[1] = x.copy()
    for p in range(1, n):
        a, b, c = _jrc(0, 0, p)
        res[p + 1] = a * _mul(x, res[p]) - c * res[p - 1]
    for p in range(n + 1):
        res[p] = res[p] * np.sqrt(p + 0.5)
    return res


def _tri_idx(p, q):
    return (p + q) * (p + q + 1) // 2 + q


def _triangle(points, n):
    x, y = _coord_jets(points)
    one = _const(1.0, x)
    f1 = 0.5 * (2.0 * x + one + y)
    half_1my = 0.5 * (one - y)
    f2 = _mul(half_1my, half_1my)
    res = [None] * ((n + 1) * (n + 2) // 2)
    res[0] = one
    for p in range(1, n + 1):
        a = (2.0 * p - 1.0) / p
        r = a * _mul(f1, res[_tri_idx(p - 1, 0)])
        if p > 1:
            r = r - (a - 1.0) * _mul(f2, res[_tri_idx(p - 2, 0)])
        res[_tri_idx(p, 0)] = r
    for p in range(n):
        res[_tri_idx(p, 1)] = _mul(res[_tri_idx(p, 0)], 0.5 * ((1.0 + 2.0 * p) * one + (3.0 + 2.0 * p) * y))
    for p in range(n - 1):
        for q in range(1, n - p):
            a1, a2, a3 = _jrc(2 * p + 1, 0, q)
            res[_tri_idx(p, q + 1)] = (_mul(a1 * y + a2 * one, res[_tri_idx(p, q)])
                                       - a3 * res[_tri_idx(p, q - 1)])
    for p in range(n + 1):
        for q in range(n - p + 1):
            res[_tri_idx(p, q)] = res[_tri_idx(p, q)] * np.sqrt((p + 0.5) * (p + q + 1.0))
    return res


def _tet_idx(p, q, r):
    s = p + q + r
    t = q + r
    return s * (s + 1) * (s + 2) // 6 + t * (t + 1) // 2 + r


def _tetrahedron(points, n):
    x, y, z = _coord_jets(points)
    one = _const(1.0, x)
    f1 = 0.5 * (2.0 * one + 2.0 * x + y + z)
    hyz = 0.5 * (y + z)
    f2 = _mul(hyz, hyz)
    f3 = 0.5 * (one + 2.0 * y + z)
    f4 = 0.5 * (one - z)
    f5 = _mul(f4, f4)
    res = [None] * ((n + 1) * (n + 2) * (n + 3) // 6)
    res[0] = one
    if n >= 1:
        res[_tet_idx(1, 0, 0)] = f1
    for p in range(1, n):
        a1 = (2.0 * p + 1.0) / (p + 1.0)
        a2 = p / (p + 1.0)
        res[_tet_idx(p + 1, 0, 0)] = (a1 * _mul(f1, res[_tet_idx(p, 0, 0)])
                                      - a2 * _mul(f2, res[_tet_idx(p - 1, 0, 0)]))
    for p in range(n):
        res[_tet_idx(p, 1, 0)] = _mul(res[_tet_idx(p, 0, 0)],
                                      p * (one + y) + 0.5 * (2.0 * one + 3.0 * y + z))
    for p in range(n - 1):
        for q in range(1, n - p):
            aq, bq, cq = _jrc(2 * p + 1, 0, q)
            res[_tet_idx(p, q + 1, 0)] = (_mul(aq * f3 + bq * f4, res[_tet_idx(p, q, 0)])
                                          - cq * _mul(f5, res[_tet_idx(p, q - 1, 0)]))
    for p in range(n):
        for q in range(n - p):
            res[_tet_idx(p, q, 1)] = _mul(res[_tet_idx(p, q, 0)],
                                          (1.0 + p + q) * one + (2.0 + p + q) * z)
    for p in range(n - 1):
        for q in range(n - p - 1):
            for r in range(1, n - p - q):
                ar, br, cr = _jrc(2 * p + 2 * q + 2, 0, r)
                res[_tet_idx(p, q, r + 1)] = (_mul(ar * z + br * one, res[_tet_idx(p, q, r)])
                                              - cr * res[_tet_idx(p, q, r - 1)])
    for p in range(n + 1):
        for q in range(n - p + 1):
            for r in range(n - p - q + 1):
                res[_tet_idx(p, q, r)] = res[_tet_idx(p, q, r)] * np.sqrt(
                    (p + 0.5) * (p + q + 1.0) * (p + q + r + 1.5))
    return res


_RECURRENCES = {1: _line, 2: _triangle, 3: _tetrahedron}


def tabulate_orthonormal(tdim, degree, points):
    """Orthonormal basis of ``P_degree`` at reference points.

    Returns an array of shape ``(1 + tdim, nbasis, npts)``: values followed
    by reference-coordinate derivatives. Orthonormality holds on the
    ``[-1, 1]`` simplex, i.e. up to a constant factor on the unit one.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.stack(_RECURRENCES[tdim](points, degree), axis=1)
