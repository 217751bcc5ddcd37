"""Unrolled 3x3 symmetric positive-definite routines on plain floats.

The refinement loop solves one 3x3 system per Gauss-Newton step for every UAV
every epoch; numpy's per-call overhead dominates at this size, so the hot
path works on tuples of floats instead. Symmetric matrices are passed as the
6-tuple of their upper triangle ``(a00, a01, a02, a11, a12, a22)``.
"""

from __future__ import annotations

import math

Sym3 = tuple  # (a00, a01, a02, a11, a12, a22)


class NotPositiveDefinite(ArithmeticError):
    pass


def sym_from_matrix(m) -> Sym3:
    return (
        float(m[0][0]), float(m[0][1]), float(m[0][2]),
        float(m[1][1]), float(m[1][2]), float(m[2][2]),
    )


def sym_to_rows(a: Sym3) -> list[list[float]]:
    a00, a01, a02, a11, a12, a22 = a
    return [[a00, a01, a02], [a01, a11, a12], [a02, a12, a22]]


def cholesky3(a: Sym3) -> tuple[float, float, float, float, float, float]:
    """Lower factor ``L`` with ``L L^T = A`` as ``(l00, l10, l20, l11, l21, l22)``."""
    a00, a01, a02, a11, a12, a22 = a
    if not a00 > 0.0:
        raise NotPositiveDefinite("leading minor 1 is not positive")
    l00 = math.sqrt(a00)
    l10 = a01 / l00
    l20 = a02 / l00
    d1 = a11 - l10 * l10
    if not d1 > 0.0:
        raise NotPositiveDefinite("leading minor 2 is not positive")
    l11 = math.sqrt(d1)
    l21 = (a12 - l20 * l10) / l11
    d2 = a22 - l20 * l20 - l21 * l21
    if not d2 > 0.0:
        raise NotPositiveDefinite("leading minor 3 is not positive")
    return l00, l10, l20, l11, l21, math.sqrt(d2)


def cho_solve3(L, b) -> tuple[float, float, float]:
    l00, l10, l20, l11, l21, l22 = L
    # forward: L y = b
    y0 = b[0] / l00
    y1 = (b[1] - l10 * y0) / l11
    y2 = (b[2] - l20 * y0 - l21 * y1) / l22
    # back: L^T x = y
    x2 = y2 / l22
    x1 = (y1 - l21 * x2) / l11
    x0 = (y0 - l10 * x1 - l20 * x2) / l00
    return x0, x1, x2


def spd_solve3(a: Sym3, b) -> tuple[float, float, float]:
    return cho_solve3(cholesky3(a), b)


def spd_inverse3(a: Sym3) -> Sym3:
    """Inverse of an SPD matrix, returned exactly symmetric."""
    L = cholesky3(a)
    c0 = cho_solve3(L, (1.0, 0.0, 0.0))
    c1 = cho_solve3(L, (0.0, 1.0, 0.0))
    c2 = cho_solve3(L, (0.0, 0.0, 1.0))
    return (
        c0[0],
        0.5 * (c0[1] + c1[0]),
        0.5 * (c0[2] + c2[0]),
        c1[1],
        0.5 * (c1[2] + c2[1]),
        c2[2],
    )


def is_positive_definite(a: Sym3) -> bool:
    try:
        cholesky3(a)
    except NotPositiveDefinite:
        return False
    return True
