"""Finite-difference realizations of Z_j, Zbar_j and the twisted Laplacian.

These act on point-evaluable functions ``f(points) -> values`` with points of
shape (N, 2n) laid out as (x_1..x_n, y_1..y_n), and serve as oracles that
are independent of the spectral ladder matrices.
"""

import numpy as np

# 6th-order central first derivative
_OFFSETS = np.arange(-3, 4)
_WEIGHTS = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])


def partial(f, axis, h=1e-2):
    """Central-difference partial derivative of ``f`` along coordinate ``axis``."""

    def df(points):
        points = np.atleast_2d(points)
        N, d = points.shape
        shifted = np.repeat(points[None], len(_OFFSETS), axis=0)
        shifted[:, :, axis] += (_OFFSETS * h)[:, None]
        vals = f(shifted.reshape(-1, d)).reshape(len(_OFFSETS), N)
        return np.tensordot(_WEIGHTS, vals, axes=1) / h

    return df


def ladder(f, which, j, n, h=1e-2):
    """Z_j f (``which='Z'``) or Zbar_j f (``'Zbar'``) with d/dz_j = d_x - i d_y."""
    fx = partial(f, j, h)
    fy = partial(f, n + j, h)

    def g(points):
        points = np.atleast_2d(points)
        x, y = points[:, j], points[:, n + j]
        if which == "Z":
            return fx(points) - 1j * fy(points) + 0.5 * (x - 1j * y) * f(points)
        return -(fx(points) + 1j * fy(points)) + 0.5 * (x + 1j * y) * f(points)

    return g


def twisted_laplacian(f, n, h=1e-2):
    """1/2 sum_j (Z_j Zbar_j + Zbar_j Z_j) f, composed from first-order stencils."""

    def Lf(points):
        total = 0.0
        for j in range(n):
            total = total + ladder(ladder(f, "Zbar", j, n, h), "Z", j, n, h)(points)
            total = total + ladder(ladder(f, "Z", j, n, h), "Zbar", j, n, h)(points)
        return 0.5 * total

    return Lf


def stencil_eigenvalue(f, points, n, h=1e-2):
    """Rayleigh-type quotient sum(conj(f) L f) / sum(|f|^2) over sample points."""
    fv = f(points)
    Lv = twisted_laplacian(f, n, h)(points)
    return complex(np.vdot(fv, Lv) / np.vdot(fv, fv))
