"""NumPy implementations of the pointwise kernels (fallback backend).

Power-law nonlinearity psi(s) = lam * s**alpha, truncated at level m
(m == 0 means untruncated):

    psi_m(s) = psi(s)                                         s <= m
             = lam * (m^2 s^(alpha-2) - m^(alpha+2) s^-2 + m^alpha)   s > m
"""

import numpy as np


def psi_m(sigma, lam, alpha, m):
    sigma = np.asarray(sigma, dtype=float)
    out = lam * sigma**alpha
    if m > 0:
        hi = sigma > m
        s = sigma[hi]
        out[hi] = lam * (m * m * s ** (alpha - 2.0) - m ** (alpha + 2.0) / (s * s) + m**alpha)
    return out


def dpsi_m(sigma, lam, alpha, m):
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lam * alpha * sigma ** (alpha - 1.0)
    if m > 0:
        hi = sigma > m
        s = sigma[hi]
        out[hi] = lam * (m * m * (alpha - 2.0) * s ** (alpha - 3.0) + 2.0 * m ** (alpha + 2.0) / s**3)
    return out


def gtilde_m(sigma, lam, alpha, m):
    sigma = np.asarray(sigma, dtype=float)
    out = lam * sigma ** (alpha + 2.0) / (alpha + 2.0)
    if m > 0:
        hi = sigma > m
        s = sigma[hi]
        out[hi] = lam * (
            m ** (alpha + 2.0) / (alpha + 2.0)
            + m * m * (s**alpha - m**alpha) / alpha
            - m ** (alpha + 2.0) * np.log(s / m)
            + 0.5 * m**alpha * (s * s - m * m)
        )
    return out


def g_m(u, lam, alpha, m):
    """G_m(u) = psi_m(|u|) u, elementwise."""
    u = np.asarray(u, dtype=complex)
    return psi_m(np.abs(u), lam, alpha, m) * u


def gtilde_sum(u, weights, lam, alpha, m):
    """Quadrature of G~_m(|u|) against ``weights`` over the last axis."""
    return gtilde_m(np.abs(u), lam, alpha, m) @ weights


def lp_sums(values, weights, p):
    """sum_i w_i |v_i|^p along the last axis; p = inf gives max |v_i|."""
    a = np.abs(np.asarray(values))
    if np.isinf(p):
        return a.max(axis=-1) if a.shape[-1] else np.zeros(a.shape[:-1])
    if p == 2.0:
        return (a * a) @ weights
    return a**p @ weights
