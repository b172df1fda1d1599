"""Gauge-invariant nonlinearity G(z, u) = psi(z, |u|) u and its truncations.

The canonical instance is the power law psi(s) = lam * s**alpha with the
critical exponent alpha = 2/(n-1).  For m >= 1 the truncated profile
continues psi past s = m by

    psi_m(s) = m^2 (psi(s)/s^2 - psi(m)/s^2 + psi(m)/m^2),

which matches psi and psi' at s = m and keeps G_m globally Lipschitz.
m = 0 means no truncation.

A z-dependent ``plugin`` psi(x, y, s) may replace the power law.  On grid
fields x and y arrive as arrays of shape (n, N), so x[j] broadcasts against
s; pointwise calls without coordinates pass x = y = 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import kernels
from .errors import ConfigurationError, UnsupportedRegimeError, UsageError
from .spectral import GridField

__all__ = [
    "NonlinearitySpec",
    "critical_alpha",
    "psi",
    "psi_m",
    "dpsi_m",
    "gtilde",
    "eval_G_m",
    "g_m_values",
]


def critical_alpha(n: int) -> float:
    if n < 2:
        raise UnsupportedRegimeError("the critical exponent 2/(n-1) needs n >= 2")
    return 2.0 / (n - 1)


@dataclass(frozen=True)
class NonlinearitySpec:
    lam: float = 1.0
    alpha: float | None = None
    m: int = 0
    form: str = "power"
    plugin: Callable | None = None

    def __post_init__(self):
        if self.m < 0:
            raise ConfigurationError(f"truncation level m must be >= 0, got {self.m}")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha}")
        if self.form not in ("power", "plugin"):
            raise ConfigurationError(f"unknown nonlinearity form {self.form!r}")
        if self.form == "plugin" and self.plugin is None:
            raise ConfigurationError("form='plugin' needs a plugin callable psi(x, y, sigma)")

    def for_dimension(self, n: int) -> "NonlinearitySpec":
        """Fill in alpha = 2/(n-1) when it was left unset."""
        if self.alpha is not None:
            return self
        return replace(self, alpha=critical_alpha(n))

    def with_m(self, m: int) -> "NonlinearitySpec":
        return replace(self, m=int(m))

    def with_lam(self, lam: float) -> "NonlinearitySpec":
        return replace(self, lam=float(lam))

    def _alpha(self):
        if self.alpha is None:
            raise ConfigurationError("alpha unset; call for_dimension(n) first")
        return float(self.alpha)


def _sigma(sigma):
    s = np.asarray(sigma, dtype=float)
    if np.any(s < 0):
        raise UsageError("sigma must be nonnegative")
    return s


def _plugin_psi(spec, s, x=None, y=None):
    x = 0.0 if x is None else x
    y = 0.0 if y is None else y
    return np.asarray(spec.plugin(x, y, s), dtype=float)


def _plugin_psi_m(spec, s, x=None, y=None):
    p = _plugin_psi(spec, s, x, y)
    m = spec.m
    if m == 0:
        return p
    pm = _plugin_psi(spec, np.full_like(s, float(m)), x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = m * m * (p / s**2 - pm / s**2 + pm / (m * m))
    return np.where(s > m, hi, p)


def _out(val, sigma):
    return float(val) if np.ndim(sigma) == 0 else val


def psi(sigma, spec: NonlinearitySpec, x=None, y=None):
    """Untruncated profile psi(sigma)."""
    s = _sigma(sigma)
    if spec.form == "plugin":
        return _out(_plugin_psi(spec, s, x, y), sigma)
    return _out(kernels.psi_m(s, spec.lam, spec._alpha(), 0.0), sigma)


def psi_m(sigma, spec: NonlinearitySpec, x=None, y=None):
    s = _sigma(sigma)
    if spec.form == "plugin":
        return _out(_plugin_psi_m(spec, s, x, y), sigma)
    return _out(kernels.psi_m(s, spec.lam, spec._alpha(), float(spec.m)), sigma)


def dpsi_m(sigma, spec: NonlinearitySpec, x=None, y=None):
    """d/dsigma psi_m; central differences for plugins."""
    s = _sigma(sigma)
    if spec.form == "plugin":
        h = 1e-6 * np.maximum(1.0, s)
        lo = np.maximum(s - h, 0.0)
        d = (_plugin_psi_m(spec, s + h, x, y) - _plugin_psi_m(spec, lo, x, y)) / (s + h - lo)
        return _out(d, sigma)
    return _out(kernels.dpsi_m(s, spec.lam, spec._alpha(), float(spec.m)), sigma)


# 20-point Gauss-Legendre on [0, 1] for plugin energy densities
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _gl_integral(spec, a, b, x, y):
    """int_a^b s psi_m(s) ds, elementwise over the flat arrays a <= b."""
    total = np.zeros_like(b)
    for xk, wk in zip(_GL_X, _GL_W):
        s = a + (b - a) * xk
        total += wk * s * _plugin_psi_m(spec, s, x, y)
    return total * (b - a)


def gtilde(sigma, spec: NonlinearitySpec, x=None, y=None):
    """Energy density int_0^sigma s psi_m(s) ds (closed form for the power law).

    Plugins are integrated by Gauss-Legendre, split at s = m where psi_m
    changes formula.
    """
    s = _sigma(sigma)
    if spec.form == "plugin":
        flat = s.reshape(-1)
        if spec.m == 0:
            val = _gl_integral(spec, np.zeros_like(flat), flat, x, y)
        else:
            mid = np.minimum(flat, float(spec.m))
            val = (_gl_integral(spec, np.zeros_like(flat), mid, x, y)
                   + _gl_integral(spec, mid, np.maximum(flat, mid), x, y))
        return _out(val.reshape(s.shape), sigma)
    return _out(kernels.gtilde_m(s, spec.lam, spec._alpha(), float(spec.m)), sigma)


def g_m_values(values, spec: NonlinearitySpec, basis=None):
    """psi_m(|u|) u on raw grid arrays of shape (..., N)."""
    if spec.form == "plugin":
        if basis is None:
            raise UsageError("plugin nonlinearities need the basis for node coordinates")
        n = basis.n
        x, y = basis.nodes[:, :n].T, basis.nodes[:, n:].T
        return _plugin_psi_m(spec, np.abs(values), x, y) * values
    return kernels.g_m(values, spec.lam, spec._alpha(), float(spec.m))


def eval_G_m(u: GridField, spec: NonlinearitySpec) -> GridField:
    return GridField(g_m_values(u.values, spec, u.basis), u.basis)
