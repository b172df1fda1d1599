"""Lebesgue, twisted Sobolev and mixed space-time norms; charge and energy.

The twisted Sobolev norm is taken in the additive form

    ||f||_{W^{1,p}} = ||f||_p + sum_j (||Z_j f||_p + ||Zbar_j f||_p).

Mixed norms ||u||_{L^q(I, X)} integrate the per-sample space norm to the
power q with composite Simpson on uniform samples (trapezoid on the last
panel when the number of samples is even); q = inf takes the maximum.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .errors import TruncationOverflowWarning, UnsupportedRegimeError, UsageError
from .nonlinearity import NonlinearitySpec, gtilde
from .spectral import GridField, SpectralField, top_shell_mass

__all__ = [
    "AdmissiblePair",
    "MixedNormReport",
    "lp_norm",
    "lp_norms",
    "sobolev_norm",
    "sobolev_norms",
    "time_lq",
    "mixed_norm",
    "admissible",
    "canonical_pair",
    "dual_exponent",
    "charge",
    "kinetic_energy",
    "potential_energy",
    "energy",
]

INF = math.inf


def _exponent(p):
    if isinstance(p, Fraction):
        return float(p)
    return float(p)


def lp_norms(values, weights, p):
    """Row-wise L^p quadrature norms of grid arrays of shape (..., N)."""
    p = _exponent(p)
    if p < 1:
        raise UsageError(f"L^p norm needs p >= 1, got {p}")
    s = kernels.lp_sums(values, weights, p)
    return s if math.isinf(p) else np.power(s, 1.0 / p)


def lp_norm(g, p, weights=None) -> float:
    """(sum_nodes w |g|^p)^(1/p); p = inf gives max |g|."""
    if isinstance(g, GridField):
        weights = g.basis.weights if weights is None else weights
        g = g.values
    if weights is None:
        raise UsageError("raw arrays need explicit quadrature weights")
    return float(lp_norms(np.asarray(g), weights, p))


def _component_values(basis, coeffs, route):
    """Grid samples of f, Z_j f and Zbar_j f for coefficient arrays (..., B)."""
    out = [basis.synthesize_array(coeffs)]
    for j in range(basis.n):
        if route == "grid":
            out.append(basis.ladder_image(coeffs, "Z", j))
            out.append(basis.ladder_image(coeffs, "Zbar", j))
        else:
            for mats in (basis.ladder_Z, basis.ladder_Zbar):
                shifted = (mats[j] @ np.asarray(coeffs).reshape(-1, basis.size).T).T
                out.append(basis.synthesize_array(shifted.reshape(np.shape(coeffs))))
    return out


def sobolev_norms(basis, coeffs, p, route="grid"):
    """W^{1,p} norms for coefficient arrays of shape (..., B).

    route='grid' samples Z_j f and Zbar_j f exactly (no cutoff loss);
    route='spectral' goes through the truncated ladder matrices.
    """
    if route not in ("grid", "spectral"):
        raise UsageError(f"unknown route {route!r}")
    w = basis.weights
    return sum(lp_norms(v, w, p) for v in _component_values(basis, coeffs, route))


def sobolev_norm(c: SpectralField, p, route="grid") -> float:
    mass = top_shell_mass(c)
    if route == "spectral" and mass > c.basis.tolerances.top_shell:
        warnings.warn(f"top-shell mass {mass:.2e}: spectral ladder route truncates",
                      TruncationOverflowWarning, stacklevel=2)
    return float(sobolev_norms(c.basis, c.coeffs, p, route))


def time_lq(samples, dt, q):
    """L^q norm in time of uniformly spaced nonnegative samples."""
    s = np.asarray(samples, dtype=float)
    if s.size < 3:
        raise UsageError("mixed norms need at least 3 time samples")
    q = _exponent(q)
    if math.isinf(q):
        return float(s.max())
    with np.errstate(over="ignore"):
        f = s**q
    return float(_simpson(f, abs(dt)) ** (1.0 / q))


def _simpson(f, h):
    N = len(f) - 1
    if N % 2 == 1:
        return _simpson(f[:-1], h) + 0.5 * h * (f[-2] + f[-1])
    return h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum())


@dataclass
class MixedNormReport:
    q: float
    p: float
    interval: tuple
    samples: list
    value: float
    rule: str = "simpson"
    kind: str = "sobolev"

    def to_json(self) -> str:
        d = asdict(self)
        d["q"] = _json_num(self.q)
        d["p"] = _json_num(self.p)
        return json.dumps(d)


def _json_num(x):
    return "inf" if math.isinf(x) else x


def space_norms(trace, p, kind="sobolev"):
    """Per-sample space norms of a SolutionTrace-like object (times, coeffs, basis)."""
    b = trace.basis
    if kind == "sobolev":
        return np.atleast_1d(sobolev_norms(b, trace.coeffs, p))
    if kind == "lp":
        return np.atleast_1d(lp_norms(trace.grid_values, b.weights, p))
    raise UsageError(f"unknown space norm kind {kind!r}")


def mixed_norm(trace, q, p, kind="sobolev") -> MixedNormReport:
    times = np.asarray(trace.times)
    if len(times) < 3:
        raise UsageError("mixed norms need at least 3 time samples")
    samples = space_norms(trace, p, kind)
    dt = times[1] - times[0]
    rule = "max" if math.isinf(_exponent(q)) else (
        "simpson" if (len(times) - 1) % 2 == 0 else "simpson+trapezoid")
    return MixedNormReport(
        q=_exponent(q), p=_exponent(p),
        interval=(float(min(times[0], times[-1])), float(max(times[0], times[-1]))),
        samples=[float(s) for s in samples],
        value=time_lq(samples, dt, q), rule=rule, kind=kind,
    )


# -- admissible pairs ----------------------------------------------------------

def _frac(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return INF if x.strip().lower() in ("inf", "infinity") else Fraction(x)
    if isinstance(x, float) and math.isinf(x):
        return INF
    return Fraction(x)


@dataclass(frozen=True)
class AdmissiblePair:
    q: object
    p: object

    @property
    def qf(self) -> float:
        return float(self.q)

    @property
    def pf(self) -> float:
        return float(self.p)


def admissible(q, p, n) -> bool:
    """Exact check of 1/q = n(1/2 - 1/p) with 2 <= q <= inf, 2 <= p <= 2n/(n-1).

    Floats are taken at their exact binary value, so 8/3 must be passed as
    Fraction(8, 3) or the string '8/3'.
    """
    q, p = _frac(q), _frac(p)
    if p is INF or (q is not INF and q < 2) or p < 2:
        return False
    if n > 1 and p > Fraction(2 * n, n - 1):
        return False
    inv_q = Fraction(0) if q is INF else 1 / q
    return inv_q == n * (Fraction(1, 2) - 1 / p)


def canonical_pair(n) -> AdmissiblePair:
    """(gamma, rho) = (2n/(n-1), 2n^2/(n^2-n+1))."""
    if n < 2:
        raise UnsupportedRegimeError("the distinguished pair (gamma, rho) needs n >= 2")
    return AdmissiblePair(q=Fraction(2 * n, n - 1), p=Fraction(2 * n * n, n * n - n + 1))


def dual_exponent(p):
    p = _frac(p)
    if p is INF:
        return Fraction(1)
    if p == 1:
        return INF
    return p / (p - 1)


# -- conserved quantities ----------------------------------------------------------

def charge(c: SpectralField) -> float:
    return float(np.linalg.norm(c.coeffs))


def kinetic_energy(c: SpectralField, route="spectral") -> float:
    """1/4 sum_j (||Z_j f||^2 + ||Zbar_j f||^2), spectrally or from exact grid images."""
    b = c.basis
    if route == "spectral":
        return float(0.5 * np.sum(b.eigenvalues * np.abs(c.coeffs) ** 2))
    comps = _component_values(b, c.coeffs, "grid")[1:]
    return float(0.25 * sum(lp_norms(v, b.weights, 2) ** 2 for v in comps))


def potential_energy(values, basis, spec: NonlinearitySpec):
    """Quadrature of G~_m(|u|) for grid arrays (..., N)."""
    if spec.form == "plugin":
        n = basis.n
        x, y = basis.nodes[:, :n].T, basis.nodes[:, n:].T
        rows = np.atleast_2d(values)
        out = np.array([gtilde(np.abs(r), spec, x, y) @ basis.weights for r in rows])
        return out.reshape(np.shape(values)[:-1]) if np.ndim(values) > 1 else float(out[0])
    return kernels.gtilde_sum(values, basis.weights, spec.lam, spec._alpha(), float(spec.m))


def energy(c: SpectralField, spec: NonlinearitySpec, route="spectral") -> float:
    """Kinetic energy plus the quadrature of G~(|f|); uses spec.m for the density."""
    spec = spec.for_dimension(c.basis.n) if spec.alpha is None else spec
    pot = potential_energy(c.basis.synthesize_array(c.coeffs), c.basis, spec)
    return kinetic_energy(c, route) + float(pot)
