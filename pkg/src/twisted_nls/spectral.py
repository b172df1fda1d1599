"""Spectral and grid field types and the linear operations on them."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisTable
from .errors import TruncationOverflowWarning, UsageError

__all__ = [
    "SpectralField",
    "GridField",
    "analyze",
    "synthesize",
    "apply_ladder",
    "apply_L",
    "propagate_free",
    "top_shell_mass",
    "ladder_operator_ids",
]


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients of a function on C^n in the truncated eigenbasis."""

    coeffs: np.ndarray
    basis: BasisTable
    warnings: tuple = field(default=())

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.basis.size,):
            raise UsageError(f"expected {self.basis.size} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise UsageError("non-finite spectral coefficients")
        object.__setattr__(self, "coeffs", c)

    @property
    def basis_id(self) -> str:
        return self.basis.basis_id

    @classmethod
    def zeros(cls, basis):
        return cls(np.zeros(basis.size, dtype=complex), basis)

    @classmethod
    def unit(cls, basis, mu, nu):
        c = np.zeros(basis.size, dtype=complex)
        c[basis.index_of(mu, nu)] = 1.0
        return cls(c, basis)

    def __add__(self, other):
        _same_basis(self, other)
        return SpectralField(self.coeffs + other.coeffs, self.basis)

    def __sub__(self, other):
        _same_basis(self, other)
        return SpectralField(self.coeffs - other.coeffs, self.basis)

    def __mul__(self, scalar):
        return SpectralField(self.coeffs * scalar, self.basis)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


@dataclass(frozen=True, eq=False)
class GridField:
    """Complex samples of a function at the quadrature nodes."""

    values: np.ndarray
    basis: BasisTable

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.basis.grid_size,):
            raise UsageError(f"expected {self.basis.grid_size} grid values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise UsageError("non-finite grid values")
        object.__setattr__(self, "values", v)

    @property
    def basis_id(self) -> str:
        return self.basis.basis_id

    @classmethod
    def from_function(cls, func, basis):
        """Sample ``func(x, y)`` with x, y of shape (N, n) at the nodes."""
        n = basis.n
        nd = basis.nodes
        return cls(np.asarray(func(nd[:, :n], nd[:, n:]), dtype=complex).reshape(-1), basis)


def _same_basis(a, b):
    if a.basis is not b.basis and a.basis_id != b.basis_id:
        raise UsageError("fields belong to different basis tables")


def _check(obj, basis):
    if basis is not None and obj.basis is not basis and obj.basis_id != basis.basis_id:
        raise UsageError("field does not belong to the given basis table")
    return obj.basis


def analyze(g: GridField, b: BasisTable | None = None) -> SpectralField:
    """Quadrature projection: coeffs_k = sum_nodes w conj(Phi_k) g."""
    b = _check(g, b)
    return SpectralField(b.analyze_array(g.values), b)


def synthesize(c: SpectralField, b: BasisTable | None = None) -> GridField:
    b = _check(c, b)
    return GridField(b.synthesize_array(c.coeffs), b)


def ladder_operator_ids(n):
    return [f"Z{j + 1}" for j in range(n)] + [f"Zbar{j + 1}" for j in range(n)]


def _parse_ladder(which, n):
    if isinstance(which, tuple):
        kind, j = which
    else:
        s = str(which)
        kind = "Zbar" if s.startswith("Zbar") else "Z"
        j = int(s[len(kind):] or 1) - 1
    if kind not in ("Z", "Zbar") or not 0 <= j < n:
        raise UsageError(f"unknown ladder operator {which!r} for n={n}")
    return kind, j


def top_shell_mass(c: SpectralField) -> float:
    """Squared l2 mass on indices where a raising operator leaves the cutoff."""
    return float(np.sum(np.abs(c.coeffs[c.basis.top_shell]) ** 2))


def apply_ladder(c: SpectralField, which) -> SpectralField:
    """Apply Z_j or Zbar_j through the frozen ladder matrices.

    ``which`` is 'Z1', 'Zbar2', ... or a tuple ('Z', j) with 0-based j.  If the
    field carries mass on the top shell the result is tagged with a
    truncation-overflow warning.
    """
    b = c.basis
    kind, j = _parse_ladder(which, b.n)
    mats = b.ladder_Z if kind == "Z" else b.ladder_Zbar
    out = mats[j] @ c.coeffs
    notes = ()
    mass = top_shell_mass(c)
    if mass > b.tolerances.top_shell:
        msg = f"{kind}{j + 1}: top-shell mass {mass:.2e} may be shifted past the cutoff"
        warnings.warn(msg, TruncationOverflowWarning, stacklevel=2)
        notes = (msg,)
    return SpectralField(out, b, warnings=notes)


def apply_L(c: SpectralField) -> SpectralField:
    return SpectralField(c.basis.eigenvalues * c.coeffs, c.basis)


def propagate_free(c: SpectralField, t: float) -> SpectralField:
    """Exact free evolution e^{-it L}: multiply each coefficient by e^{-i t lambda_k}."""
    if not math.isfinite(t):
        raise UsageError(f"propagation time must be finite, got {t}")
    return SpectralField(np.exp(-1j * t * c.basis.eigenvalues) * c.coeffs, c.basis)
