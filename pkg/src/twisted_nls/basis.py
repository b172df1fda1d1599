"""Special Hermite eigenbasis of the twisted Laplacian on C^n.

The basis is built numerically.  For one complex coordinate z = x + iy we
work in the space of Hermite functions h_a(x) h_b(y) with a + b <= 2K,
which the twisted Laplacian and the angular momentum operator both leave
invariant.  Diagonalizing the quadrature matrix of

    L = 1/2 (Z Zbar + Zbar Z),   Z = (d_x - i d_y) + zbar/2,
                                 Zbar = -(d_x + i d_y) + z/2

and resolving each degenerate eigenspace with the angular momentum gives
functions Phi_{mu nu} with eigenvalue 2 nu + 1 and angular momentum
nu - mu.  Phases are fixed by the ladder structure so that Zbar and the
commuting raising operator Wbar = -(d_x - i d_y) + zbar/2 have positive
real matrix elements.  The n = 2 basis is the tensor square of the n = 1
factor.

All derivatives are taken exactly through the Hermite recurrences, and
the compensated Gauss-Hermite rule integrates every product that occurs
here exactly once grid_order >= 2K + 2.
"""

from __future__ import annotations

import hashlib
import itertools
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import BasisConstructionError, ConfigurationError

__all__ = [
    "ModelParams",
    "Tolerances",
    "BasisTable",
    "build_basis",
    "cached_build_basis",
    "save_basis",
    "load_basis",
    "hermite_functions",
    "lebesgue_gauss_hermite",
]

FORMAT_MAGIC = b"TNLS"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelParams:
    """Complex dimension, per-coordinate cutoff and quadrature order."""

    n: int
    K: int
    grid_order: int | None = None

    def __post_init__(self):
        if self.grid_order is None:
            object.__setattr__(self, "grid_order", 2 * self.K + 2)
        if self.n not in (1, 2):
            raise ConfigurationError(f"n must be 1 or 2, got {self.n}")
        if self.K < 0:
            raise ConfigurationError(f"K must be >= 0, got {self.K}")
        if self.grid_order < 2 * self.K + 2:
            raise ConfigurationError(
                f"grid_order={self.grid_order} < 2K+2={2 * self.K + 2}: "
                "quadrature is not exact on the basis products"
            )

    @property
    def size(self) -> int:
        return (self.K + 1) ** (2 * self.n)

    @property
    def grid_size(self) -> int:
        return self.grid_order ** (2 * self.n)


@dataclass(frozen=True)
class Tolerances:
    orthonormality: float = 1e-8
    failure: float = 1e-6
    ladder_threshold: float = 1e-10
    top_shell: float = 1e-8

    def key(self) -> str:
        return ",".join(f"{v:.3e}" for v in (self.orthonormality, self.failure,
                                             self.ladder_threshold, self.top_shell))


def hermite_functions(x, degree):
    """Orthonormal Hermite functions h_0..h_degree on L^2(R, dx).

    h_a(x) = (2 pi)^(-1/4) (a!)^(-1/2) He_a(x) exp(-x^2/4), evaluated with the
    normalized three-term recurrence.  Returns an array of shape
    (degree + 1, len(x)).
    """
    x = np.asarray(x, dtype=float)
    h = np.empty((degree + 1,) + x.shape)
    h[0] = (2.0 * np.pi) ** -0.25 * np.exp(-0.25 * x * x)
    if degree >= 1:
        h[1] = x * h[0]
    for a in range(1, degree):
        h[a + 1] = (x * h[a] - np.sqrt(a) * h[a - 1]) / np.sqrt(a + 1)
    return h


def hermite_derivatives(h):
    """d/dx of h_0..h_{D-1} given h_0..h_D: h_a' = (sqrt(a) h_{a-1} - sqrt(a+1) h_{a+1}) / 2."""
    D = h.shape[0] - 1
    dh = np.empty((D,) + h.shape[1:])
    for a in range(D):
        dh[a] = -0.5 * np.sqrt(a + 1) * h[a + 1]
        if a > 0:
            dh[a] += 0.5 * np.sqrt(a) * h[a - 1]
    return dh


def lebesgue_gauss_hermite(order):
    """Gauss-Hermite nodes with weights rescaled to integrate against plain dx.

    Exact for p(x) exp(-x^2/2) with deg p <= 2 * order - 1.
    """
    x, w = np.polynomial.hermite_e.hermegauss(order)
    return x, w * np.exp(0.5 * x * x)


def _hermite_pairs(D):
    return np.array([(a, b) for a in range(D + 1) for b in range(D + 1 - a)], dtype=np.int64)


@dataclass(frozen=True)
class _Factor:
    """Basis data for a single complex coordinate (a plane R^2)."""

    nodes: np.ndarray      # (G^2, 2) columns x, y
    weights: np.ndarray    # (G^2,)
    pairs: np.ndarray      # (P, 2) Hermite degrees (a, b)
    coeffs: np.ndarray     # (P, B1) Hermite coefficients of Phi_k
    phi: np.ndarray        # (G^2, B1)
    zphi: np.ndarray       # (G^2, B1) samples of Z Phi_k
    zbphi: np.ndarray      # (G^2, B1) samples of Zbar Phi_k
    ladder_z: np.ndarray   # (B1, B1)
    ladder_zbar: np.ndarray
    mu: np.ndarray         # (B1,)
    nu: np.ndarray         # (B1,)
    raw_ladder_z: np.ndarray
    raw_ladder_zbar: np.ndarray

    def evaluate(self, x, y):
        D = int(self.pairs.max())
        hx = hermite_functions(x, D)
        hy = hermite_functions(y, D)
        E = hx[self.pairs[:, 0]] * hy[self.pairs[:, 1]]
        return E.T @ self.coeffs


def _operator_samples(pairs, x, y, D):
    """Samples of e_ab, Z e_ab, Zbar e_ab, Wbar e_ab and the angular operator at (x, y)."""
    hx = hermite_functions(x, D + 1)
    hy = hermite_functions(y, D + 1)
    dhx = hermite_derivatives(hx)
    dhy = hermite_derivatives(hy)
    a, b = pairs[:, 0], pairs[:, 1]
    e = (hx[a] * hy[b]).T
    ex = (dhx[a] * hy[b]).T
    ey = (hx[a] * dhy[b]).T
    xc = x[:, None]
    yc = y[:, None]
    z = xc + 1j * yc
    zb = xc - 1j * yc
    dz = ex - 1j * ey          # d/dz_j in the convention d_x - i d_y
    dzb = ex + 1j * ey
    Z = dz + 0.5 * zb * e
    Zbar = -dzb + 0.5 * z * e
    Wbar = -dz + 0.5 * zb * e
    # -i (x d_y - y d_x): angular momentum, z^a zbar^b has eigenvalue a - b
    J = -1j * (xc * ey - yc * ex)
    return e, Z, Zbar, Wbar, J


def _build_factor(K, G, tol):
    D = 2 * K
    xg, wg = lebesgue_gauss_hermite(G)
    X, Y = np.meshgrid(xg, xg, indexing="ij")
    x, y = X.ravel(), Y.ravel()
    w = np.outer(wg, wg).ravel()
    pairs = _hermite_pairs(D)
    e, Z, Zbar, Wbar, J = _operator_samples(pairs, x, y, D)

    gram = e.T @ (w[:, None] * e)
    res = np.abs(gram - np.eye(len(pairs))).max()
    if res > tol.failure:
        raise BasisConstructionError(f"Hermite product basis not orthonormal (residual {res:.2e})", res)

    inner = lambda f, g: f.conj().T @ (w[:, None] * g)  # noqa: E731
    Lmat = 0.5 * (inner(Zbar, Zbar) + inner(Z, Z))
    Lmat = 0.5 * (Lmat + Lmat.conj().T)
    Jmat = inner(e, J)
    Jmat = 0.5 * (Jmat + Jmat.conj().T)

    evals, evecs = np.linalg.eigh(Lmat)
    levels = np.rint(evals)
    bad = np.abs(evals - levels).max()
    if bad > tol.failure or np.any(levels.astype(int) % 2 != 1):
        raise BasisConstructionError(f"twisted Laplacian spectrum off the odd integers (residual {bad:.2e})", bad)

    B1 = (K + 1) ** 2
    coeffs = np.zeros((len(pairs), B1), dtype=complex)
    filled = np.zeros(B1, dtype=bool)
    for level in np.unique(levels):
        nu = int(level - 1) // 2
        if nu > K:
            continue
        sub = evecs[:, levels == level]
        ell, Q = np.linalg.eigh(sub.conj().T @ Jmat @ sub)
        for j, lv in enumerate(ell):
            lr = int(np.rint(lv))
            if abs(lv - lr) > tol.failure:
                raise BasisConstructionError(f"angular momentum {lv} not an integer", abs(lv - lr))
            mu = nu - lr
            if 0 <= mu <= K:
                k = mu * (K + 1) + nu
                coeffs[:, k] = sub @ Q[:, j]
                filled[k] = True
    if not filled.all():
        raise BasisConstructionError("eigenspace resolution did not produce every (mu, nu) pair")

    mu_idx = np.repeat(np.arange(K + 1), K + 1)
    nu_idx = np.tile(np.arange(K + 1), K + 1)

    def phase_of(S, src, dst):
        return np.vdot(e @ coeffs[:, dst], w * (S @ coeffs[:, src]))

    # ladder connectivity fixes the phases: Phi_00 positive at the origin,
    # then Wbar raises mu and Zbar raises nu with positive matrix elements
    c00 = coeffs[:, 0]
    coeffs[:, 0] = c00 * np.exp(-1j * np.angle(c00[0]))
    for mu in range(K + 1):
        if mu > 0:
            src, dst = (mu - 1) * (K + 1), mu * (K + 1)
            coeffs[:, dst] *= np.exp(1j * np.angle(phase_of(Wbar, src, dst)))
        for nu in range(1, K + 1):
            src, dst = mu * (K + 1) + nu - 1, mu * (K + 1) + nu
            coeffs[:, dst] *= np.exp(1j * np.angle(phase_of(Zbar, src, dst)))

    phi = e @ coeffs
    zphi = Z @ coeffs
    zbphi = Zbar @ coeffs
    wphi = w[:, None] * phi
    raw_z = wphi.conj().T @ zphi
    raw_zb = wphi.conj().T @ zbphi
    lz = np.where(np.abs(raw_z) > tol.ladder_threshold, raw_z, 0.0)
    lzb = np.where(np.abs(raw_zb) > tol.ladder_threshold, raw_zb, 0.0)
    return _Factor(
        nodes=np.column_stack([x, y]), weights=w, pairs=pairs, coeffs=coeffs,
        phi=phi, zphi=zphi, zbphi=zbphi, ladder_z=lz, ladder_zbar=lzb,
        mu=mu_idx, nu=nu_idx, raw_ladder_z=raw_z, raw_ladder_zbar=raw_zb,
    )


@dataclass(eq=False)
class BasisTable:
    """Precomputed eigenbasis, quadrature and ladder matrices for one ModelParams.

    Coefficient vectors are indexed by multi-index pairs (mu, nu) flattened in
    lexicographic order of the per-coordinate index k_j = mu_j (K+1) + nu_j.
    Grid vectors are indexed by tensor nodes flattened in the same way; node
    coordinates are stored as (x_1..x_n, y_1..y_n).

    Instances are immutable after construction and safe to share.
    """

    params: ModelParams
    tolerances: Tolerances
    factor: _Factor
    validation: dict = field(default_factory=dict)

    # -- identity -------------------------------------------------------------
    @cached_property
    def basis_id(self) -> str:
        p = self.params
        key = f"n={p.n};K={p.K};G={p.grid_order};tol={self.tolerances.key()}"
        return hashlib.sha1(key.encode()).hexdigest()[:12]

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def K(self) -> int:
        return self.params.K

    @property
    def size(self) -> int:
        return self.params.size

    @property
    def grid_size(self) -> int:
        return self.params.grid_size

    # -- index bookkeeping ----------------------------------------------------
    @cached_property
    def indices(self) -> np.ndarray:
        """(B, 2n) array of multi-indices [mu_1..mu_n, nu_1..nu_n]."""
        f = self.factor
        per = [np.column_stack([f.mu, f.nu])] * self.n
        rows = []
        for combo in itertools.product(*[range(len(f.mu))] * self.n):
            rows.append([per[j][k, 0] for j, k in enumerate(combo)]
                        + [per[j][k, 1] for j, k in enumerate(combo)])
        return np.array(rows, dtype=np.int64)

    def index_of(self, mu, nu) -> int:
        mu = np.atleast_1d(mu)
        nu = np.atleast_1d(nu)
        K1 = self.K + 1
        flat = 0
        for j in range(self.n):
            flat = flat * K1 * K1 + int(mu[j]) * K1 + int(nu[j])
        return flat

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        nu = self.indices[:, self.n:]
        return (2 * nu.sum(axis=1) + self.n).astype(float)

    @cached_property
    def top_shell(self) -> np.ndarray:
        """Mask of indices a raising ladder operator can push past the cutoff."""
        nu = self.indices[:, self.n:]
        return (nu == self.K).any(axis=1)

    # -- quadrature -----------------------------------------------------------
    @cached_property
    def nodes(self) -> np.ndarray:
        fn = self.factor.nodes
        if self.n == 1:
            return fn.copy()
        G2 = fn.shape[0]
        i1 = np.repeat(np.arange(G2), G2)
        i2 = np.tile(np.arange(G2), G2)
        return np.column_stack([fn[i1, 0], fn[i2, 0], fn[i1, 1], fn[i2, 1]])

    @cached_property
    def weights(self) -> np.ndarray:
        w = self.factor.weights
        return w.copy() if self.n == 1 else np.outer(w, w).ravel()

    @cached_property
    def z(self) -> np.ndarray:
        """Complex node coordinates, shape (N, n)."""
        nd = self.nodes
        return nd[:, : self.n] + 1j * nd[:, self.n:]

    @cached_property
    def phi(self) -> np.ndarray:
        """Dense (N, B) matrix of basis values at the nodes (tensor product for n=2)."""
        p = self.factor.phi
        return p.copy() if self.n == 1 else np.kron(p, p)

    # -- ladder matrices --------------------------------------------------------
    def _lift(self, m, j):
        if self.n == 1:
            return sp.csr_matrix(m)
        eye = sp.identity(m.shape[0], format="csr")
        return sp.csr_matrix(sp.kron(m, eye) if j == 0 else sp.kron(eye, m))

    @cached_property
    def ladder_Z(self) -> tuple:
        return tuple(self._lift(self.factor.ladder_z, j) for j in range(self.n))

    @cached_property
    def ladder_Zbar(self) -> tuple:
        return tuple(self._lift(self.factor.ladder_zbar, j) for j in range(self.n))

    # -- transforms on raw arrays (hot path) -------------------------------------
    def _as_blocks(self, a, inner):
        if self.n == 1:
            return a
        return a.reshape(a.shape[:-1] + (inner, inner))

    def synthesize_array(self, coeffs, images=None):
        """Grid values for coefficient array(s) of shape (..., B).

        ``images`` optionally replaces the per-coordinate sample matrices, e.g.
        ``{0: factor.zphi}`` samples Z_1 applied to the field.
        """
        f = self.factor
        mats = [f.phi] * self.n
        if images:
            for j, m in images.items():
                mats[j] = m
        coeffs = np.asarray(coeffs)
        if self.n == 1:
            return coeffs @ mats[0].T
        B1 = f.phi.shape[1]
        C = self._as_blocks(coeffs, B1)
        V = mats[0] @ C @ mats[1].T
        return V.reshape(coeffs.shape[:-1] + (-1,))

    def analyze_array(self, values):
        f = self.factor
        values = np.asarray(values)
        if self.n == 1:
            return (values * f.weights) @ f.phi.conj()
        G2 = f.phi.shape[0]
        V = self._as_blocks(values, G2) * np.outer(f.weights, f.weights)
        C = f.phi.conj().T @ V @ f.phi.conj()
        return C.reshape(values.shape[:-1] + (-1,))

    def ladder_image(self, coeffs, which, j):
        """Exact grid samples of Z_j f ('Z') or Zbar_j f ('Zbar')."""
        m = self.factor.zphi if which == "Z" else self.factor.zbphi
        return self.synthesize_array(coeffs, images={j: m})

    # -- evaluation off the grid (oracles) ---------------------------------------
    def evaluate(self, points, columns=None):
        """Basis values at arbitrary points of R^{2n}, columns (x_1..x_n, y_1..y_n)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.n
        F = [self.factor.evaluate(points[:, j], points[:, n + j]) for j in range(n)]
        if n == 1:
            out = F[0]
        else:
            out = (F[0][:, :, None] * F[1][:, None, :]).reshape(len(points), -1)
        return out if columns is None else out[:, columns]

    def gram_residual(self) -> float:
        p = self.factor.phi
        g = p.conj().T @ (self.factor.weights[:, None] * p)
        # the n=2 Gram matrix is the Kronecker square, so its deviation from I
        # is bounded by the factor's deviation (plus second-order terms)
        r = np.abs(g - np.eye(g.shape[0])).max()
        return float(r if self.n == 1 else 2 * r + r * r)


def _validate(table: BasisTable):
    f = table.factor
    tol = table.tolerances
    gram = table.gram_residual()
    cols = [np.count_nonzero(np.abs(m) > tol.ladder_threshold, axis=0).max()
            for m in (f.ladder_z, f.ladder_zbar)]
    interior = ~table.top_shell
    comp = 0.5 * sum((zm @ zbm + zbm @ zm) for zm, zbm in zip(table.ladder_Z, table.ladder_Zbar))
    comp = comp.toarray()[:, interior]
    target = np.diag(table.eigenvalues)[:, interior]
    eig_res = float(np.abs(comp - target).max()) if interior.any() else 0.0
    return {
        "orthonormality_residual": gram,
        "ladder_max_entries_per_column": int(max(cols)),
        "eigen_composition_residual": eig_res,
        "interior_columns": int(interior.sum()),
    }


def build_basis(params: ModelParams, tolerances: Tolerances | None = None) -> BasisTable:
    """Construct and validate the truncated special Hermite basis."""
    tol = tolerances or Tolerances()
    factor = _build_factor(params.K, params.grid_order, tol)
    table = BasisTable(params=params, tolerances=tol, factor=factor)
    report = _validate(table)
    table.validation.update(report)
    if report["orthonormality_residual"] > tol.failure:
        raise BasisConstructionError(
            f"orthonormality residual {report['orthonormality_residual']:.2e} exceeds {tol.failure:g}",
            report["orthonormality_residual"],
        )
    return table


# -- binary cache -----------------------------------------------------------------

def _write_array(fh, a):
    a = np.ascontiguousarray(a)
    is_complex = np.iscomplexobj(a)
    fh.write(struct.pack("<II", int(is_complex), a.ndim))
    fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
    data = a.astype("<c16" if is_complex else "<f8")
    fh.write(data.view("<f8").tobytes())


def _read_array(fh):
    is_complex, ndim = struct.unpack("<II", fh.read(8))
    shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
    count = int(np.prod(shape)) * (2 if is_complex else 1)
    data = np.frombuffer(fh.read(8 * count), dtype="<f8").copy()
    if is_complex:
        data = data.view("<c16")
    return data.reshape(shape)


_FACTOR_ARRAYS = ("nodes", "weights", "phi", "coeffs", "zphi", "zbphi",
                  "ladder_z", "ladder_zbar", "raw_ladder_z", "raw_ladder_zbar")


def save_basis(table: BasisTable, path) -> Path:
    """Write the table as: magic, u32 version, params, tolerances, arrays (LE doubles).

    The n = 2 table is a tensor square, so only the per-coordinate factor
    arrays plus the full eigenvalue vector are stored.
    """
    p, t = table.params, table.tolerances
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(FORMAT_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<III", p.n, p.K, p.grid_order))
        fh.write(struct.pack("<4d", t.orthonormality, t.failure, t.ladder_threshold, t.top_shell))
        _write_array(fh, table.eigenvalues)
        for name in _FACTOR_ARRAYS:
            _write_array(fh, getattr(table.factor, name))
    return path


def load_basis(path) -> BasisTable:
    with open(path, "rb") as fh:
        if fh.read(4) != FORMAT_MAGIC:
            raise BasisConstructionError(f"{path}: not a basis cache file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise BasisConstructionError(f"{path}: unsupported cache version {version}")
        n, K, G = struct.unpack("<III", fh.read(12))
        tol = Tolerances(*struct.unpack("<4d", fh.read(32)))
        _read_array(fh)  # eigenvalues are recomputed from the index table
        arrays = {name: _read_array(fh) for name in _FACTOR_ARRAYS}
    K1 = K + 1
    factor = _Factor(pairs=_hermite_pairs(2 * K),
                     mu=np.repeat(np.arange(K1), K1), nu=np.tile(np.arange(K1), K1),
                     **arrays)
    table = BasisTable(params=ModelParams(n, K, G), tolerances=tol, factor=factor)
    table.validation.update(_validate(table))
    return table


def cached_build_basis(params: ModelParams, tolerances: Tolerances | None = None,
                       cache_dir=None) -> BasisTable:
    """build_basis with an on-disk cache in ``cache_dir`` or $TNLS_CACHE_DIR."""
    tol = tolerances or Tolerances()
    cache_dir = cache_dir or os.environ.get("TNLS_CACHE_DIR")
    if not cache_dir:
        return build_basis(params, tol)
    key = hashlib.sha1(tol.key().encode()).hexdigest()[:8]
    path = Path(cache_dir) / f"basis_n{params.n}_K{params.K}_G{params.grid_order}_{key}.tnls"
    if path.exists():
        return load_basis(path)
    table = build_basis(params, tol)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_basis(table, path)
    return table
