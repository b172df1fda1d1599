"""Time integrators for i u_t = L u + G_m(u), u(t0) = f.

Two independent schemes share the spectral Galerkin discretization:

* ``picard_solve`` iterates the Duhamel map
  H_m(u)(t) = e^{-i(t-t0)L} f - i int_{t0}^t e^{-i(t-s)L} G_m(u(s)) ds
  on a uniform time grid, starting from the free flow, with the integral
  accumulated by the trapezoid rule in s.
* ``split_step_solve`` is a Strang splitting: half a nonlinear step, a
  full exact free step, half a nonlinear step.  The nonlinear substep
  integrates the projected flow i c' = P G_m(u) by the implicit midpoint
  rule, which conserves the discrete charge exactly and keeps the scheme
  symmetric.

Backward solves run with ``direction=-1``; the time axis is then traversed
from t0 down to t0 - T.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import (
    ConfigurationError,
    DivergenceError,
    NonConvergenceError,
    SmallnessError,
    UnsupportedRegimeError,
    UsageError,
)
from .nonlinearity import NonlinearitySpec, g_m_values
from .norms import (
    canonical_pair,
    energy,
    lp_norms,
    potential_energy,
    sobolev_norms,
    time_lq,
)
from .spectral import SpectralField

__all__ = [
    "SolverConfig",
    "SolutionTrace",
    "free_trace",
    "duhamel_apply",
    "picard_solve",
    "split_step_solve",
    "solve",
    "select_T",
    "limit_solution",
    "strichartz_pair",
    "trace_distance",
]


@dataclass(frozen=True)
class SolverConfig:
    t0: float = 0.0
    T: float = 0.5
    n_steps: int = 64
    tol_fixed_point: float = 1e-10
    max_iter: int = 60
    delta: float = 0.1
    scheme: str = "picard"
    direction: int = 1
    midpoint_tol: float = 1e-14

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigurationError(f"T must be positive and finite, got {self.T}")
        if self.n_steps < 4 or self.n_steps % 2:
            raise ConfigurationError(f"n_steps must be even and >= 4, got {self.n_steps}")
        if not self.tol_fixed_point > 0:
            raise ConfigurationError("tol_fixed_point must be > 0")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if not self.delta > 0:
            raise ConfigurationError("delta must be > 0")
        if self.scheme not in ("picard", "splitstep"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.direction not in (1, -1):
            raise ConfigurationError("direction must be +1 or -1")

    @property
    def dt(self) -> float:
        """Signed step."""
        return self.direction * self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def replace(self, **kw) -> "SolverConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def strichartz_pair(n):
    """Stopping and uniqueness pair: (gamma, rho) for n >= 2, (inf, 2) for n = 1."""
    if n == 1:
        return math.inf, 2.0
    pair = canonical_pair(n)
    return pair.qf, pair.pf


@dataclass(eq=False)
class SolutionTrace:
    """Uniformly sampled spectral solution with lazily computed diagnostics."""

    times: np.ndarray
    coeffs: np.ndarray
    basis: object
    spec: NonlinearitySpec
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (len(self.times), self.basis.size):
            raise UsageError(f"coefficient block {self.coeffs.shape} does not match "
                             f"{len(self.times)} samples x {self.basis.size} modes")
        steps = np.diff(self.times)
        if len(steps) and not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise UsageError("trace samples must be uniformly spaced")

    def __len__(self):
        return len(self.times)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def fields(self):
        return [SpectralField(c, self.basis) for c in self.coeffs]

    def field(self, k) -> SpectralField:
        return SpectralField(self.coeffs[k], self.basis)

    @cached_property
    def grid_values(self) -> np.ndarray:
        return self.basis.synthesize_array(self.coeffs)

    def charge(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=1)

    def energy(self, spec: NonlinearitySpec | None = None) -> np.ndarray:
        """E_m per sample; pass a spec with m = 0 for the untruncated functional."""
        spec = self.spec if spec is None else spec
        kin = 0.5 * (np.abs(self.coeffs) ** 2) @ self.basis.eigenvalues
        return kin + np.asarray(potential_energy(self.grid_values, self.basis, spec))

    def l2(self) -> np.ndarray:
        return lp_norms(self.grid_values, self.basis.weights, 2)

    def sobolev(self, p) -> np.ndarray:
        return np.atleast_1d(sobolev_norms(self.basis, self.coeffs, p))

    def diagnostics(self) -> dict:
        n = self.basis.n
        rho = strichartz_pair(n)[1] if n > 1 else 2.0
        return {
            "t": self.times,
            "charge": self.charge(),
            "energy": self.energy(),
            "l2": self.l2(),
            "sobolev_2": self.sobolev(2),
            "sobolev_rho": self.sobolev(rho),
        }


def trace_distance(a: SolutionTrace, b: SolutionTrace, q, p) -> float:
    """||a - b||_{L^q(I, L^p)} over the common time grid."""
    _same_grid(a, b)
    diff = a.basis.synthesize_array(a.coeffs - b.coeffs)
    return time_lq(lp_norms(diff, a.basis.weights, p), a.dt, q)


def _same_grid(a, b):
    if a.basis.basis_id != b.basis.basis_id:
        raise UsageError("traces live on different basis tables")
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise UsageError("traces are sampled on different time grids")


def _prepare(f: SpectralField, spec: NonlinearitySpec):
    if spec.alpha is None:
        if f.basis.n < 2:
            raise UnsupportedRegimeError("alpha must be given explicitly when n = 1")
        spec = spec.for_dimension(f.basis.n)
    return spec


def free_trace(f: SpectralField, cfg: SolverConfig, spec=None) -> SolutionTrace:
    """e^{-i(t-t0)L} f on the configured grid."""
    tau = cfg.times - cfg.t0
    coeffs = np.exp(-1j * np.outer(tau, f.basis.eigenvalues)) * f.coeffs
    spec = NonlinearitySpec(lam=0.0, alpha=1.0) if spec is None else spec
    return SolutionTrace(cfg.times, coeffs, f.basis, spec, {"scheme": "free"})


def _nonlinear_coeffs(basis, coeffs, spec):
    """P G_m(synth c) for coefficient blocks (..., B)."""
    u = basis.synthesize_array(coeffs)
    return basis.analyze_array(g_m_values(u, spec, basis))


def _duhamel_coeffs(f, u_coeffs, spec, cfg):
    b = f.basis
    lam = b.eigenvalues
    tau = cfg.times - cfg.t0
    if spec.lam == 0.0 and spec.form == "power":
        nl = np.zeros_like(u_coeffs)
    else:
        nl = _nonlinear_coeffs(b, u_coeffs, spec)
    # I(t_k) = e^{-i tau_k L} sum_j trapezoid(e^{i tau_j L} N_j)
    back = np.exp(1j * np.outer(tau, lam))
    fwd = np.conj(back)
    m = back * nl
    acc = np.zeros_like(m)
    acc[1:] = np.cumsum(0.5 * cfg.dt * (m[1:] + m[:-1]), axis=0)
    return fwd * (f.coeffs - 1j * acc)


def duhamel_apply(f: SpectralField, u: SolutionTrace, spec: NonlinearitySpec,
                  cfg: SolverConfig) -> SolutionTrace:
    """One application of the Duhamel map H_m to the trace u."""
    spec = _prepare(f, spec)
    if u.basis.basis_id != f.basis.basis_id:
        raise UsageError("trace and data live on different basis tables")
    if u.times.shape != cfg.times.shape or not np.allclose(u.times, cfg.times, rtol=0, atol=1e-12):
        raise UsageError("trace is not sampled on the configured time grid")
    out = _duhamel_coeffs(f, u.coeffs, spec, cfg)
    return SolutionTrace(cfg.times, out, f.basis, spec, {"scheme": "duhamel"})


def _stopping_norm(basis, dcoeffs, dt):
    q, p = strichartz_pair(basis.n)
    vals = basis.synthesize_array(dcoeffs)
    return time_lq(lp_norms(vals, basis.weights, p), dt, q)


def picard_solve(f: SpectralField, spec: NonlinearitySpec, cfg: SolverConfig) -> SolutionTrace:
    """Banach iteration of H_m from the free flow.

    Stops when ||u^{j+1} - u^j||_{L^gamma(I, L^rho)} <= tol.  Raises
    DivergenceError when the contraction factor is >= 1 for three
    consecutive iterations and NonConvergenceError after max_iter.
    """
    spec = _prepare(f, spec)
    b = f.basis
    u = free_trace(f, cfg).coeffs
    residuals, factors = [], []
    streak = 0
    for it in range(1, cfg.max_iter + 1):
        new = _duhamel_coeffs(f, u, spec, cfg)
        res = _stopping_norm(b, new - u, cfg.dt)
        if not math.isfinite(res):
            raise DivergenceError(f"non-finite Picard residual at iteration {it}", residuals)
        if residuals and residuals[-1] > 0:
            factors.append(res / residuals[-1])
            streak = streak + 1 if factors[-1] >= 1.0 else 0
        residuals.append(res)
        u = new
        if res <= cfg.tol_fixed_point:
            meta = {"scheme": "picard", "iterations": it, "residuals": residuals,
                    "contraction_factors": factors, "m": spec.m, "warnings": []}
            return SolutionTrace(cfg.times, u, b, spec, meta)
        if streak >= 3:
            raise DivergenceError(
                f"Picard contraction factor >= 1 for 3 consecutive iterations "
                f"(last {factors[-1]:.3g}); T may be too large", residuals)
    raise NonConvergenceError(
        f"Picard did not reach tol={cfg.tol_fixed_point:g} in {cfg.max_iter} iterations "
        f"(last residual {residuals[-1]:.3g})", residuals)


def _midpoint_step(basis, c0, spec, h, tol, max_iter=200):
    """Implicit midpoint for i c' = P G_m(synth c) over a step h."""
    scale = max(np.linalg.norm(c0), 1e-300)
    c1 = c0 - 1j * h * _nonlinear_coeffs(basis, c0, spec)
    for _ in range(max_iter):
        nxt = c0 - 1j * h * _nonlinear_coeffs(basis, 0.5 * (c0 + c1), spec)
        delta = np.linalg.norm(nxt - c1)
        c1 = nxt
        if delta <= tol * scale:
            # one more sweep pushes the iteration error below round-off
            return c0 - 1j * h * _nonlinear_coeffs(basis, 0.5 * (c0 + c1), spec)
        if not math.isfinite(delta):
            break
    raise NonConvergenceError(
        f"implicit midpoint substep did not converge (|h| = {abs(h):g}); reduce the time step",
        [float(delta)])


def split_step_solve(f: SpectralField, spec: NonlinearitySpec, cfg: SolverConfig) -> SolutionTrace:
    """Strang splitting with exact free steps and midpoint nonlinear half-steps."""
    spec = _prepare(f, spec)
    b = f.basis
    dt = cfg.dt
    phase = np.exp(-1j * dt * b.eigenvalues)
    linear = spec.lam == 0.0 and spec.form == "power"
    out = np.empty((cfg.n_steps + 1, b.size), dtype=complex)
    c = f.coeffs.copy()
    out[0] = c
    for k in range(cfg.n_steps):
        if not linear:
            c = _midpoint_step(b, c, spec, 0.5 * dt, cfg.midpoint_tol)
        c = phase * c
        if not linear:
            c = _midpoint_step(b, c, spec, 0.5 * dt, cfg.midpoint_tol)
        out[k + 1] = c
    meta = {"scheme": "splitstep", "iterations": 0, "contraction_factors": [],
            "m": spec.m, "warnings": []}
    return SolutionTrace(cfg.times, out, b, spec, meta)


def solve(f, spec, cfg) -> SolutionTrace:
    return picard_solve(f, spec, cfg) if cfg.scheme == "picard" else split_step_solve(f, spec, cfg)


def default_search_grid(count=64):
    return math.pi * np.arange(1, count + 1) / count


def free_flow_norm(f: SpectralField, T: float, n_samples: int = 64) -> float:
    """||e^{-itL} f||_{L^gamma((0, T), W^{1,rho})}."""
    n = f.basis.n
    if n < 2:
        raise UnsupportedRegimeError("the smallness condition uses (gamma, rho), which needs n >= 2")
    gamma, rho = strichartz_pair(n)
    cfg = SolverConfig(T=T, n_steps=n_samples)
    tr = free_trace(f, cfg)
    return time_lq(tr.sobolev(rho), cfg.dt, gamma)


def select_T(f: SpectralField, delta: float, spec=None, b=None, search_grid=None,
             n_samples: int = 64) -> float:
    """Largest T <= pi on the grid whose free-flow (gamma, rho) norm is <= delta."""
    if not delta > 0:
        raise UsageError("delta must be > 0")
    if b is not None and b.basis_id != f.basis.basis_id:
        raise UsageError("data does not live on the given basis table")
    grid = default_search_grid() if search_grid is None else np.asarray(search_grid, float)
    grid = np.sort(grid[(grid > 0) & (grid <= math.pi + 1e-15)])
    if grid.size == 0:
        raise UsageError("search grid has no entries in (0, pi]")
    best = None
    for T in grid:
        if free_flow_norm(f, float(T), n_samples) <= delta:
            best = float(T)
        else:
            break
    if best is None:
        raise SmallnessError(
            f"free-flow norm exceeds delta={delta:g} already at T={grid[0]:.4g}; "
            "shrink the data or raise delta")
    return best


def limit_solution(f, spec_base: NonlinearitySpec, cfg: SolverConfig, m_schedule):
    """Solve for each m in the schedule and tabulate consecutive L^gamma(L^rho) gaps.

    Returns (trace for the largest m, table).  The table is a list of
    dicts {m, m_next, gap}.  On a failed solve the exception is re-raised
    with ``partial_table`` attached.
    """
    ms = [int(m) for m in m_schedule]
    if any(b <= a for a, b in zip(ms, ms[1:])) or ms[0] < 1:
        raise UsageError("m_schedule must be increasing positive integers")
    q, p = strichartz_pair(f.basis.n)
    traces, table = [], []
    for m in ms:
        try:
            tr = picard_solve(f, spec_base.with_m(m), cfg)
        except NonConvergenceError as exc:
            exc.partial_table = table
            raise
        if traces:
            table.append({"m": traces[-1].spec.m, "m_next": m,
                          "gap": trace_distance(traces[-1], tr, q, p)})
        traces.append(tr)
    return traces[-1], table
