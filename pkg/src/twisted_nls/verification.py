"""Empirical checks of the nonlinear estimates behind the well-posedness theory.

Each ``verify_*`` function evaluates an inequality LHS <= C * RHS over a
family of samples and reports the ratios LHS / RHS.  The fitted constant is
the largest ratio, so it holds with zero violations by construction; the
substantive check is that it stays put when the resolution grows.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NonConvergenceError, PreconditionError, UsageError
from .nonlinearity import NonlinearitySpec, dpsi_m, g_m_values, psi_m
from .norms import (
    INF,
    admissible,
    canonical_pair,
    dual_exponent,
    lp_norms,
    sobolev_norms,
    time_lq,
)
from .solver import (
    SolutionTrace,
    SolverConfig,
    free_trace,
    solve,
    strichartz_pair,
    _midpoint_step,
    _prepare,
)
from .spectral import SpectralField

__all__ = [
    "EstimateReport",
    "RandomFieldSpec",
    "random_fields",
    "random_traces",
    "verify_embedding",
    "verify_difference_estimate",
    "verify_truncation_gap",
    "verify_derivative_bound",
    "conservation_report",
    "stability_experiment",
    "blowup_monitor",
    "loglog_slope",
]

log = logging.getLogger(__name__)


@dataclass
class EstimateReport:
    lemma_id: str
    sample_count: int
    lhs: list
    rhs_structure: list
    ratios: list
    fitted_constant: float
    violation_count: int
    notes: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, lemma_id, lhs, rhs, notes=(), extras=None):
        lhs = np.asarray(lhs, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = lhs / rhs
        if not np.all(np.isfinite(ratios)) or np.any(ratios < 0):
            raise UsageError(f"{lemma_id}: non-finite or negative ratio")
        fitted = float(ratios.max()) if ratios.size else 0.0
        return cls(lemma_id=lemma_id, sample_count=int(ratios.size),
                   lhs=lhs.tolist(), rhs_structure=rhs.tolist(), ratios=ratios.tolist(),
                   fitted_constant=fitted,
                   violation_count=int(np.sum(ratios > fitted)),
                   notes=list(notes), extras=dict(extras or {}))

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=_jsonable)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["sample", "lhs", "rhs_structure", "ratio"])
        for i, (a, b, r) in enumerate(zip(self.lhs, self.rhs_structure, self.ratios)):
            w.writerow([i, f"{a:.16e}", f"{b:.16e}", f"{r:.16e}"])
        return buf.getvalue()


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


@dataclass(frozen=True)
class RandomFieldSpec:
    """Random spectral fields with |c_{mu nu}| ~ (1 + |mu| + |nu|)^(-decay).

    Each field is normalized to unit L^2 norm and then scaled by an
    amplitude drawn from ``amplitude_law``: 'fixed' uses amp_min, 'loguniform'
    draws from [amp_min, amp_max].  Modes on the top shell are left empty so
    every ladder image stays inside the cutoff.
    """

    seed: int = 0
    amplitude_law: str = "loguniform"
    amp_min: float = 0.1
    amp_max: float = 2.0
    decay: float = 2.0
    count: int = 50

    def __post_init__(self):
        if self.amplitude_law not in ("fixed", "loguniform"):
            raise UsageError(f"unknown amplitude law {self.amplitude_law!r}")
        if not self.amp_min > 0:
            raise UsageError("amp_min must be > 0")
        if self.amplitude_law == "loguniform" and self.amp_max < self.amp_min:
            raise UsageError("need amp_min <= amp_max for the log-uniform law")
        if self.count < 1:
            raise UsageError("count must be >= 1")

    def with_count(self, count):
        return RandomFieldSpec(self.seed, self.amplitude_law, self.amp_min, self.amp_max,
                               self.decay, int(count))


def random_fields(rs: RandomFieldSpec, basis, stream=0):
    """Deterministic list of SpectralFields drawn from ``rs`` on sub-stream ``stream``."""
    rng = np.random.default_rng([rs.seed, stream])
    idx = basis.indices
    n = basis.n
    order = 1.0 + idx[:, :n].sum(axis=1) + idx[:, n:].sum(axis=1)
    shape = order ** (-rs.decay) * (~basis.top_shell)
    out = []
    for _ in range(rs.count):
        c = (rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)) * shape
        c /= np.linalg.norm(c)
        if rs.amplitude_law == "fixed":
            amp = rs.amp_min
        else:
            amp = math.exp(rng.uniform(math.log(rs.amp_min), math.log(rs.amp_max)))
        out.append(SpectralField(amp * c, basis))
    return out


def random_traces(rs: RandomFieldSpec, basis, T=0.5, n_samples=32, stream=0):
    """Free-flow traces of random fields: smooth-in-time test functions on (0, T)."""
    cfg = SolverConfig(T=T, n_steps=n_samples)
    return [free_trace(f, cfg) for f in random_fields(rs, basis, stream)]


def _frac(x):
    if isinstance(x, str):
        return INF if x.strip().lower() in ("inf", "infinity") else Fraction(x)
    if isinstance(x, float) and math.isinf(x):
        return INF
    return Fraction(x)


def embedding_range_check(p1, p2, n):
    """Raise PreconditionError unless W^{1,p1} embeds in L^{p2} by the Sobolev range."""
    p1, p2 = _frac(p1), _frac(p2)
    if p1 is INF or p1 < 1:
        raise PreconditionError(f"p1 must lie in [1, inf), got {p1}")
    if p2 is not INF and p2 < p1:
        raise PreconditionError(f"branch p1 <= p2 violated: p2={p2} < p1={p1}")
    if p1 < 2 * n:
        bound = Fraction(2 * n) * p1 / (2 * n - p1)
        if p2 is INF or p2 > bound:
            raise PreconditionError(
                f"branch p1 < 2n: need p2 <= 2n p1/(2n - p1) = {bound}, got p2={p2}")
    elif p1 == 2 * n and p2 is INF:
        raise PreconditionError("branch p1 = 2n: p2 must be finite")


def verify_embedding(specs: RandomFieldSpec, p1, p2, b) -> EstimateReport:
    """Ratios ||f||_{p2} / ||f||_{W^{1,p1}} over random fields."""
    embedding_range_check(p1, p2, b.n)
    fields = random_fields(specs, b, stream=1)
    coeffs = np.array([f.coeffs for f in fields])
    lhs = lp_norms(b.synthesize_array(coeffs), b.weights, float(_frac(p2)))
    rhs = sobolev_norms(b, coeffs, float(_frac(p1)))
    return EstimateReport.from_samples(
        "embedding", np.atleast_1d(lhs), np.atleast_1d(rhs),
        extras={"p1": str(p1), "p2": str(p2), "n": b.n, "K": b.K})


def _dual_pair(n):
    gamma, rho = canonical_pair(n).q, canonical_pair(n).p
    return float(gamma), float(rho), float(dual_exponent(gamma)), float(dual_exponent(rho))


def _mixed_lp(values, weights, dt, q, p):
    return time_lq(np.atleast_1d(lp_norms(values, weights, p)), dt, q)


def _mixed_sobolev(trace, q, p):
    return time_lq(trace.sobolev(p), trace.dt, q)


def verify_difference_estimate(specs: RandomFieldSpec, m_list, b, lam=1.0, T=0.5,
                               n_samples=32) -> EstimateReport:
    """||G_m(u) - G_m(v)||_{L^{gamma'} L^{rho'}} against
    ||u - v||_{L^gamma L^rho} (||u|| + ||v||)^{2/(n-1)}_{L^gamma W^{1,rho}}.

    Samples are pairs of free-flow traces of independent random fields,
    evaluated for every m in m_list.  The report's extras hold the fitted
    constant per m and the spread max/min across m.
    """
    n = b.n
    gamma, rho, gp, rp = _dual_pair(n)
    alpha = 2.0 / (n - 1)
    us = random_traces(specs, b, T, n_samples, stream=2)
    vs = random_traces(specs, b, T, n_samples, stream=3)
    w = b.weights
    lhs, rhs, tags, notes = [], [], [], []
    for i, (u, v) in enumerate(zip(us, vs)):
        du = _mixed_lp(u.grid_values - v.grid_values, w, u.dt, gamma, rho)
        size = _mixed_sobolev(u, gamma, rho) + _mixed_sobolev(v, gamma, rho)
        denom = du * size ** alpha
        if not denom > 0:
            log.info("difference estimate: sample %d skipped (degenerate denominator)", i)
            notes.append(f"sample {i} skipped: degenerate denominator")
            continue
        for m in m_list:
            spec = NonlinearitySpec(lam=lam, alpha=alpha, m=int(m))
            diff = g_m_values(u.grid_values, spec, b) - g_m_values(v.grid_values, spec, b)
            lhs.append(_mixed_lp(diff, w, u.dt, gp, rp))
            rhs.append(denom)
            tags.append(int(m))
    rep = EstimateReport.from_samples("difference", lhs, rhs, notes)
    ratios = np.array(rep.ratios)
    tags = np.array(tags)
    per_m = {int(m): float(ratios[tags == m].max()) if np.any(tags == m) else 0.0 for m in m_list}
    vals = [c for c in per_m.values() if c > 0]
    rep.extras.update({"m_list": [int(m) for m in m_list], "per_m_constant": per_m,
                       "m_spread": (max(vals) / min(vals)) if vals else 1.0,
                       "n": n, "K": b.K, "lam": lam})
    return rep


def loglog_slope(x, y):
    """Least-squares slope of log y against log x over the positive entries."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def _truncation_gap(trace, m, q, p, spec):
    full = spec.with_m(0)
    u = trace.grid_values
    diff = g_m_values(u, spec.with_m(m), trace.basis) - g_m_values(u, full, trace.basis)
    return _mixed_lp(diff, trace.basis.weights, trace.dt, q, p)


def verify_truncation_gap(trace_u, m_list, b, spec=None) -> EstimateReport:
    """||G_m(u) - G(u)||_{L^{gamma'} L^{rho'}} against
    |I|^{(n-1)/(2n)} m^{-1/(n(n-1))} ||u||^{(n^2-n+1)/(n(n-1))}_{L^inf W^{1,2}}
    ||u||^{2/(n-1)}_{L^gamma W^{1,rho}}.

    ``trace_u`` is a SolutionTrace or a list of them.  Extras report the
    log-log decay slope per trace and the ratio of the gap on the first half
    of the interval to the gap on the whole of it.  ``spec`` supplies lam and
    alpha (default lam = 1 at the critical power).
    """
    traces = [trace_u] if isinstance(trace_u, SolutionTrace) else list(trace_u)
    n = b.n
    spec = NonlinearitySpec() if spec is None else spec
    spec = spec.for_dimension(n)
    gamma, rho, gp, rp = _dual_pair(n)
    lhs, rhs, notes = [], [], []
    slopes, halving = [], []
    for k, tr in enumerate(traces):
        if tr.basis.basis_id != b.basis_id:
            raise UsageError("trace does not live on the given basis table")
        length = abs(tr.times[-1] - tr.times[0])
        linf = float(np.max(tr.sobolev(2)))
        lg = _mixed_sobolev(tr, gamma, rho)
        gaps = [_truncation_gap(tr, m, gp, rp, spec) for m in m_list]
        if not any(g > 0 for g in gaps):
            notes.append(f"trace {k}: truncation inactive (max|u| below every m)")
        for m, g in zip(m_list, gaps):
            structure = (length ** ((n - 1) / (2 * n)) * m ** (-1.0 / (n * (n - 1)))
                         * linf ** ((n * n - n + 1) / (n * (n - 1))) * lg ** (2.0 / (n - 1)))
            if structure > 0:
                lhs.append(g)
                rhs.append(structure)
        slopes.append(loglog_slope(m_list, gaps))
        half = len(tr) // 2
        if half >= 3 and gaps[0] > 0:
            sub = SolutionTrace(tr.times[: half + 1], tr.coeffs[: half + 1], tr.basis, tr.spec)
            halving.append(_truncation_gap(sub, m_list[0], gp, rp, spec) / gaps[0])
    rep = EstimateReport.from_samples("truncation_gap", lhs, rhs, notes)
    finite = [s for s in slopes if math.isfinite(s)]
    rep.extras.update({
        "m_list": [int(m) for m in m_list], "n": n, "K": b.K,
        "decay_slopes": slopes, "worst_decay_slope": max(finite) if finite else None,
        "target_slope": -1.0 / (n * (n - 1)),
        "halving_factors": halving,
        "max_halving_factor": max(halving) if halving else None,
        "halving_bound": 2.0 ** (-(n - 1) / (2 * n)),
    })
    return rep


def _derivative_images(basis, coeffs, spec):
    """Grid samples of G_m(u), Z_j G_m(u), Zbar_j G_m(u) by the chain rule."""
    n = basis.n
    u = basis.synthesize_array(coeffs)
    sigma = np.abs(u)
    p = np.asarray(psi_m(sigma, spec))
    dp = np.asarray(dpsi_m(sigma, spec))
    with np.errstate(divide="ignore", invalid="ignore"):
        dp_over = np.where(sigma > 0, dp / sigma, 0.0)
    out = {"Id": p * u}
    nodes = basis.nodes
    for j in range(n):
        zj = nodes[:, j] + 1j * nodes[:, n + j]
        zu = basis.ladder_image(coeffs, "Z", j)
        zbu = basis.ladder_image(coeffs, "Zbar", j)
        d_u = zu - 0.5 * np.conj(zj) * u          # (d_x - i d_y) u
        db_u = 0.5 * zj * u - zbu                  # (d_x + i d_y) u
        dx_u = 0.5 * (d_u + db_u)
        dy_u = (db_u - d_u) / 2j
        gx = dp_over * np.real(np.conj(u) * dx_u)  # d_x psi(|u|)
        gy = dp_over * np.real(np.conj(u) * dy_u)
        out[f"Z{j + 1}"] = p * zu + u * (gx - 1j * gy)
        out[f"Zbar{j + 1}"] = p * zbu - u * (gx + 1j * gy)
    return out


def verify_derivative_bound(specs: RandomFieldSpec, m_list, b, lam=1.0, T=0.5,
                            n_samples=32) -> EstimateReport:
    """||S G_m(u)||_{L^{gamma'} L^{rho'}} against ||u||^{(n+1)/(n-1)}_{L^gamma W^{1,rho}}
    for S in {Id, Z_j, Zbar_j}; extras hold the fitted constant per S.

    S G_m(u) is evaluated pointwise from exact samples of u, Z_j u and Zbar_j u,
    so no ladder truncation enters.
    """
    n = b.n
    gamma, rho, gp, rp = _dual_pair(n)
    alpha = 2.0 / (n - 1)
    expo = (n + 1) / (n - 1)
    traces = random_traces(specs, b, T, n_samples, stream=4)
    lhs, rhs, tags = [], [], []
    for tr in traces:
        size = _mixed_sobolev(tr, gamma, rho) ** expo
        for m in m_list:
            spec = NonlinearitySpec(lam=lam, alpha=alpha, m=int(m))
            imgs = _derivative_images(b, tr.coeffs, spec)
            for name, vals in imgs.items():
                if size > 0:
                    lhs.append(_mixed_lp(vals, b.weights, tr.dt, gp, rp))
                    rhs.append(size)
                    tags.append(name)
    rep = EstimateReport.from_samples("derivative", lhs, rhs)
    ratios, tags = np.array(rep.ratios), np.array(tags)
    rep.extras.update({
        "per_operator_constant": {s: float(ratios[tags == s].max()) for s in sorted(set(tags))},
        "exponent": expo, "n": n, "K": b.K, "m_list": [int(m) for m in m_list],
    })
    return rep


def conservation_report(trace: SolutionTrace) -> dict:
    """Relative drifts of charge, the untruncated energy E and the truncated E_m."""
    spec = trace.spec
    if spec.alpha is None:
        spec = spec.for_dimension(trace.basis.n)
    charge = trace.charge()
    e_m = trace.energy(spec)
    e = trace.energy(spec.with_m(0))

    def drift(x):
        ref = abs(x[0])
        d = np.abs(x - x[0])
        return d / ref if ref > 0 else d

    out = {"t": trace.times, "charge_drift": drift(charge),
           "energy_drift": drift(e), "energy_m_drift": drift(e_m)}
    out.update({f"max_{k}": float(np.max(v)) for k, v in list(out.items()) if k != "t"})
    return out


def stability_experiment(f: SpectralField, eps_list, spec, cfg: SolverConfig,
                         direction: SpectralField | None = None, seed=0) -> dict:
    """Solution differences for data f + eps * g against eps.

    Rows hold eps, ||f - f_eps||_{W^{1,2}}, the difference norms in
    L^gamma(I, W^{1,rho}) and L^inf(I, W^{1,2}), and their ratios to eps.
    """
    b = f.basis
    if direction is None:
        direction = random_fields(RandomFieldSpec(seed=seed, amplitude_law="fixed",
                                                  amp_min=1.0, count=1), b, stream=5)[0]
    pairs = {"canonical": strichartz_pair(b.n) if b.n > 1 else (INF, 2.0), "energy": (INF, 2.0)}
    rows, flags = [], []
    try:
        base = solve(f, spec, cfg)
    except NonConvergenceError as exc:
        return {"rows": rows, "flags": [f"base solve failed: {exc}"], "complete": False}
    for eps in eps_list:
        row = {"eps": float(eps),
               "data_distance": float(sobolev_norms(b, eps * direction.coeffs, 2))}
        try:
            pert = solve(f + eps * direction, spec, cfg)
        except NonConvergenceError as exc:
            flags.append(f"eps={eps:g}: {exc}")
            row["failed"] = True
            rows.append(row)
            continue
        diff = base.coeffs - pert.coeffs
        for name, (q, p) in pairs.items():
            per_t = np.atleast_1d(sobolev_norms(b, diff, p))
            val = time_lq(per_t, base.dt, q)
            row[f"diff_{name}"] = val
            row[f"ratio_{name}"] = val / eps if eps > 0 else float("nan")
        rows.append(row)
    ok = [r for r in rows if not r.get("failed") and r["eps"] > 0]
    summary = {}
    for name in pairs:
        ratios = [r[f"ratio_{name}"] for r in ok]
        diffs = [r[f"diff_{name}"] for r in sorted(ok, key=lambda r: -r["eps"])]
        summary[name] = {
            "monotone": all(a > b_ for a, b_ in zip(diffs, diffs[1:])),
            "ratio_spread": (max(ratios) / min(ratios)) if ratios and min(ratios) > 0 else None,
        }
    return {"rows": rows, "flags": flags, "summary": summary, "complete": not flags}


def blowup_monitor(f: SpectralField, spec, cfg: SolverConfig, pair, threshold=1e3) -> dict:
    """Running ||u||_{L^q((t0, t), W^{1,p})} along a split-step solve.

    The pair must be admissible with p > 2.  A failed nonlinear substep or a
    running value above ``threshold`` is flagged; no claim about a blowup
    time is made.
    """
    q, p = pair
    if not admissible(q, p, f.basis.n):
        raise PreconditionError(f"pair (q={q}, p={p}) is not admissible for n={f.basis.n}")
    if _frac(p) <= 2:
        raise PreconditionError("the blowup alternative needs p > 2")
    qf, pf = float(_frac(q)), float(_frac(p))
    spec = _prepare(f, spec)
    b = f.basis
    dt = cfg.dt
    phase = np.exp(-1j * dt * b.eigenvalues)
    c = f.coeffs.copy()
    times, norms = [cfg.t0], [float(sobolev_norms(b, c, pf))]
    flags = []
    for k in range(cfg.n_steps):
        try:
            c = _midpoint_step(b, c, spec, 0.5 * dt, cfg.midpoint_tol)
            c = phase * c
            c = _midpoint_step(b, c, spec, 0.5 * dt, cfg.midpoint_tol)
        except NonConvergenceError as exc:
            flags.append({"t": float(cfg.times[k]), "kind": "solver_failure", "detail": str(exc)})
            break
        if not np.all(np.isfinite(c)):
            flags.append({"t": float(cfg.times[k]), "kind": "non_finite"})
            break
        times.append(float(cfg.times[k + 1]))
        norms.append(float(sobolev_norms(b, c, pf)))
    norms = np.array(norms)
    if math.isinf(qf):
        running = np.maximum.accumulate(norms)
    else:
        seg = 0.5 * abs(dt) * (norms[1:] ** qf + norms[:-1] ** qf)
        running = np.concatenate([[0.0], np.cumsum(seg)]) ** (1.0 / qf)
    over = np.nonzero(running > threshold)[0]
    if over.size:
        flags.append({"t": times[over[0]], "kind": "growth", "value": float(running[over[0]])})
    return {"t": np.array(times), "space_norm": norms, "running": running,
            "flags": flags, "growth": bool(flags), "pair": (str(q), str(p))}
